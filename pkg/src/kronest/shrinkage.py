"""Automatic selection of the shrinkage factor pair.

Three routes with different cost/fidelity trade-offs:

* `koas_factors` — closed-form minimum-MSE weights evaluated on plug-in
  factor estimates (one formula per factor, O(dim^2)).
* `cv_factors_fast` — closed-form leave-one-out quadratic-loss minimizer,
  algebraically collapsed so no refitting is needed; `cv_factors_naive`
  evaluates the same criterion by explicitly building every
  leave-one-out average and exists as the testing oracle.
* `oracle_factors` — grid search minimizing the normalized MSE against a
  known true covariance, one full solve per grid point (expensive,
  benchmark use only).

Selected factors are clamped to [0, 1]; a selection below the
well-posedness envelope for the data size is raised to the envelope plus a
small margin and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateSampleError, ExistenceError, IllConditionedError
from .estimators import (
    ShrinkageFactors,
    SolverConfig,
    existence_envelope,
    kmle,
    knscm,
    rske,
)
from .matcore import KroneckerCov
from .metrics import nmse

BOUND_MARGIN = 0.01


@dataclass(frozen=True)
class PlugIn:
    """Trace-normalized factor pair standing in for the unknown truth."""

    cov: KroneckerCov
    source: str = "custom"

    def __post_init__(self):
        st = self.cov.st * (self.cov.n_st / np.trace(self.cov.st).real)
        p = self.cov.p * (self.cov.n_p / np.trace(self.cov.p).real)
        object.__setattr__(self, "cov", KroneckerCov(st, p))

    @classmethod
    def from_knscm(cls, samples):
        return cls(knscm(samples), source="knscm")

    @classmethod
    def from_kmle(cls, samples, cfg=SolverConfig()):
        return cls(kmle(samples, cfg).cov, source="kmle")


def _apply_envelope_guard(rho_st, rho_p, n_samples, n_st, n_p, flags):
    b_st, b_p = existence_envelope(n_samples, n_st, n_p)
    if b_st > 0.0 and rho_st < b_st:
        rho_st = min(b_st + BOUND_MARGIN, 1.0)
        flags.append("raised_st_to_bound")
    if b_p > 0.0 and rho_p < b_p:
        rho_p = min(b_p + BOUND_MARGIN, 1.0)
        flags.append("raised_p_to_bound")
    return rho_st, rho_p


def _koas_single(t, t2, dim, other_dim, n, n_samples):
    num = t * t - t2 / dim
    den = (
        t * t
        + (1.0 - 2.0 * t / dim) * (n_samples * n + n_samples)
        + (other_dim * n_samples + (n_samples - 1.0) / dim) * t2
    )
    if den <= 0.0:
        return 1.0
    return min(max(num / den, 0.0), 1.0)


def koas_factors(plug, n_samples):
    """Minimum-MSE shrinkage weights from plug-in factors, clamped to [0, 1]."""
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    cov = plug.cov
    n_st, n_p = cov.n_st, cov.n_p
    n = n_st * n_p
    t_st = np.trace(cov.st).real
    t2_st = np.vdot(cov.st, cov.st).real
    t_p = np.trace(cov.p).real
    t2_p = np.vdot(cov.p, cov.p).real
    rho_st = _koas_single(t_st, t2_st, n_st, n_p, n, n_samples)
    rho_p = _koas_single(t_p, t2_p, n_p, n_st, n, n_samples)
    flags = []
    rho_st, rho_p = _apply_envelope_guard(rho_st, rho_p, n_samples, n_st, n_p, flags)
    return ShrinkageFactors(rho_st, rho_p, method="koas", flags=tuple(flags))


@dataclass(frozen=True)
class CVWorkspace:
    """Per-sample normalized moment matrices and their averages."""

    s_st: np.ndarray  # (L, n_st, n_st)
    s_p: np.ndarray   # (L, n_p, n_p)
    c_st: np.ndarray
    c_p: np.ndarray

    def loo_st(self, idx):
        """Leave-one-out average built from its defining sum (oracle path)."""
        n_l = self.s_st.shape[0]
        mask = np.arange(n_l) != idx
        return self.s_st[mask].mean(axis=0)

    def loo_p(self, idx):
        n_l = self.s_p.shape[0]
        mask = np.arange(n_l) != idx
        return self.s_p[mask].mean(axis=0)


def build_cv_workspace(samples, plug):
    """Normalized per-sample moments against the plug-in factor pair."""
    y = samples.data
    n_l, n_p, n_st = y.shape
    m_p = np.linalg.inv(plug.cov.p)
    m_st = np.linalg.inv(plug.cov.st)
    a = np.einsum("lpi,pq,lqj->lij", y.conj(), m_p, y, optimize=True)
    q = np.einsum("lij,ji->l", a, m_st).real
    if np.any(q <= 0.0):
        bad = int(np.argmin(q))
        raise DegenerateSampleError(f"sample {bad} has a nonpositive quadratic form", bad)
    b = np.einsum("lpi,ij,lqj->lpq", y, m_st, y.conj(), optimize=True)
    s_st = n_st * a / q[:, None, None]
    s_p = n_p * b / q[:, None, None]
    return CVWorkspace(s_st=s_st, s_p=s_p, c_st=s_st.mean(axis=0), c_p=s_p.mean(axis=0))


def _cv_single_fast(tr_c, tr_c2, sum_s2, dim, n_l):
    num = (sum_s2 - n_l * tr_c2) / (n_l - 1.0) ** 2
    den = (
        dim
        - 2.0 * tr_c
        + n_l * (n_l - 2.0) / (n_l - 1.0) ** 2 * tr_c2
        + sum_s2 / (n_l * (n_l - 1.0) ** 2)
    )
    if den <= 0.0:
        return 0.0, True
    return min(max(num / den, 0.0), 1.0), False


def cv_factors_fast(samples, plug):
    """Closed-form leave-one-out selection of both shrinkage factors."""
    n_l = samples.n_samples
    if n_l < 2:
        raise ConfigError("leave-one-out selection needs at least two samples")
    ws = build_cv_workspace(samples, plug)
    sum_s2_st = float(np.einsum("lij,lij->", ws.s_st.conj(), ws.s_st).real)
    sum_s2_p = float(np.einsum("lij,lij->", ws.s_p.conj(), ws.s_p).real)
    rho_st, deg_st = _cv_single_fast(
        np.trace(ws.c_st).real, np.vdot(ws.c_st, ws.c_st).real, sum_s2_st,
        samples.n_st, n_l,
    )
    rho_p, deg_p = _cv_single_fast(
        np.trace(ws.c_p).real, np.vdot(ws.c_p, ws.c_p).real, sum_s2_p,
        samples.n_p, n_l,
    )
    flags = []
    if deg_st:
        flags.append("degenerate_denominator_st")
    if deg_p:
        flags.append("degenerate_denominator_p")
    rho_st, rho_p = _apply_envelope_guard(
        rho_st, rho_p, n_l, samples.n_st, samples.n_p, flags
    )
    return ShrinkageFactors(rho_st, rho_p, method="cv", flags=tuple(flags))


def _cv_single_naive(s, dim, n_l):
    eye = np.eye(dim)
    num = 0.0
    den = 0.0
    for idx in range(n_l):
        c_l = (s.sum(axis=0) - s[idx]) / (n_l - 1.0)
        gap = eye - c_l
        num += np.einsum("ij,ji->", gap, s[idx] - c_l).real
        den += np.einsum("ij,ji->", gap, gap).real
    if den <= 0.0:
        return 0.0, True
    return min(max(num / den, 0.0), 1.0), False


def cv_factors_naive(samples, plug):
    """Literal leave-one-out evaluation of the CV criterion (testing oracle)."""
    n_l = samples.n_samples
    if n_l < 2:
        raise ConfigError("leave-one-out selection needs at least two samples")
    ws = build_cv_workspace(samples, plug)
    rho_st, deg_st = _cv_single_naive(ws.s_st, samples.n_st, n_l)
    rho_p, deg_p = _cv_single_naive(ws.s_p, samples.n_p, n_l)
    flags = []
    if deg_st:
        flags.append("degenerate_denominator_st")
    if deg_p:
        flags.append("degenerate_denominator_p")
    rho_st, rho_p = _apply_envelope_guard(
        rho_st, rho_p, n_l, samples.n_st, samples.n_p, flags
    )
    return ShrinkageFactors(rho_st, rho_p, method="cv", flags=tuple(flags))


def shrinkage_grid(step=0.02, upper=0.98):
    return np.round(np.arange(0.0, upper + step / 2.0, step), 10)


def oracle_nmse_surface(samples, truth, step=0.02, cfg=SolverConfig(), upper=0.98):
    """NMSE of the solved estimate against the truth over a shrinkage grid.

    Grid points outside the well-posedness envelope, or where the solve
    degenerates, carry +inf.  Cost is one solve per grid point.
    """
    grid = shrinkage_grid(step, upper)
    surface = np.full((grid.size, grid.size), np.inf)
    for i, r_st in enumerate(grid):
        for j, r_p in enumerate(grid):
            try:
                rep = rske(samples, ShrinkageFactors(float(r_st), float(r_p)), cfg)
            except (ExistenceError, IllConditionedError, DegenerateSampleError):
                continue
            surface[i, j] = nmse(rep.cov, truth)
    return grid, surface


def oracle_factors(samples, truth, step=0.02, cfg=SolverConfig(), upper=0.98):
    """Grid-search the shrinkage pair minimizing NMSE against a known truth."""
    grid, surface = oracle_nmse_surface(samples, truth, step, cfg, upper)
    if not np.isfinite(surface).any():
        raise IllConditionedError("no grid point produced a usable solve")
    i, j = np.unravel_index(int(np.argmin(surface)), surface.shape)
    return ShrinkageFactors(float(grid[i]), float(grid[j]), method="oracle")
