"""Covariance estimators: SCM, Kronecker moment baseline (KNSCM), the
Kronecker maximum-likelihood estimator, and the robust shrinkage Kronecker
fixed point, plus cost evaluation, residuals and well-posedness checks.

The shrinkage fixed point solves, for factors (Rst, Rp) and shrinkage
weights (rho_st, rho_p),

    Rst = (1 - rho_st) (n_st/L) sum_l (Y_l^H Rp^{-1} Y_l) / q_l + rho_st I
    Rp  = (1 - rho_p)  (n_p/L)  sum_l (Y_l Rst^{-1} Y_l^H) / q_l + rho_p  I

with q_l = Tr(Rst^{-1} Y_l^H Rp^{-1} Y_l), by alternating sweeps that
refresh the space-time factor first and then the polarization factor
against the refreshed space-time factor.  Each sweep decreases the
penalized negative log-likelihood (see `penalized_nll`); iteration stops
when the trace-normalized product moves less than `delta` in Frobenius
norm or the sweep budget runs out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from ._kernels_numpy import (
    STATUS_CONVERGED,
    STATUS_DEGENERATE,
    STATUS_NOT_PD_P,
    STATUS_NOT_PD_ST,
    _accum_p,
    _accum_st,
    _chol_logdet_inv,
)
from .errors import (
    ConfigError,
    DegenerateSampleError,
    DimensionMismatchError,
    ExistenceError,
    IllConditionedError,
    NotPositiveDefiniteError,
)
from .matcore import MATERIALIZE_CAP, KroneckerCov, identity_cov


@dataclass(frozen=True)
class ShrinkageFactors:
    """Shrinkage weight pair with selection provenance.

    `method` is one of manual | koas | cv | oracle; `flags` records
    selector events (degenerate denominators, bound raises).
    """

    rho_st: float
    rho_p: float
    method: str = "manual"
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name, v in (("rho_st", self.rho_st), ("rho_p", self.rho_p)):
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")

    def alpha_st(self, n_p):
        """Penalty weight n_p * rho / (1 - rho); finite only for rho < 1."""
        if self.rho_st >= 1.0:
            return math.inf
        return n_p * self.rho_st / (1.0 - self.rho_st)

    def alpha_p(self, n_st):
        if self.rho_p >= 1.0:
            return math.inf
        return n_st * self.rho_p / (1.0 - self.rho_p)


@dataclass(frozen=True)
class SolverConfig:
    delta: float = 1e-3
    k_max: int = 15
    init: KroneckerCov | None = None

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")


@dataclass(frozen=True)
class SolverReport:
    """Solve outcome: converged factors plus the iteration diagnostics.

    `cost_trace` holds the penalized cost at the initial point and after
    every half-update (space-time, then polarization), so monotone descent
    is checkable at half-update granularity.  Empty when either shrinkage
    factor is 1 (the cost is undefined there).
    """

    cov: KroneckerCov
    rho: ShrinkageFactors
    iterations: int
    converged: bool
    d_final: float
    d_trace: np.ndarray
    cost_trace: np.ndarray
    residual_st: float
    residual_p: float

    def to_dict(self):
        return {
            "rho_st": self.rho.rho_st,
            "rho_p": self.rho.rho_p,
            "method": self.rho.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "d_final": self.d_final,
            "d_trace": [float(v) for v in self.d_trace],
            "cost_trace": [float(v) for v in self.cost_trace],
            "residual_st": self.residual_st,
            "residual_p": self.residual_p,
            "st": _complex_matrix_dict(self.cov.st),
            "p": _complex_matrix_dict(self.cov.p),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _complex_matrix_dict(m):
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


@dataclass(frozen=True)
class ExistenceConfig:
    """Weight splitting the well-posedness budget between the two factors."""

    beta1: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.beta1 <= 1.0):
            raise ConfigError("beta1 must lie in [0, 1]")

    @property
    def beta2(self):
        return 1.0 - self.beta1


def existence_bounds(n_samples, n_st, n_p, beta=ExistenceConfig()):
    """Shrinkage lower bounds guaranteeing a well-posed fixed point for the
    given budget split; clamped at 0 since the factors live in [0, 1]."""
    n = n_st * n_p
    b1, b2 = beta.beta1, beta.beta2
    b_st = 1.0 - n_samples * n_p / (b1 * max(n_st, n_samples * n_p) + b2 * n_samples * n)
    b_p = 1.0 - n_samples * n_st / (b2 * max(n_p, n_samples * n_st) + b1 * n_samples * n)
    return max(b_st, 0.0), max(b_p, 0.0)


def existence_envelope(n_samples, n_st, n_p):
    """Least-restrictive per-factor bounds over all budget splits.

    The space-time bound is loosest when the whole budget goes to that
    factor, and symmetrically for the polarization bound.  The solver's
    well-posedness gate uses this envelope: a pair below it is outside
    every sufficient condition in the family.
    """
    b_st, _ = existence_bounds(n_samples, n_st, n_p, ExistenceConfig(beta1=1.0))
    _, b_p = existence_bounds(n_samples, n_st, n_p, ExistenceConfig(beta1=0.0))
    return b_st, b_p


def existence_check(n_samples, n_st, n_p, rho, beta=ExistenceConfig(), samples=None):
    """Strict sufficient-condition check for the given budget split.

    Returns ``(ok, (bound_st, bound_p))``.  When a SampleSet is supplied,
    the no-all-zero-row/column condition on the data is verified as well.
    """
    b_st, b_p = existence_bounds(n_samples, n_st, n_p, beta)
    ok = rho.rho_st > b_st and rho.rho_p > b_p
    if samples is not None:
        data = samples.data
        if np.any(np.all(data == 0, axis=2)) or np.any(np.all(data == 0, axis=1)):
            ok = False
    return ok, (b_st, b_p)


def scm(samples):
    """Sample covariance matrix of the vec'd samples (baseline, N x N)."""
    if samples.n > MATERIALIZE_CAP:
        raise DimensionMismatchError(
            f"SCM materializes N={samples.n} > cap={MATERIALIZE_CAP}"
        )
    v = samples.vecs()
    return np.einsum("li,lj->ij", v, v.conj()) / samples.n_samples


def knscm(samples):
    """Kronecker moments of the norm-normalized samples (non-iterative).

    Both factors come out with trace equal to their dimension exactly.
    """
    y = samples.data
    norms = np.einsum("lpi,lpi->l", y, y.conj()).real
    if np.any(norms <= 0.0):
        raise DegenerateSampleError(
            f"sample {int(np.argmin(norms))} has zero norm", sample=int(np.argmin(norms))
        )
    w = 1.0 / norms
    rst = (samples.n_st / samples.n_samples) * np.einsum(
        "lpi,lpj,l->ij", y.conj(), y, w, optimize=True
    )
    rp = (samples.n_p / samples.n_samples) * np.einsum(
        "lpi,lqi,l->pq", y, y.conj(), w, optimize=True
    )
    return KroneckerCov(0.5 * (rst + rst.conj().T), 0.5 * (rp + rp.conj().T))


def _raise_for_status(status, bad, sweeps):
    if status == STATUS_NOT_PD_ST:
        raise IllConditionedError(
            f"space-time factor lost positive definiteness at sweep {sweeps}",
            factor="st", sweep=sweeps,
        )
    if status == STATUS_NOT_PD_P:
        raise IllConditionedError(
            f"polarization factor lost positive definiteness at sweep {sweeps}",
            factor="p", sweep=sweeps,
        )
    if status == STATUS_DEGENERATE:
        raise DegenerateSampleError(
            f"sample {bad} produced a vanishing quadratic form", sample=bad
        )


def rske(samples, rho, cfg=SolverConfig(), force=False):
    """Robust shrinkage Kronecker estimate of the covariance factor pair.

    Refuses to run when the shrinkage pair sits below the well-posedness
    envelope for the data size (override with ``force=True``).  At zero
    shrinkage the factor scales are rebalanced on exit so the polarization
    factor has trace n_p; positive shrinkage pins the scales by itself.
    """
    y = samples.data
    n_l, n_p, n_st = y.shape
    b_st, b_p = existence_envelope(n_l, n_st, n_p)
    if not force and (rho.rho_st < b_st - 1e-12 or rho.rho_p < b_p - 1e-12):
        raise ExistenceError(
            f"shrinkage ({rho.rho_st:.4f}, {rho.rho_p:.4f}) below the well-posedness "
            f"envelope ({b_st:.4f}, {b_p:.4f}) for L={n_l}, n_st={n_st}, n_p={n_p}; "
            "raise the factors or pass force=True",
            bounds=(b_st, b_p),
        )
    init = cfg.init if cfg.init is not None else identity_cov(n_st, n_p)
    if init.n_st != n_st or init.n_p != n_p:
        raise DimensionMismatchError("initial factors do not match the data dimensions")

    rst, rp, sweeps, d, d_trace, cost_trace, n_cost, status, bad = kernels.solve_fixed_point(
        np.ascontiguousarray(y),
        float(rho.rho_st), float(rho.rho_p),
        np.ascontiguousarray(init.st), np.ascontiguousarray(init.p),
        float(cfg.delta), int(cfg.k_max),
    )
    _raise_for_status(status, bad, sweeps)

    if rho.rho_st == 0.0 and rho.rho_p == 0.0:
        # fix the scale gauge left free by the unpenalized cost
        s = np.trace(rp).real / n_p
        rp = rp / s
        rst = rst * s
    cov = KroneckerCov(rst, rp)
    res_st, res_p = fixed_point_residual(cov, samples, rho)
    return SolverReport(
        cov=cov,
        rho=rho,
        iterations=sweeps,
        converged=status == STATUS_CONVERGED,
        d_final=float(d),
        d_trace=d_trace[:sweeps].copy(),
        cost_trace=cost_trace[:n_cost].copy(),
        residual_st=res_st,
        residual_p=res_p,
    )


def kmle(samples, cfg=SolverConfig()):
    """Kronecker maximum-likelihood estimate: the zero-shrinkage fixed point."""
    n_l, n_p, n_st = samples.data.shape
    if not (n_l * n_p > n_st and n_l * n_st > n_p):
        raise ExistenceError(
            f"KMLE needs L*n_p > n_st and L*n_st > n_p (got L={n_l}, n_st={n_st}, "
            f"n_p={n_p}); use shrinkage instead",
            bounds=existence_envelope(n_l, n_st, n_p),
        )
    return rske(samples, ShrinkageFactors(0.0, 0.0, method="manual"), cfg)


def _inverses(cov):
    m_st, ld_st, ok = _chol_logdet_inv(cov.st)
    if not ok:
        raise NotPositiveDefiniteError("space-time factor is not positive definite", "st")
    m_p, ld_p, ok = _chol_logdet_inv(cov.p)
    if not ok:
        raise NotPositiveDefiniteError("polarization factor is not positive definite", "p")
    return m_st, ld_st, m_p, ld_p


def penalized_nll(cov, samples, rho):
    """Penalized negative log-likelihood of a factor pair on a sample set.

    Undefined at shrinkage 1 (the penalty weight diverges).
    """
    if rho.rho_st >= 1.0 or rho.rho_p >= 1.0:
        raise ConfigError("penalized cost is undefined at shrinkage factor 1")
    y = samples.data
    n_l, n_p, n_st = y.shape
    m_st, ld_st, m_p, ld_p = _inverses(cov)
    _, slq, status, bad = _accum_st(y, m_p, m_st)
    _raise_for_status(status, bad, 0)
    return float(
        n_p / (1.0 - rho.rho_st) * ld_st
        + n_st / (1.0 - rho.rho_p) * ld_p
        + (n_p * n_st / n_l) * slq
        + rho.alpha_st(n_p) * np.trace(m_st).real
        + rho.alpha_p(n_st) * np.trace(m_p).real
    )


def fixed_point_rhs(cov, samples, rho):
    """Right-hand sides of both fixed-point equations evaluated at `cov`."""
    y = samples.data
    n_st, n_p = samples.n_st, samples.n_p
    m_st, _, m_p, _ = _inverses(cov)
    c_st, _, status, bad = _accum_st(y, m_p, m_st)
    _raise_for_status(status, bad, 0)
    c_p, _, status, bad = _accum_p(y, m_st, m_p)
    _raise_for_status(status, bad, 0)
    rhs_st = (1.0 - rho.rho_st) * c_st + rho.rho_st * np.eye(n_st)
    rhs_p = (1.0 - rho.rho_p) * c_p + rho.rho_p * np.eye(n_p)
    return rhs_st, rhs_p


def fixed_point_residual(cov, samples, rho):
    """Per-factor relative Frobenius residual of the fixed-point equations."""
    rhs_st, rhs_p = fixed_point_rhs(cov, samples, rho)
    res_st = np.linalg.norm(cov.st - rhs_st) / np.linalg.norm(cov.st)
    res_p = np.linalg.norm(cov.p - rhs_p) / np.linalg.norm(cov.p)
    return float(res_st), float(res_p)
