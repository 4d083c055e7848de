"""Estimator comparison metrics: normalized MSE, SCNR loss, condition numbers.

All three accept either a factor pair (computed factorized, never forming
the N x N product) or a full materialized estimate such as the SCM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .matcore import (
    KroneckerCov,
    apply_cov,
    apply_inverse,
    cond_number,
    hermitian_eig,
    hermitize,
    quad_form,
    to_full,
    vec,
)


def _is_pair(est):
    return isinstance(est, KroneckerCov)


def nmse(est, truth):
    """Squared Frobenius distance of the trace-normalized estimate from the
    trace-normalized truth, relative to the truth's squared norm."""
    c = truth.st / np.trace(truth.st)
    d = truth.p / np.trace(truth.p)
    den = np.vdot(c, c).real * np.vdot(d, d).real
    if _is_pair(est):
        a = est.st / np.trace(est.st)
        b = est.p / np.trace(est.p)
        na = np.vdot(a, a).real * np.vdot(b, b).real
        cross = (np.vdot(a, c) * np.vdot(b, d)).real
        return float(max(na - 2.0 * cross + den, 0.0) / den)
    full = np.asarray(est)
    truth_full = to_full(truth)
    if full.shape != truth_full.shape:
        raise DimensionMismatchError(
            f"estimate shape {full.shape} does not match truth N={truth.n}"
        )
    a = full / np.trace(full)
    t = truth_full / np.trace(truth_full)
    return float(np.linalg.norm(a - t) ** 2 / np.linalg.norm(t) ** 2)


def _pinv_hermitian(a, rcond=1e-12):
    w, v = hermitian_eig(hermitize(a))
    cut = rcond * max(w[0], 0.0)
    inv_w = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return (v * inv_w) @ v.conj().T


def scnr_loss(s_mat, est, truth):
    """Output SCNR of the adaptive filter built from the estimate, relative
    to the clairvoyant filter; 1 exactly when the estimate matches the truth
    up to scale.  Rank-deficient full estimates fall back to a pseudo-inverse
    filter."""
    s_mat = np.asarray(s_mat, dtype=np.complex128)
    if _is_pair(est):
        base = quad_form(s_mat, est)
        z = apply_inverse(s_mat, est)
        mid = np.vdot(z, apply_cov(z, truth)).real
    else:
        full = np.asarray(est)
        s_vec = vec(s_mat)
        x = _pinv_hermitian(full) @ s_vec
        base = np.vdot(s_vec, x).real
        mid = np.vdot(x, to_full(truth) @ x).real
    den = quad_form(s_mat, truth)
    return float(base * base / (mid * den))


def cond_report(est):
    """(cond_st, cond_p, cond_full); the full value is the factor product
    for a pair, and nan/nan/cond for a materialized estimate."""
    if _is_pair(est):
        c_st = cond_number(est.st)
        c_p = cond_number(est.p)
        return c_st, c_p, c_st * c_p
    return np.nan, np.nan, cond_number(np.asarray(est))


@dataclass(frozen=True)
class MetricRecord:
    estimator: str
    nmse: float
    scnr_loss: float
    cond_st: float
    cond_p: float
    cond_full: float
    rho_st: float = np.nan
    rho_p: float = np.nan
    seed: int = 0
    config_digest: str = ""


def evaluate(est, truth, s_mat, estimator="", rho=None, seed=0, digest=""):
    """Bundle the three metrics for one estimate into a MetricRecord."""
    c_st, c_p, c_full = cond_report(est)
    return MetricRecord(
        estimator=estimator,
        nmse=nmse(est, truth),
        scnr_loss=scnr_loss(s_mat, est, truth),
        cond_st=c_st,
        cond_p=c_p,
        cond_full=c_full,
        rho_st=rho.rho_st if rho is not None else np.nan,
        rho_p=rho.rho_p if rho is not None else np.nan,
        seed=seed,
        config_digest=digest,
    )


def mean_ci95(values):
    """Sample mean and normal-approximation 95% half-width."""
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return np.nan, np.nan
    if arr.size == 1:
        return float(arr[0]), np.nan
    return float(arr.mean()), float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size))
