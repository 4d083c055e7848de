"""Pure-numpy reference kernels for the fixed-point solver.

`solve_fixed_point` runs the alternating shrinkage update: the space-time
factor is refreshed first, then the polarization factor is refreshed using
the *updated* space-time factor in both its numerator and its denominator
(sequential sweep).  The penalized negative log-likelihood is recorded after
every half-update at no extra cost because each half-step's quadratic forms
are exactly the next half-step's inputs.

Status codes shared with the numba backend:
    0 converged, 1 sweep budget exhausted, 2/3 st/p factor lost positive
    definiteness, 4 degenerate sample (vanishing quadratic form).
"""

from __future__ import annotations

import numpy as np

QUAD_FLOOR = 1e-300
_CHUNK = 8192

STATUS_CONVERGED = 0
STATUS_MAXITER = 1
STATUS_NOT_PD_ST = 2
STATUS_NOT_PD_P = 3
STATUS_DEGENERATE = 4


def _chol_logdet_inv(a):
    """(inverse, logdet, ok) of a Hermitian PD matrix via Cholesky."""
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return a, 0.0, False
    logdet = 2.0 * float(np.sum(np.log(np.diag(low).real)))
    tinv = np.linalg.inv(low)
    return tinv.conj().T @ tinv, logdet, True


def _accum_st(y, m_p, m_st):
    """Sum of Y^H Rp^{-1} Y / q over samples, plus sum of log q.

    q is the quadratic form Tr(Rst^{-1} Y^H Rp^{-1} Y) at the factors whose
    inverses are supplied.  Returns (C_st_raw, sum_log_q, status, bad_l)
    where C_st_raw = (n_st / L) * sum.
    """
    n_samples, _, n_st = y.shape
    acc = np.zeros((n_st, n_st), dtype=np.complex128)
    slq = 0.0
    for start in range(0, n_samples, _CHUNK):
        blk = y[start:start + _CHUNK]
        a = np.einsum("lpi,pq,lqj->lij", blk.conj(), m_p, blk, optimize=True)
        q = np.einsum("lij,ji->l", a, m_st).real
        if np.any(q < QUAD_FLOOR) or not np.all(np.isfinite(q)):
            bad = int(np.argmin(np.where(np.isfinite(q), q, -np.inf))) + start
            return acc, slq, STATUS_DEGENERATE, bad
        acc += np.einsum("lij,l->ij", a, 1.0 / q)
        slq += float(np.sum(np.log(q)))
    return (n_st / n_samples) * acc, slq, STATUS_CONVERGED, -1


def _accum_p(y, m_st, m_p):
    """Sum of Y Rst^{-1} Y^H / q over samples, plus sum of log q."""
    n_samples, n_p, _ = y.shape
    acc = np.zeros((n_p, n_p), dtype=np.complex128)
    slq = 0.0
    for start in range(0, n_samples, _CHUNK):
        blk = y[start:start + _CHUNK]
        b = np.einsum("lpi,ij,lqj->lpq", blk, m_st, blk.conj(), optimize=True)
        q = np.einsum("lpq,qp->l", b, m_p).real
        if np.any(q < QUAD_FLOOR) or not np.all(np.isfinite(q)):
            bad = int(np.argmin(np.where(np.isfinite(q), q, -np.inf))) + start
            return acc, slq, STATUS_DEGENERATE, bad
        acc += np.einsum("lpq,l->pq", b, 1.0 / q)
        slq += float(np.sum(np.log(q)))
    return (n_p / n_samples) * acc, slq, STATUS_CONVERGED, -1


def _normalized_kron_dist(st1, p1, st0, p0):
    a = st1 / np.trace(st1)
    b = p1 / np.trace(p1)
    c = st0 / np.trace(st0)
    d = p0 / np.trace(p0)
    na = np.vdot(a, a).real * np.vdot(b, b).real
    nc = np.vdot(c, c).real * np.vdot(d, d).real
    cross = (np.vdot(a, c) * np.vdot(b, d)).real
    return float(np.sqrt(max(na - 2.0 * cross + nc, 0.0)))


def solve_fixed_point(y, rho_st, rho_p, rst0, rp0, delta, k_max):
    """Alternating fixed-point solve for the shrunk Kronecker factor pair.

    Parameters
    ----------
    y : (L, n_p, n_st) complex ndarray
    rho_st, rho_p : shrinkage factors in [0, 1]
    rst0, rp0 : positive-definite initial factors
    delta : stopping threshold on the normalized-product distance
    k_max : sweep budget

    Returns
    -------
    (rst, rp, n_sweeps, d_final, d_trace, cost_trace, n_cost, status, bad_l)
    """
    n_samples, n_p, n_st = y.shape
    n_total = n_p * n_st
    track_cost = rho_st < 1.0 and rho_p < 1.0
    if track_cost:
        alpha_st = n_p * rho_st / (1.0 - rho_st)
        alpha_p = n_st * rho_p / (1.0 - rho_p)
    else:
        alpha_st = alpha_p = np.nan

    eye_st = np.eye(n_st, dtype=np.complex128)
    eye_p = np.eye(n_p, dtype=np.complex128)
    d_trace = np.full(k_max, np.nan)
    cost_trace = np.full(2 * k_max + 1, np.nan)
    n_cost = 0

    def cost(ld_st, ld_p, slq, tr_mst, tr_mp):
        return (
            n_p / (1.0 - rho_st) * ld_st
            + n_st / (1.0 - rho_p) * ld_p
            + (n_total / n_samples) * slq
            + alpha_st * tr_mst
            + alpha_p * tr_mp
        )

    rst = np.array(rst0, dtype=np.complex128)
    rp = np.array(rp0, dtype=np.complex128)
    m_st, ld_st, ok = _chol_logdet_inv(rst)
    if not ok:
        return rst, rp, 0, np.inf, d_trace, cost_trace, 0, STATUS_NOT_PD_ST, -1
    m_p, ld_p, ok = _chol_logdet_inv(rp)
    if not ok:
        return rst, rp, 0, np.inf, d_trace, cost_trace, 0, STATUS_NOT_PD_P, -1

    c_st, slq, status, bad = _accum_st(y, m_p, m_st)
    if status:
        return rst, rp, 0, np.inf, d_trace, cost_trace, 0, status, bad
    if track_cost:
        cost_trace[0] = cost(ld_st, ld_p, slq, np.trace(m_st).real, np.trace(m_p).real)
        n_cost = 1

    d = np.inf
    status = STATUS_MAXITER
    n_sweeps = 0
    for k in range(k_max):
        rst1 = (1.0 - rho_st) * c_st + rho_st * eye_st
        rst1 = 0.5 * (rst1 + rst1.conj().T)
        m_st1, ld_st1, ok = _chol_logdet_inv(rst1)
        if not ok:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, STATUS_NOT_PD_ST, -1

        c_p, slq1, st_p, bad = _accum_p(y, m_st1, m_p)
        if st_p:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, st_p, bad
        if track_cost:
            cost_trace[n_cost] = cost(
                ld_st1, ld_p, slq1, np.trace(m_st1).real, np.trace(m_p).real
            )
            n_cost += 1

        rp1 = (1.0 - rho_p) * c_p + rho_p * eye_p
        rp1 = 0.5 * (rp1 + rp1.conj().T)
        m_p1, ld_p1, ok = _chol_logdet_inv(rp1)
        if not ok:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, STATUS_NOT_PD_P, -1

        c_st, slq, st_s, bad = _accum_st(y, m_p1, m_st1)
        if st_s:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, st_s, bad
        if track_cost:
            cost_trace[n_cost] = cost(
                ld_st1, ld_p1, slq, np.trace(m_st1).real, np.trace(m_p1).real
            )
            n_cost += 1

        d = _normalized_kron_dist(rst1, rp1, rst, rp)
        d_trace[k] = d
        rst, rp = rst1, rp1
        m_p, ld_p = m_p1, ld_p1
        n_sweeps = k + 1
        if d < delta:
            status = STATUS_CONVERGED
            break

    return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, status, -1
