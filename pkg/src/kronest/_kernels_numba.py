"""Numba-compiled solver kernel; mirrors `_kernels_numpy.solve_fixed_point`.

Factor dimensions are small (a few to a few dozen), so the Cholesky,
triangular inverse and per-sample accumulations are hand-rolled loops; this
avoids per-call LAPACK overhead that would dominate at these sizes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._kernels_numpy import (  # noqa: F401  (status codes shared)
    QUAD_FLOOR,
    STATUS_CONVERGED,
    STATUS_DEGENERATE,
    STATUS_MAXITER,
    STATUS_NOT_PD_P,
    STATUS_NOT_PD_ST,
)


@njit(cache=True)
def _chol_lower(a):
    """Lower Cholesky factor of a Hermitian matrix; ok=False when not PD."""
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        s = a[j, j].real
        for k in range(j):
            v = low[j, k]
            s -= v.real * v.real + v.imag * v.imag
        if not (s > 0.0) or not np.isfinite(s):
            return low, False
        d = np.sqrt(s)
        low[j, j] = d
        for i in range(j + 1, n):
            c = a[i, j]
            for k in range(j):
                c -= low[i, k] * np.conj(low[j, k])
            low[i, j] = c / d
    return low, True


@njit(cache=True)
def _inv_from_chol(low):
    """A^{-1} = L^{-H} L^{-1} from the lower Cholesky factor."""
    n = low.shape[0]
    t = np.zeros_like(low)
    for j in range(n):
        t[j, j] = 1.0 / low[j, j]
        for i in range(j + 1, n):
            s = 0.0 + 0.0j
            for k in range(j, i):
                s += low[i, k] * t[k, j]
            t[i, j] = -s / low[i, i]
    m = np.zeros_like(low)
    for i in range(n):
        for j in range(n):
            s = 0.0 + 0.0j
            kmin = i if i > j else j
            for k in range(kmin, n):
                s += np.conj(t[k, i]) * t[k, j]
            m[i, j] = s
    return m


@njit(cache=True)
def _logdet_from_chol(low):
    s = 0.0
    for j in range(low.shape[0]):
        s += np.log(low[j, j].real)
    return 2.0 * s


@njit(cache=True)
def _trace_real(a):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i, i].real
    return s


@njit(cache=True)
def _accum_st(y, m_p, m_st, acc):
    """acc <- (n_st/L) sum_l (Y^H Mp Y) / q_l; returns (sum log q, status, bad_l)."""
    n_samples, n_p, n_st = y.shape
    acc[:, :] = 0.0 + 0.0j
    a = np.empty((n_st, n_st), dtype=np.complex128)
    x = np.empty((n_p, n_st), dtype=np.complex128)
    slq = 0.0
    for l in range(n_samples):
        yl = y[l]
        for p in range(n_p):
            for i in range(n_st):
                s = 0.0 + 0.0j
                for r in range(n_p):
                    s += m_p[p, r] * yl[r, i]
                x[p, i] = s
        for i in range(n_st):
            for j in range(n_st):
                s = 0.0 + 0.0j
                for p in range(n_p):
                    s += np.conj(yl[p, i]) * x[p, j]
                a[i, j] = s
        q = 0.0
        for i in range(n_st):
            for j in range(n_st):
                q += (m_st[i, j] * a[j, i]).real
        if not (q >= QUAD_FLOOR) or not np.isfinite(q):
            return slq, STATUS_DEGENERATE, l
        w = 1.0 / q
        for i in range(n_st):
            for j in range(n_st):
                acc[i, j] += a[i, j] * w
        slq += np.log(q)
    scale = n_st / n_samples
    for i in range(n_st):
        for j in range(n_st):
            acc[i, j] *= scale
    return slq, STATUS_CONVERGED, -1


@njit(cache=True)
def _accum_p(y, m_st, m_p, acc):
    """acc <- (n_p/L) sum_l (Y Mst Y^H) / q_l; returns (sum log q, status, bad_l)."""
    n_samples, n_p, n_st = y.shape
    acc[:, :] = 0.0 + 0.0j
    b = np.empty((n_p, n_p), dtype=np.complex128)
    x = np.empty((n_p, n_st), dtype=np.complex128)
    slq = 0.0
    for l in range(n_samples):
        yl = y[l]
        for p in range(n_p):
            for j in range(n_st):
                s = 0.0 + 0.0j
                for i in range(n_st):
                    s += yl[p, i] * m_st[i, j]
                x[p, j] = s
        for p in range(n_p):
            for r in range(n_p):
                s = 0.0 + 0.0j
                for j in range(n_st):
                    s += x[p, j] * np.conj(yl[r, j])
                b[p, r] = s
        q = 0.0
        for p in range(n_p):
            for r in range(n_p):
                q += (m_p[p, r] * b[r, p]).real
        if not (q >= QUAD_FLOOR) or not np.isfinite(q):
            return slq, STATUS_DEGENERATE, l
        w = 1.0 / q
        for p in range(n_p):
            for r in range(n_p):
                acc[p, r] += b[p, r] * w
        slq += np.log(q)
    scale = n_p / n_samples
    for p in range(n_p):
        for r in range(n_p):
            acc[p, r] *= scale
    return slq, STATUS_CONVERGED, -1


@njit(cache=True)
def _normalized_kron_dist(st1, p1, st0, p0):
    ta = _trace_real(st1)
    tb = _trace_real(p1)
    tc = _trace_real(st0)
    td = _trace_real(p0)
    aa = 0.0
    cc = 0.0
    ac = 0.0 + 0.0j
    for i in range(st1.shape[0]):
        for j in range(st1.shape[1]):
            va = st1[i, j] / ta
            vc = st0[i, j] / tc
            aa += va.real * va.real + va.imag * va.imag
            cc += vc.real * vc.real + vc.imag * vc.imag
            ac += np.conj(va) * vc
    bb = 0.0
    dd = 0.0
    bd = 0.0 + 0.0j
    for i in range(p1.shape[0]):
        for j in range(p1.shape[1]):
            vb = p1[i, j] / tb
            vd = p0[i, j] / td
            bb += vb.real * vb.real + vb.imag * vb.imag
            dd += vd.real * vd.real + vd.imag * vd.imag
            bd += np.conj(vb) * vd
    d2 = aa * bb - 2.0 * (ac * bd).real + cc * dd
    if d2 < 0.0:
        d2 = 0.0
    return np.sqrt(d2)


@njit(cache=True)
def _hermitize_inplace(a):
    n = a.shape[0]
    for i in range(n):
        a[i, i] = complex(a[i, i].real, 0.0)
        for j in range(i + 1, n):
            v = 0.5 * (a[i, j] + np.conj(a[j, i]))
            a[i, j] = v
            a[j, i] = np.conj(v)


@njit(cache=True)
def solve_fixed_point(y, rho_st, rho_p, rst0, rp0, delta, k_max):
    """Same contract as `_kernels_numpy.solve_fixed_point`."""
    n_samples, n_p, n_st = y.shape
    n_total = n_p * n_st
    track_cost = rho_st < 1.0 and rho_p < 1.0
    alpha_st = n_p * rho_st / (1.0 - rho_st) if track_cost else np.nan
    alpha_p = n_st * rho_p / (1.0 - rho_p) if track_cost else np.nan
    w_st = n_p / (1.0 - rho_st) if track_cost else np.nan
    w_p = n_st / (1.0 - rho_p) if track_cost else np.nan

    d_trace = np.full(k_max, np.nan)
    cost_trace = np.full(2 * k_max + 1, np.nan)
    n_cost = 0

    rst = rst0.astype(np.complex128).copy()
    rp = rp0.astype(np.complex128).copy()
    c_st = np.zeros((n_st, n_st), dtype=np.complex128)
    c_p = np.zeros((n_p, n_p), dtype=np.complex128)

    low, ok = _chol_lower(rst)
    if not ok:
        return rst, rp, 0, np.inf, d_trace, cost_trace, 0, STATUS_NOT_PD_ST, -1
    m_st = _inv_from_chol(low)
    ld_st = _logdet_from_chol(low)
    low, ok = _chol_lower(rp)
    if not ok:
        return rst, rp, 0, np.inf, d_trace, cost_trace, 0, STATUS_NOT_PD_P, -1
    m_p = _inv_from_chol(low)
    ld_p = _logdet_from_chol(low)

    slq, status, bad = _accum_st(y, m_p, m_st, c_st)
    if status != STATUS_CONVERGED:
        return rst, rp, 0, np.inf, d_trace, cost_trace, 0, status, bad
    if track_cost:
        cost_trace[0] = (
            w_st * ld_st + w_p * ld_p + (n_total / n_samples) * slq
            + alpha_st * _trace_real(m_st) + alpha_p * _trace_real(m_p)
        )
        n_cost = 1

    d = np.inf
    status = STATUS_MAXITER
    n_sweeps = 0
    for k in range(k_max):
        rst1 = (1.0 - rho_st) * c_st + rho_st * np.eye(n_st, dtype=np.complex128)
        _hermitize_inplace(rst1)
        low, ok = _chol_lower(rst1)
        if not ok:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, STATUS_NOT_PD_ST, -1
        m_st1 = _inv_from_chol(low)
        ld_st1 = _logdet_from_chol(low)

        slq1, st_p, bad = _accum_p(y, m_st1, m_p, c_p)
        if st_p != STATUS_CONVERGED:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, st_p, bad
        if track_cost:
            cost_trace[n_cost] = (
                w_st * ld_st1 + w_p * ld_p + (n_total / n_samples) * slq1
                + alpha_st * _trace_real(m_st1) + alpha_p * _trace_real(m_p)
            )
            n_cost += 1

        rp1 = (1.0 - rho_p) * c_p + rho_p * np.eye(n_p, dtype=np.complex128)
        _hermitize_inplace(rp1)
        low, ok = _chol_lower(rp1)
        if not ok:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, STATUS_NOT_PD_P, -1
        m_p1 = _inv_from_chol(low)
        ld_p1 = _logdet_from_chol(low)

        slq, st_s, bad = _accum_st(y, m_p1, m_st1, c_st)
        if st_s != STATUS_CONVERGED:
            return rst, rp, n_sweeps, d, d_trace, cost_trace, n_cost, st_s, bad
        if track_cost:
            cost_trace[n_cost] = (
                w_st * ld_st1 + w_p * ld_p1 + (n_total / n_samples) * slq
                + alpha_st * _trace_real(m_st1) + alpha_p * _trace_real(m_p1)
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
