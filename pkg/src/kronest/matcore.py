"""Complex Hermitian linear-algebra kernel: Kronecker algebra, vec/unvec
layout, factorized quadratic and bilinear forms, eigen utilities.

Layout and form convention
--------------------------
A length-N vector ``y`` and its matrix form ``Y = unvec(y, n_p, n_st)`` are
related by column stacking: ``Y[j, i] = y[i * n_p + j]``.  Every
N-dimensional quadratic or bilinear form in this package is defined through
the factorized expression

    B(S, Y; R) = Tr(Rst^{-1} S^H Rp^{-1} Y),

which under the column-stacking layout equals ``vec(S)^H M^{-1} vec(y)``
for the full operator ``M = kron(Rst.T, Rp)``.  `to_full` materializes that
operator, so factorized and materialized paths agree to rounding.  Data
generation (cluttergen) draws samples whose vec-covariance is exactly
``kron(Rst.T, Rp)``, keeping forms, estimators and detectors mutually
consistent and the transpose invisible at every API boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NotPositiveDefiniteError

# Hermitian-symmetry tolerance (absolute, relative to unit-scale entries).
HERMITIAN_ATOL = 1e-12
# Largest N = n_st * n_p for which full N x N operators may be materialized.
MATERIALIZE_CAP = 64


def kron(a, b):
    """Kronecker product; used only by small-size oracles and full-matrix paths."""
    return np.kron(np.asarray(a), np.asarray(b))


def vec(y_mat):
    """Column-stack a matrix into a vector (inverse of `unvec`)."""
    return np.asarray(y_mat).reshape(-1, order="F")


def unvec(y, n_p, n_st):
    """Reshape a length ``n_p * n_st`` vector into its n_p x n_st matrix form.

    Columns are filled first: ``unvec(y)[j, i] = y[i * n_p + j]``.
    """
    y = np.asarray(y)
    if y.ndim != 1 or y.size != n_p * n_st:
        raise DimensionMismatchError(
            f"expected a vector of length {n_p * n_st}, got shape {y.shape}"
        )
    return y.reshape((n_p, n_st), order="F")


def hermitize(a):
    """(A + A^H) / 2; cheap guard against accumulated asymmetry."""
    return 0.5 * (a + a.conj().T)


def is_hermitian(a, atol=HERMITIAN_ATOL):
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(
        np.all(np.abs(a - a.conj().T) <= atol * max(1.0, np.abs(a).max()))
    )


def frob_inner(a, b):
    """Frobenius inner product Tr(A^H B)."""
    return np.vdot(a, b)


@dataclass(frozen=True)
class KroneckerCov:
    """Covariance factor pair: space-time factor `st`, polarization factor `p`.

    Represents the structured covariance whose full operator on vec'd data
    is ``kron(st.T, p)``; the product is never materialized above
    MATERIALIZE_CAP.
    """

    st: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        st = np.ascontiguousarray(np.asarray(self.st, dtype=np.complex128))
        p = np.ascontiguousarray(np.asarray(self.p, dtype=np.complex128))
        for name, m in (("st", st), ("p", p)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionMismatchError(f"{name} factor must be square, got {m.shape}")
        object.__setattr__(self, "st", st)
        object.__setattr__(self, "p", p)

    @property
    def n_st(self):
        return self.st.shape[0]

    @property
    def n_p(self):
        return self.p.shape[0]

    @property
    def n(self):
        return self.n_st * self.n_p

    def trace(self):
        return float(np.trace(self.st).real * np.trace(self.p).real)

    def validate(self, atol=HERMITIAN_ATOL):
        """Check both factors Hermitian positive definite; raise otherwise."""
        for name, m in (("st", self.st), ("p", self.p)):
            if not is_hermitian(m, atol):
                raise NotPositiveDefiniteError(f"{name} factor is not Hermitian", factor=name)
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError(
                    f"{name} factor is not positive definite", factor=name
                ) from None
        return self

    def scaled(self, c_st=1.0, c_p=1.0):
        return KroneckerCov(self.st * c_st, self.p * c_p)


def identity_cov(n_st, n_p):
    return KroneckerCov(np.eye(n_st, dtype=np.complex128), np.eye(n_p, dtype=np.complex128))


def to_full(cov, cap=MATERIALIZE_CAP):
    """Materialize the N x N operator acting on vec'd data: kron(st.T, p).

    Restricted to small N; production paths stay factorized.
    """
    if cov.n > cap:
        raise DimensionMismatchError(
            f"refusing to materialize N={cov.n} > cap={cap}; use the factorized forms"
        )
    return np.kron(cov.st.T, cov.p)


def apply_cov(y_mat, cov):
    """Forward operator in matrix form: Rp @ Y @ Rst."""
    return cov.p @ y_mat @ cov.st


def apply_inverse(y_mat, cov):
    """Factorized inverse: Rp^{-1} @ Y @ Rst^{-1} via two Hermitian solves."""
    y_mat = np.asarray(y_mat)
    if y_mat.shape != (cov.n_p, cov.n_st):
        raise DimensionMismatchError(
            f"data matrix shape {y_mat.shape} does not match factors ({cov.n_p}, {cov.n_st})"
        )
    try:
        x = np.linalg.solve(cov.p, y_mat)
        # X Rst^{-1} = (Rst^{-1} X^H)^H for Hermitian Rst
        return np.linalg.solve(cov.st, x.conj().T).conj().T
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("singular covariance factor in apply_inverse") from None


def bilinear_form(s_mat, y_mat, cov):
    """B(S, Y; R) = Tr(Rst^{-1} S^H Rp^{-1} Y) = <S, apply_inverse(Y, R)>_F."""
    s_mat = np.asarray(s_mat)
    if s_mat.shape != (cov.n_p, cov.n_st):
        raise DimensionMismatchError(
            f"signature shape {s_mat.shape} does not match factors ({cov.n_p}, {cov.n_st})"
        )
    return complex(np.vdot(s_mat, apply_inverse(y_mat, cov)))


def quad_form(y_mat, cov):
    """Real positive quadratic form B(Y, Y; R); > 0 for nonzero Y and PD R."""
    b = bilinear_form(y_mat, y_mat, cov)
    if abs(b.imag) > 1e-10 * max(abs(b.real), 1e-30):
        raise NotPositiveDefiniteError(
            f"quadratic form came out non-real (imag {b.imag:.3e}); covariance not Hermitian PD"
        )
    return b.real


def hermitian_eig(a, atol=HERMITIAN_ATOL):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(w, v)`` with ``a = v @ diag(w) @ v^H``; the input is
    symmetrized before decomposition and must be Hermitian within `atol`.
    """
    a = np.asarray(a, dtype=np.complex128)
    if not is_hermitian(a, atol):
        raise NotPositiveDefiniteError("input matrix is not Hermitian")
    w, v = np.linalg.eigh(hermitize(a))
    return w[::-1].copy(), v[:, ::-1].copy()


def sqrt_psd(a):
    """Hermitian PSD square root; negative rounding noise is clipped."""
    w, v = hermitian_eig(a)
    w = np.clip(w, 0.0, None)
    return hermitize((v * np.sqrt(w)) @ v.conj().T)


def cond_number(a):
    """Ratio of extreme eigenvalues; inf when the smallest is not positive."""
    w, _ = hermitian_eig(a)
    if w[-1] <= 0.0:
        return np.inf
    return float(w[0] / w[-1])


def trace_normalize(a):
    """A / Tr(A); raises on vanishing trace."""
    a = np.asarray(a)
    t = np.trace(a)
    t = t.real if is_hermitian(a) else t
    if abs(t) < 1e-300:
        raise ValueError("cannot trace-normalize a matrix with zero trace")
    return a / t


def kron_frobenius_distance(cov_a, cov_b):
    """Frobenius distance of the trace-normalized Kronecker products.

    Evaluated factorized through Tr((A kron B)^H (C kron D)) =
    Tr(A^H C) Tr(B^H D); the N x N products are never formed.
    """
    a = cov_a.st / np.trace(cov_a.st)
    b = cov_a.p / np.trace(cov_a.p)
    c = cov_b.st / np.trace(cov_b.st)
    d = cov_b.p / np.trace(cov_b.p)
    na = np.vdot(a, a).real * np.vdot(b, b).real
    nc = np.vdot(c, c).real * np.vdot(d, d).real
    cross = (np.vdot(a, c) * np.vdot(b, d)).real
    return float(np.sqrt(max(na - 2.0 * cross + nc, 0.0)))
