"""Dense linear-algebra primitives with fixed conventions.

Every other module goes through these helpers so that eigenvalue order,
eigenvector normalisation and pseudo-inverse truncation are the same
everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from koopfam.errors import ConvergenceError, DomainError, IllConditionedError, NumericalError

__all__ = [
    "EigenDecomposition",
    "canonical_order",
    "eig",
    "expm",
    "logm",
    "project_onto_span",
    "PINV_RCOND",
]

#: Relative singular-value cut-off used by :func:`project_onto_span`.
PINV_RCOND = 1e-12

# Digits kept when comparing moduli/real parts for ordering ties.
_ORDER_DIGITS = 10


def _as_square(A, name="A"):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DomainError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")
    return A


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues with right and biorthogonal left eigenvectors.

    ``right[:, i]`` is the unit-norm right eigenvector for ``values[i]`` and
    ``left[:, i]`` is scaled so that ``left[:, i].conj() @ right[:, j]`` is
    the Kronecker delta.
    """

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray

    def reconstruct(self):
        return self.right @ np.diag(self.values) @ self.left.conj().T

    @property
    def condition(self):
        """2-norm condition number of the right eigenvector matrix."""
        return float(np.linalg.cond(self.right))


def canonical_order(values):
    """Return the permutation sorting eigenvalues canonically.

    Descending modulus, ties broken by descending real part and then by
    descending imaginary part. Ties are detected after scaling by the largest
    modulus and rounding, so conjugate pairs stay adjacent.
    """
    values = np.asarray(values, dtype=complex)
    if values.size == 0:
        return np.arange(0)
    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    mod = np.round(np.abs(values) / scale, _ORDER_DIGITS)
    re = np.round(values.real / scale, _ORDER_DIGITS)
    im = values.imag / scale
    # np.lexsort sorts by the last key first.
    return np.lexsort((-im, -re, -mod))


def _normalise_columns(V):
    V = np.array(V, dtype=complex)
    for j in range(V.shape[1]):
        v = V[:, j]
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        v = v / norm
        big = np.flatnonzero(np.abs(v) > 1e-12)
        if big.size:
            first = v[big[0]]
            v = v * (abs(first) / first)
        V[:, j] = v
    return V


def eig(A) -> EigenDecomposition:
    """Eigen-decomposition in canonical order.

    Parameters
    ----------
    A : (n, n) array_like
        Square matrix with finite entries (real or complex).

    Returns
    -------
    EigenDecomposition
        Values in canonical order (see :func:`canonical_order`); right vectors
        of unit 2-norm whose first non-negligible entry is real and positive;
        left vectors scaled to biorthogonality with the right vectors.

    Raises
    ------
    DomainError
        If ``A`` is not square or has non-finite entries.
    ConvergenceError
        If the underlying QR iteration fails to converge.
    IllConditionedError
        If ``A`` is defective (eigenvectors numerically dependent).
    """
    A = _as_square(A)
    try:
        values, R = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(R))):
        raise ConvergenceError("eigen-decomposition produced non-finite values")
    order = canonical_order(values)
    values = np.asarray(values, dtype=complex)[order]
    R = _normalise_columns(R[:, order])
    try:
        W = np.linalg.inv(R).conj().T
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("eigenvector matrix is singular (defective matrix)") from exc
    if not np.all(np.isfinite(W)) or np.linalg.cond(R) > 1 / np.finfo(float).eps:
        raise IllConditionedError("eigenvector matrix is numerically singular (defective matrix)")
    return EigenDecomposition(values=values, right=R, left=W)


def eigvals(A):
    """Eigenvalues only, canonical order."""
    A = _as_square(A)
    try:
        values = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc
    values = np.asarray(values, dtype=complex)
    return values[canonical_order(values)]


def expm(A):
    """Matrix exponential (Pade scaling and squaring, via SciPy).

    Accepts a single square matrix or a stack ``(..., n, n)``.
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"expm needs square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("expm argument has non-finite entries")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(A)
    if not np.all(np.isfinite(E)):
        raise NumericalError("matrix exponential overflowed")
    return E


def logm(M):
    """Principal matrix logarithm; returns a real matrix when ``M`` is real
    and the imaginary part is at round-off level."""
    M = _as_square(M, "M")
    L = scipy.linalg.logm(M)
    L = np.asarray(L)
    if np.isrealobj(M) and np.iscomplexobj(L):
        if np.max(np.abs(L.imag), initial=0.0) <= 1e-10 * max(1.0, np.max(np.abs(L.real), initial=0.0)):
            L = L.real
    return L


def project_onto_span(basis, target, rcond=PINV_RCOND):
    """Orthogonal projection of ``target`` onto the span of ``basis``.

    Parameters
    ----------
    basis : sequence of vectors or (m, s) array
        Spanning vectors; a 2-D array is interpreted column-wise.
    target : (m,) array_like
    rcond : float
        Singular values below ``rcond * sigma_max`` are discarded, which gives
        the minimum-norm coefficients for rank-deficient bases.

    Returns
    -------
    coefficients : (s,) ndarray
    residual : (m,) ndarray
        ``target - basis @ coefficients``; orthogonal to every basis vector.
    """
    target = np.asarray(target)
    if isinstance(basis, np.ndarray) and basis.ndim == 2:
        B = basis
    else:
        vecs = [np.asarray(b) for b in basis]
        if not vecs:
            raise DomainError("basis is empty")
        if any(v.shape != target.shape for v in vecs):
            raise DomainError("basis vectors and target differ in dimension")
        B = np.column_stack(vecs)
    if target.ndim != 1 or B.shape[0] != target.shape[0]:
        raise DomainError(
            f"dimension mismatch: basis has {B.shape[0]} rows, target shape {target.shape}"
        )
    U, s, Vh = np.linalg.svd(B, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(B.shape[1], dtype=np.result_type(B, target)), target.copy()
    r = int(np.sum(s > rcond * s[0]))
    proj = U[:, :r].conj().T @ target
    coeffs = Vh[:r].conj().T @ (proj / s[:r])
    # Projector form keeps the residual orthogonal to working precision.
    residual = target - U[:, :r] @ proj
    return coeffs, residual
