"""Local linear operators fitted on short snapshot stencils.

A stencil anchored at ``k`` with size ``s`` uses the columns
``x_{k-1}, ..., x_{k+s-1}``: ``s`` consecutive snapshot pairs. The local
operator ``M`` minimises ``sum_j ||x_{k+j} - M x_{k+j-1}||^2`` over those
pairs through a truncated SVD of the basis columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from koopfam import linalg
from koopfam.errors import DomainError, RankError
from koopfam.grid import SnapshotMatrix
from koopfam.snapshots import StencilWindow
from koopfam.spectral import OperatorFamily, SpectralTimeSeries, spectral_series

__all__ = [
    "StencilWindow",
    "LocalOperator",
    "companion_coefficients",
    "companion_matrix",
    "local_operator",
    "moving_stencil_spectrum",
    "RANK_TOL",
]

#: Default relative singular-value cut-off for the local fit.
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Least-squares one-step operator on a stencil.

    Attributes
    ----------
    M : ndarray
        Operator on the selected rows (``rows``), shape ``(r, r)``.
    residual_norm : float
        Frobenius norm of ``Y - M X`` over the stencil pairs.
    residual_rel : float
        ``residual_norm / ||x_{k+s-1}||``.
    companion_residual : float
        Norm of the part of ``x_{k+s-1}`` outside ``span(x_{k-1}..x_{k+s-2})``.
    rank_used : int
        Singular values kept in the pseudo-inverse.
    singular_values : ndarray
        All singular values of the basis block.
    rows : tuple or None
        Observable rows the fit used; ``None`` means all rows.
    """

    M: np.ndarray
    residual_norm: float
    residual_rel: float
    companion_residual: float
    window: StencilWindow
    rank_used: int
    singular_values: np.ndarray = field(repr=False)
    rows: tuple | None = None

    @property
    def conditioning(self):
        """``sigma_min / sigma_max`` of the basis block (0 when rank deficient)."""
        sv = self.singular_values
        return float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0

    def embedded(self, n, conserved_row=None):
        """Full ``n x n`` operator: identity on unused rows.

        With ``conserved_row`` set, that row is rebuilt so every column sums
        to one (the operator then preserves ``sum(x)``).
        """
        if self.rows is None:
            full = np.array(self.M)
        else:
            dtype = np.result_type(self.M, float)
            full = np.eye(n, dtype=dtype)
            idx = np.asarray(self.rows)
            full[np.ix_(idx, idx)] = self.M
        if conserved_row is not None:
            others = [i for i in range(n) if i != conserved_row]
            full[conserved_row] = 1.0 - full[others].sum(axis=0)
        return full


def _stencil(snaps, window, rows):
    window.check(snaps.values.shape[1])
    V = snaps.values if rows is None else snaps.values[list(rows)]
    b, y = window.slices()
    return V[:, b], V[:, y], V[:, window.last]


def companion_coefficients(snaps: SnapshotMatrix, window: StencilWindow, rows=None):
    """Coefficients expressing ``x_{k+s-1}`` in the basis ``x_{k-1}..x_{k+s-2}``.

    Returns
    -------
    c : ndarray, shape (s,)
        Minimum-norm least-squares coefficients.
    residual_norm : float
        ``||x_{k+s-1} - sum_j c_j x_{k-1+j}||_2``.
    """
    X, _, target = _stencil(snaps, window, rows)
    if not np.any(X):
        raise RankError(f"stencil k={window.k}, s={window.s} is identically zero")
    c, r = linalg.project_onto_span(X, target)
    return c, float(np.linalg.norm(r))


def companion_matrix(c):
    """Companion matrix with sub-diagonal ones and ``c`` as last column."""
    c = np.asarray(c)
    s = c.size
    C = np.zeros((s, s), dtype=np.result_type(c, float))
    C[1:, :-1] = np.eye(s - 1)
    C[:, -1] = c
    return C


def local_operator(snaps: SnapshotMatrix, window: StencilWindow, rank_tol=RANK_TOL, rows=None) -> LocalOperator:
    """Least-squares local operator on one stencil (SVD-based DMD).

    Parameters
    ----------
    snaps : SnapshotMatrix
    window : StencilWindow
    rank_tol : float
        Singular values below ``rank_tol * sigma_max`` are discarded.
    rows : sequence of int, optional
        Restrict the fit to these observable rows.

    Raises
    ------
    RankError
        If no singular value survives truncation.
    """
    X, Y, last = _stencil(snaps, window, rows)
    U, sv, Vh = np.linalg.svd(X, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        raise RankError(f"stencil k={window.k}, s={window.s} has rank 0")
    r = int(np.sum(sv > rank_tol * sv[0]))
    Ur, Vr = U[:, :r], Vh[:r].conj().T
    M = (Y @ Vr / sv[:r]) @ Ur.conj().T
    if np.isrealobj(X) and np.isrealobj(Y):
        M = M.real
    res = float(np.linalg.norm(Y - M @ X))
    scale = float(np.linalg.norm(last))
    # Projection residual of the newest snapshot onto the truncated basis.
    proj = last - Ur @ (Ur.conj().T @ last)
    return LocalOperator(
        M=M,
        residual_norm=res,
        residual_rel=res / scale if scale > 0 else (0.0 if res == 0 else np.inf),
        companion_residual=float(np.linalg.norm(proj)),
        window=window,
        rank_used=r,
        singular_values=sv,
        rows=None if rows is None else tuple(rows),
    )


def moving_stencil_spectrum(snaps: SnapshotMatrix, s: int, rank_tol=RANK_TOL):
    """Naive baseline: a fresh local operator at every step, no switch logic.

    Step ``k`` uses the window anchored at ``min(k, K - s + 1)``; the
    accumulated family is the plain product of the local operators.

    Returns
    -------
    series : SpectralTimeSeries
    family : OperatorFamily
    """
    if s < 2:
        raise DomainError("moving stencil needs s >= 2")
    K = snaps.grid.steps
    if K < s:
        raise DomainError(f"need at least s={s} steps, got {K}")
    m = snaps.n_rows
    steps = np.empty((K + 1, m, m), dtype=np.result_type(snaps.values, float))
    steps[0] = np.eye(m)
    res_abs = np.zeros(K + 1)
    res_rel = np.zeros(K + 1)
    ops = [None]
    last_anchor = K - s + 1
    for k in range(1, K + 1):
        if k <= last_anchor:
            op = local_operator(snaps, StencilWindow(k, s), rank_tol)
            ops.append(op)
            res_abs[k], res_rel[k] = op.residual_norm, op.residual_rel
        else:
            op = ops[last_anchor]
            ops.append(None)
            res_abs[k] = res_rel[k] = np.nan
        steps[k] = op.M
    family = OperatorFamily.from_steps(snaps.grid, steps, operators=tuple(ops), labels=snaps.labels)
    series = spectral_series(family, res_abs, res_rel, np.zeros(K + 1, dtype=bool), stencil=s)
    return series, family
