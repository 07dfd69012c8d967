"""Eigenvalue branch tracking and the containers for spectral time series.

Branches are followed across consecutive eigenvalue sets by a minimal
total-distance assignment on ``|Log(mu_new / mu_old)|``; imaginary parts of
the exponents are accumulated step by step, so a branch can wind past +-pi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from koopfam import linalg
from koopfam.grid import TimeGrid

__all__ = [
    "BranchTrack",
    "OperatorFamily",
    "SpectralTimeSeries",
    "accumulate",
    "track_branches",
    "COLLISION_TOL",
]

COLLISION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BranchTrack:
    """Result of :func:`track_branches`.

    ``exponents[k, b]`` is the continuous exponent of branch ``b`` at step
    ``k``; ``permutation[k]`` maps branches to positions in the canonical
    eigenvalue order at step ``k``; ``ambiguous[k]`` marks steps where two
    eigenvalues collided and the assignment fell back to canonical order.
    """

    exponents: np.ndarray
    values: np.ndarray
    permutation: np.ndarray
    ambiguous: np.ndarray


def _log_ratio(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(a / b)


def track_branches(value_sets, initial=None, collision_tol=COLLISION_TOL) -> BranchTrack:
    """Follow eigenvalue branches through a sequence of eigenvalue sets.

    Parameters
    ----------
    value_sets : (N, m) array_like
        Eigenvalues ``mu`` at each step, any order within a row.
    initial : (m,) array_like, optional
        Exponents of the first set (matching ``value_sets[0]`` in order).
        Defaults to the principal logarithm.
    collision_tol : float
        Relative distance below which two eigenvalues count as colliding.
    """
    mus = np.asarray(value_sets, dtype=complex)
    N, m = mus.shape
    exps = np.empty((N, m), dtype=complex)
    vals = np.empty((N, m), dtype=complex)
    perm = np.empty((N, m), dtype=int)
    amb = np.zeros(N, dtype=bool)

    order0 = linalg.canonical_order(mus[0])
    perm[0] = order0
    vals[0] = mus[0][order0]
    if initial is None:
        with np.errstate(divide="ignore"):
            exps[0] = np.log(vals[0])
    else:
        exps[0] = np.asarray(initial, dtype=complex)[order0]
    amb[0] = _collides(vals[0], collision_tol)

    prev = vals[0]
    step = np.zeros(m, dtype=complex)
    for k in range(1, N):
        cur_order = linalg.canonical_order(mus[k])
        cur = mus[k][cur_order]
        # Match against a linear extrapolation of each branch so that a
        # conjugate pair crossing the negative real axis keeps its direction.
        pred = prev * np.exp(step)
        cost = np.abs(_log_ratio(cur[np.newaxis, :], pred[:, np.newaxis]))
        cost[~np.isfinite(cost)] = 1e300
        _, cols = linear_sum_assignment(cost)
        nxt = cur[cols]
        inc = _log_ratio(nxt, prev)
        inc_im = np.where(np.isfinite(inc.imag), inc.imag, 0.0)
        with np.errstate(divide="ignore"):
            re = np.log(np.abs(nxt))
        exps[k] = re + 1j * (exps[k - 1].imag + inc_im)
        step = np.where(np.isfinite(exps[k]) & np.isfinite(exps[k - 1]), exps[k] - exps[k - 1], 0.0)
        vals[k] = nxt
        perm[k] = cur_order[cols]
        amb[k] = _collides(cur, collision_tol)
        prev = nxt
    return BranchTrack(exponents=exps, values=vals, permutation=perm, ambiguous=amb)


def _collides(values, tol):
    if values.size < 2:
        return False
    scale = max(1.0, float(np.max(np.abs(values))))
    d = np.abs(values[:, None] - values[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return bool(np.min(d) <= tol * scale)


def accumulate(steps):
    """Sequential product ``acc[k] = steps[k] @ acc[k-1]`` with ``acc[0] = I``.

    ``steps[0]`` is ignored.
    """
    steps = np.asarray(steps)
    N, m, _ = steps.shape
    acc = np.empty_like(steps)
    acc[0] = np.eye(m, dtype=steps.dtype)
    for k in range(1, N):
        acc[k] = steps[k] @ acc[k - 1]
    return acc


@dataclass(frozen=True, eq=False)
class OperatorFamily:
    """Local one-step operators and their accumulated products.

    ``steps[k]`` approximates the fundamental matrix from ``t_{k-1}`` to
    ``t_k`` (``steps[0]`` is the identity) and ``accumulated[k]`` the one
    from ``t_0`` to ``t_k``. ``operators[k]`` keeps the fitted local operator
    behind step ``k`` (``None`` at ``k = 0``); ``space`` is ``"state"`` or
    ``"observable"``.
    """

    grid: TimeGrid
    steps: np.ndarray
    accumulated: np.ndarray
    operators: tuple = field(default=())
    space: str = "state"
    labels: tuple = field(default=())

    @classmethod
    def from_steps(cls, grid, steps, **kwargs):
        return cls(grid=grid, steps=np.asarray(steps), accumulated=accumulate(steps), **kwargs)

    @property
    def dim(self):
        return self.steps.shape[1]


@dataclass(frozen=True, eq=False)
class SpectralTimeSeries:
    """Per-step system-matrix and Koopman eigenvalues.

    Arrays are indexed ``[k, branch]``. ``system_eigs`` are continuous-time
    rates ``log(mu)/dt`` of the local operator (principal branch, ``nan`` at
    ``k = 0``); ``koopman_eigs`` are branch-tracked exponents of the
    accumulated operator (zero at ``k = 0``).
    """

    grid: TimeGrid
    system_eigs: np.ndarray
    koopman_eigs: np.ndarray
    residual_abs: np.ndarray
    residual_rel: np.ndarray
    switch_flag: np.ndarray
    matching: np.ndarray
    ambiguous: np.ndarray
    stencil: int | None = None
    labels: tuple = field(default=())

    @property
    def n_branches(self):
        return self.koopman_eigs.shape[1]


def spectral_series(family: OperatorFamily, residual_abs, residual_rel, switch_flag, stencil=None):
    """Build a :class:`SpectralTimeSeries` from an operator family."""
    grid = family.grid
    N, m, _ = family.steps.shape
    koop = track_branches([linalg.eigvals(M) for M in family.accumulated])

    sys_eigs = np.full((N, m), np.nan + 0j, dtype=complex)
    if N > 1:
        local = track_branches([linalg.eigvals(M) for M in family.steps[1:]])
        with np.errstate(divide="ignore"):
            sys_eigs[1:] = np.log(local.values) / grid.dt
    return SpectralTimeSeries(
        grid=grid,
        system_eigs=sys_eigs,
        koopman_eigs=koop.exponents,
        residual_abs=np.asarray(residual_abs, dtype=float),
        residual_rel=np.asarray(residual_rel, dtype=float),
        switch_flag=np.asarray(switch_flag, dtype=bool),
        matching=koop.permutation,
        ambiguous=koop.ambiguous,
        stencil=stencil,
        labels=family.labels,
    )
