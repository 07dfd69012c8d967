"""Koopman spectra of non-autonomous linear systems from snapshot data.

``algorithm1`` handles piecewise-constant (hybrid) dynamics: local operators
whose stencil residual exceeds a threshold straddle a switch and are
replaced by the previous operator. ``algorithm2`` handles continuously
varying dynamics through decoupled observables, one two-snapshot ratio per
observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from koopfam import linalg
from koopfam.dmd import RANK_TOL, LocalOperator, local_operator
from koopfam.errors import (
    AliasingError,
    DomainError,
    IllConditionedError,
    OriginError,
    UnsupportedSystemError,
    WarmupError,
)
from koopfam.grid import SnapshotMatrix, TimeGrid
from koopfam.snapshots import ObservableMap, StencilWindow, select_active_observables
from koopfam.spectral import (
    BranchTrack,
    OperatorFamily,
    SpectralTimeSeries,
    spectral_series,
    track_branches,
)
from koopfam.systems import LinearSystem, SpiralSystem, fundamental_matrices

__all__ = [
    "SwitchEvent",
    "Algorithm1Result",
    "GeneratorEstimate",
    "KoopmanDecomposition",
    "BiasSweep",
    "algorithm1",
    "algorithm2",
    "extract_koopman_eigs",
    "koopman_mode_decomposition",
    "error_Ek",
    "observable_oracle",
    "theorem2_bias",
    "bias_sweep",
    "generator_estimates",
    "compartment_rates",
]


# ---------------------------------------------------------------------------
# Hybrid systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SwitchEvent:
    """One maximal run of flagged steps ``k_first..k_last``.

    Every flagged window spans ``(t_{k-1}, t_{k+s-1})``; ``bracket`` is the
    intersection of those spans over the run and ``time`` its midpoint.
    ``merged`` is set when the intersection is empty, i.e. the run cannot
    come from a single switch.
    """

    time: float
    first_flag_time: float
    bracket: tuple
    k_first: int
    k_last: int
    merged: bool = False


@dataclass(frozen=True, eq=False)
class Algorithm1Result:
    series: SpectralTimeSeries
    family: OperatorFamily
    switches: tuple
    conserved_row: int | None = None

    def __iter__(self):
        # Allows ``series, family, switches = algorithm1(...)``.
        return iter((self.series, self.family, self.switches))

    @property
    def switch_times(self):
        return np.array([e.time for e in self.switches])


def _switch_events(flags, grid, s):
    events = []
    k = 1
    K = flags.size - 1
    while k <= K:
        if not flags[k]:
            k += 1
            continue
        a = k
        while k + 1 <= K and flags[k + 1]:
            k += 1
        b = k
        lo, hi = grid.time(b - 1), grid.time(a + s - 1)
        merged = not lo < hi
        mid = 0.5 * (lo + hi) if not merged else grid.time(a - 1)
        events.append(SwitchEvent(mid, grid.time(a - 1), (lo, hi), a, b, merged))
        k += 1
    return tuple(events)


def default_stencil(n_rows, conserved_row=None):
    """Smallest stencil whose least-squares residual can detect a switch.

    With ``r`` independent rows, ``s = r`` pairs determine ``M`` exactly
    (zero residual); one more pair over-determines the fit.
    """
    return n_rows - (1 if conserved_row is not None else 0) + 1


def algorithm1(snaps: SnapshotMatrix, epsilon_rel=1e-6, stencil=None, rank_tol=RANK_TOL,
               active_tol=1e-12, conserved_row=None, select_rank_tol=1e-13) -> Algorithm1Result:
    """Koopman family of a hybrid system from snapshots.

    Parameters
    ----------
    snaps : SnapshotMatrix
        State (or observable) snapshots.
    epsilon_rel : float
        Relative stencil residual above which a window is flagged as
        straddling a switch.
    stencil : int, optional
        Stencil size ``s``; defaults to :func:`default_stencil`.
    rank_tol : float
        SVD cut-off of the local fit.
    active_tol : float
        Minimum row variation for a row to enter the fit.
    conserved_row : int, optional
        Row whose value is implied by a conserved total ``sum(x)``. It is
        left out of every fit and rebuilt from column sums.

    Returns
    -------
    Algorithm1Result
        Unpacks as ``(series, family, switches)``.

    Raises
    ------
    WarmupError
        If the very first window is flagged.
    """
    if not epsilon_rel > 0:
        raise DomainError("epsilon_rel must be positive")
    n = snaps.n_rows
    if conserved_row is not None and not 0 <= conserved_row < n:
        raise DomainError(f"conserved_row {conserved_row} out of range")
    s = default_stencil(n, conserved_row) if stencil is None else int(stencil)
    if s < 1:
        raise DomainError("stencil must be >= 1")
    grid = snaps.grid
    K = grid.steps
    if K < s:
        raise DomainError(f"need at least s={s} steps, got {K}")
    exclude = () if conserved_row is None else (conserved_row,)

    dtype = np.result_type(snaps.values, float)
    steps = np.empty((K + 1, n, n), dtype=dtype)
    steps[0] = np.eye(n)
    res_abs = np.full(K + 1, np.nan)
    res_rel = np.full(K + 1, np.nan)
    res_abs[0] = res_rel[0] = 0.0
    flags = np.zeros(K + 1, dtype=bool)
    ops = [None]
    last_anchor = K - s + 1
    for k in range(1, K + 1):
        if k > last_anchor:
            # Tail: no full window left; keep the last operator in use.
            steps[k] = steps[last_anchor]
            ops.append(None)
            continue
        win = StencilWindow(k, s)
        rows = select_active_observables(snaps, win, tol=active_tol, exclude=exclude,
                                         rank_tol=select_rank_tol)
        if len(rows) == n:
            rows = None
        op = local_operator(snaps, win, rank_tol, rows=rows)
        ops.append(op)
        res_abs[k], res_rel[k] = op.residual_norm, op.residual_rel
        if op.residual_rel > epsilon_rel:
            if k == 1:
                raise WarmupError(
                    "first stencil is already flagged (relative residual "
                    f"{op.residual_rel:.3g} > {epsilon_rel:g}); start the data a few "
                    "steps earlier or inside a constant segment"
                )
            flags[k] = True
            steps[k] = steps[k - 1]
        else:
            steps[k] = op.embedded(n, conserved_row)
    family = OperatorFamily.from_steps(grid, steps, operators=tuple(ops), labels=snaps.labels)
    series = spectral_series(family, res_abs, res_rel, flags, stencil=s)
    return Algorithm1Result(series, family, _switch_events(flags, grid, s), conserved_row)


@dataclass(frozen=True, eq=False)
class GeneratorEstimate:
    """Generator ``A`` for one inter-switch interval."""

    t_start: float
    t_end: float
    A: np.ndarray
    operator: LocalOperator | None

    @property
    def eigenvalues(self):
        return linalg.eigvals(self.A)


def generator_estimates(result: Algorithm1Result, min_conditioning=0.0):
    """Per-interval generators ``A = log(M) / dt`` from the best clean window.

    For every interval between detected switches, the clean window lying
    inside it with the largest ``sigma_min / sigma_max`` is used.
    """
    fam = result.family
    grid = fam.grid
    n = fam.dim
    edges = [grid.t0] + [e.time for e in result.switches] + [grid.t_end]
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        best = None
        for k, op in enumerate(fam.operators):
            if op is None or result.series.switch_flag[k]:
                continue
            a, b = grid.time(op.window.first), grid.time(op.window.last)
            if a < lo - 1e-9 or b > hi + 1e-9:
                continue
            if best is None or op.conditioning > best.conditioning:
                best = op
        if best is None or best.conditioning < min_conditioning:
            out.append(GeneratorEstimate(lo, hi, np.full((n, n), np.nan), best))
            continue
        M = best.embedded(n, result.conserved_row)
        out.append(GeneratorEstimate(lo, hi, linalg.logm(M) / grid.dt, best))
    return out


def compartment_rates(A, tol=1e-8):
    """Transport rates ``{(i, j): K_ij}`` (1-based) read off a compartment
    generator, where ``K_ij = A[j, i]`` for ``i != j``."""
    A = np.real(np.asarray(A))
    n = A.shape[0]
    return {
        (i + 1, j + 1): float(A[j, i])
        for i in range(n)
        for j in range(n)
        if i != j and abs(A[j, i]) > tol
    }


# ---------------------------------------------------------------------------
# Decoupled observables
# ---------------------------------------------------------------------------


def algorithm2(u_snaps: SnapshotMatrix, phase_limit=np.pi / 2):
    """Diagonal Koopman family from decoupled observables.

    Each observable row is treated on its own: the local operator is the
    ratio ``u_i(t_k) / u_i(t_{k-1})`` and the Koopman exponent is the running
    sum of principal logarithms of these ratios.

    Parameters
    ----------
    u_snaps : SnapshotMatrix
        Observable snapshots, e.g. from :func:`apply_observables`.
    phase_limit : float
        Largest admissible ``|arg|`` of a single-step ratio. Larger
        increments cannot be told apart from aliased ones.

    Returns
    -------
    series : SpectralTimeSeries
        Branch ``i`` is observable row ``i``.
    family : OperatorFamily
        Diagonal operators in observable space.
    """
    U = np.asarray(u_snaps.values, dtype=complex)
    m, N = U.shape
    grid = u_snaps.grid
    zero = np.argwhere(U == 0)
    if zero.size:
        i, k = zero[0]
        raise OriginError(f"observable row {i} ({u_snaps.labels[i]}) is zero at column {k}")
    ratios = U[:, 1:] / U[:, :-1]
    logs = np.log(ratios)
    bad = np.argwhere(np.abs(logs.imag) > phase_limit)
    if bad.size:
        i, k = bad[0]
        raise AliasingError(
            f"observable row {i} ({u_snaps.labels[i]}) turns by {logs[i, k].imag:.3g} rad at step "
            f"{k + 1}; reduce dt below {phase_limit:.3g} rad per step"
        )
    lam_local = np.zeros((N, m), dtype=complex)
    lam_local[1:] = logs.T
    koop = np.cumsum(lam_local, axis=0)

    steps = np.zeros((N, m, m), dtype=complex)
    idx = np.arange(m)
    steps[0, idx, idx] = 1.0
    steps[1:, idx, idx] = ratios.T
    acc = np.zeros_like(steps)
    acc[:, idx, idx] = np.exp(koop)
    family = OperatorFamily(grid=grid, steps=steps, accumulated=acc, space="observable",
                            labels=u_snaps.labels)

    sys_eigs = np.full((N, m), np.nan + 0j)
    sys_eigs[1:] = lam_local[1:] / grid.dt
    series = SpectralTimeSeries(
        grid=grid,
        system_eigs=sys_eigs,
        koopman_eigs=koop,
        residual_abs=np.zeros(N),
        residual_rel=np.zeros(N),
        switch_flag=np.zeros(N, dtype=bool),
        matching=np.tile(idx, (N, 1)),
        ambiguous=np.zeros(N, dtype=bool),
        stencil=1,
        labels=u_snaps.labels,
    )
    return series, family


def observable_oracle(system: SpiralSystem, obs: ObservableMap, grid: TimeGrid):
    """Exact diagonal observable-space family for a spiral system.

    The radius of a block grows by ``exp(alpha)``, its phase factor turns
    by ``exp(-i beta)``; passthrough coordinates are constant.
    """
    if not isinstance(system, SpiralSystem):
        raise UnsupportedSystemError("observable-space oracle needs a spiral system")
    blocks = {tuple(b.pair): b for b in system.blocks}
    t = grid.times
    diag = np.ones((t.size, obs.m), dtype=complex)
    for j, pair in enumerate(obs.pairs):
        b = blocks.get(pair)
        if b is None:
            raise UnsupportedSystemError(f"observable pair {pair} is not a spiral block of the system")
        diag[:, 2 * j] = np.exp(b.alpha(t, grid.t0))
        diag[:, 2 * j + 1] = np.exp(-1j * b.beta(t, grid.t0))
    out = np.zeros((t.size, obs.m, obs.m), dtype=complex)
    idx = np.arange(obs.m)
    out[:, idx, idx] = diag
    return out


# ---------------------------------------------------------------------------
# Spectra, modes, errors
# ---------------------------------------------------------------------------


def extract_koopman_eigs(family: OperatorFamily) -> BranchTrack:
    """Branch-tracked exponents of the accumulated operators."""
    return track_branches([linalg.eigvals(M) for M in family.accumulated])


@dataclass(frozen=True, eq=False)
class KoopmanDecomposition:
    """``M x0 = sum_i exp(lambda_i) phi_i v_i``."""

    eigenvalues: np.ndarray
    weights: np.ndarray
    modes: np.ndarray
    left: np.ndarray = field(repr=False)
    condition: float = 1.0

    def reconstruct(self):
        return self.modes @ (np.exp(self.eigenvalues) * self.weights)


def koopman_mode_decomposition(M, x0, exponents=None, cond_limit=1e8) -> KoopmanDecomposition:
    """Koopman eigenvalues, eigenfunction weights and modes of ``M``.

    Parameters
    ----------
    M : (n, n) array_like or FundamentalMatrix
    x0 : (n,) array_like
    exponents : (n,) array_like, optional
        Branch-continued exponents in canonical eigenvalue order; the
        principal logarithm is used otherwise.
    cond_limit : float
        Largest admissible condition number of the eigenvector matrix.

    Raises
    ------
    IllConditionedError
        Defective or nearly defective ``M``.
    """
    M = getattr(M, "M", M)
    dec = linalg.eig(M)
    cond = dec.condition
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(f"eigenvector matrix condition {cond:.3g} exceeds {cond_limit:g}")
    if exponents is None:
        with np.errstate(divide="ignore"):
            lam = np.log(dec.values)
    else:
        lam = np.asarray(exponents, dtype=complex)
    weights = dec.left.conj().T @ np.asarray(x0)
    return KoopmanDecomposition(lam, weights, dec.right, dec.left, cond)


def error_Ek(family: OperatorFamily, system: LinearSystem, obs: ObservableMap | None = None):
    """Relative spectral-norm error of the accumulated family.

    ``E_k = ||M_{k,0} - M(t_k, t_0)||_2 / ||M(t_k, t_0)||_2``. For an
    observable-space family pass the observable map used to build it.
    """
    grid = family.grid
    if family.space == "observable" or obs is not None:
        if obs is None:
            raise DomainError("observable-space family needs the observable map")
        exact = observable_oracle(system, obs, grid)
    else:
        exact = fundamental_matrices(system, grid.times, grid.t0)
    if exact.shape != family.accumulated.shape:
        raise DomainError(
            f"family has operators of shape {family.accumulated.shape[1:]}, oracle {exact.shape[1:]}"
        )
    num = np.linalg.norm(family.accumulated - exact, ord=2, axis=(1, 2))
    den = np.linalg.norm(exact, ord=2, axis=(1, 2))
    return num / den


# ---------------------------------------------------------------------------
# Moving-stencil bias
# ---------------------------------------------------------------------------


def theorem2_bias(sigma, sigma_dot, omega, omega_dot, dt, frequency_drift_term=True):
    """Leading-order eigenvalue of a three-snapshot moving stencil.

    For ``x' = [[s, w], [-w, s]] x`` with slowly varying ``s(t)``, ``w(t)``,
    the least-squares operator on ``x(t-dt), x(t), x(t+dt)`` has an
    eigenvalue ``mu`` with

    ``ln|mu| = (s + w'/(2w)) dt``,
    ``arg mu = w dt sqrt(1 - s'/w^2 - w'^2/(4 w^4))``

    up to higher order in ``dt``. The ``w'^2`` term is kept by default; set
    ``frequency_drift_term=False`` to drop it.

    Returns
    -------
    (log_modulus, argument) : tuple of float
    """
    if omega == 0:
        raise DomainError("omega must be non-zero")
    rad = 1.0 - sigma_dot / omega**2
    if frequency_drift_term:
        rad -= omega_dot**2 / (4.0 * omega**4)
    if rad < 0:
        raise DomainError(f"radicand {rad:.3g} is negative; the stencil eigenvalues are real")
    return (sigma + omega_dot / (2.0 * omega)) * dt, omega * dt * np.sqrt(rad)


@dataclass(frozen=True, eq=False)
class BiasSweep:
    """Measured vs predicted moving-stencil eigenvalues.

    Arrays are ``[dt index, time index]`` and in rate units (divided by dt).
    ``order_re`` / ``order_arg`` are fitted slopes of ``log max_t |error|``
    against ``log dt``.
    """

    dts: np.ndarray
    times: np.ndarray
    measured_re: np.ndarray
    predicted_re: np.ndarray
    measured_arg: np.ndarray
    predicted_arg: np.ndarray
    order_re: float
    order_arg: float

    @property
    def error_re(self):
        return np.abs(self.measured_re - self.predicted_re)

    @property
    def error_arg(self):
        return np.abs(self.measured_arg - self.predicted_arg)


def _order(dts, err):
    e = np.max(err, axis=1)
    if np.any(e <= 0) or dts.size < 2:
        return float("nan")
    return float(np.polyfit(np.log(dts), np.log(e), 1)[0])


def bias_sweep(system: SpiralSystem, dts, times, x0=None, t0=0.0, frequency_drift_term=True):
    """Fit three-snapshot stencils around each time and compare with
    :func:`theorem2_bias`.

    ``system`` must be a single 2x2 spiral block.
    """
    if not (isinstance(system, SpiralSystem) and system.is_single_block):
        raise UnsupportedSystemError("bias sweep needs a single 2x2 spiral block system")
    b = system.blocks[0]
    if x0 is None:
        x0 = system.default_x0 or (1.0, 1.0)
    x0 = np.asarray(x0, dtype=float)
    dts = np.asarray(dts, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    shape = (dts.size, times.size)
    mre, pre, marg, parg = (np.empty(shape) for _ in range(4))
    for i, dt in enumerate(dts):
        for j, t in enumerate(times):
            grid = TimeGrid(t - dt, dt, 2)
            if grid.t0 < t0:
                raise DomainError(f"stencil at t={t} with dt={dt} starts before t0={t0}")
            Ms = fundamental_matrices(system, grid.times, t0)
            snaps = SnapshotMatrix(grid, np.einsum("kij,j->ik", Ms, x0))
            op = local_operator(snaps, StencilWindow(1, 2))
            mu = np.linalg.eigvals(op.M)
            mu = mu[np.argmax(mu.imag)] if b.omega(t) >= 0 else mu[np.argmin(mu.imag)]
            mre[i, j] = np.log(abs(mu)) / dt
            marg[i, j] = abs(np.angle(mu)) / dt
            lm, arg = theorem2_bias(
                float(np.real(b.sigma(t))), float(np.real(b.sigma.derivative(t))),
                float(np.real(b.omega(t))), float(np.real(b.omega.derivative(t))),
                dt, frequency_drift_term,
            )
            pre[i, j] = lm / dt
            parg[i, j] = abs(arg) / dt
    return BiasSweep(
        dts, times, mre, pre, marg, parg,
        _order(dts, np.abs(mre - pre)), _order(dts, np.abs(marg - parg)),
    )
