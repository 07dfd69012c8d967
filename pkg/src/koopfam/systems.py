"""Linear non-autonomous systems ``x' = A(t) x`` and their exact oracles.

Four variants are supported:

* :class:`HybridSystem` -- piecewise-constant ``A(t)`` with switch times.
* :class:`SpiralSystem` -- disjoint 2x2 blocks ``[[s, w], [-w, s]]`` with
  scalar ``s(t)``, ``w(t)`` (commuting in time).
* :class:`CommutingSystem` -- ``A(t) = R diag(rates(t)) R^-1`` with a fixed
  eigenvector matrix ``R``.
* :class:`GenericSystem` -- any matrix-valued callable; only the RK4 oracle
  applies.

Scalar coefficient functions are restricted to the constant+cosine+sine
family (:class:`TrigFunction`) so that their integrals are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from koopfam import linalg
from koopfam.errors import ConfigError, DomainError, NumericalError, UnsupportedSystemError
from koopfam.grid import SnapshotMatrix, TimeGrid
from koopfam.spectral import track_branches

__all__ = [
    "TrigFunction",
    "LinearSystem",
    "HybridSystem",
    "SpiralBlock",
    "SpiralSystem",
    "CommutingSystem",
    "GenericSystem",
    "FundamentalMatrix",
    "KoopmanSpectrumExact",
    "fundamental_matrix",
    "fundamental_matrices",
    "integrate_rk4",
    "koopman_exact",
    "koopman_exact_series",
    "coupled_frequencies",
    "coupled_oscillator_matrix",
    "SNAP_TOL",
]

#: Times closer than this are treated as equal when locating switches.
SNAP_TOL = 1e-12


@dataclass(frozen=True)
class TrigFunction:
    """``f(t) = const + cos_amp*cos(freq*t) + sin_amp*sin(freq*t)``.

    Coefficients may be complex (used for eigenvalue functions of
    :class:`CommutingSystem`).
    """

    const: complex = 0.0
    cos_amp: complex = 0.0
    sin_amp: complex = 0.0
    freq: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.const + self.cos_amp * np.cos(self.freq * t) + self.sin_amp * np.sin(self.freq * t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        w = self.freq
        return -self.cos_amp * w * np.sin(w * t) + self.sin_amp * w * np.cos(w * t)

    def integral(self, t, t0):
        """Exact ``int_{t0}^{t} f``."""
        t = np.asarray(t, dtype=float)
        w = self.freq
        if w == 0.0:
            return (self.const + self.cos_amp) * (t - t0)
        return (
            self.const * (t - t0)
            + (self.cos_amp / w) * (np.sin(w * t) - np.sin(w * t0))
            - (self.sin_amp / w) * (np.cos(w * t) - np.cos(w * t0))
        )

    @property
    def is_constant(self):
        return self.freq == 0.0 or (self.cos_amp == 0 and self.sin_amp == 0)

    @classmethod
    def constant(cls, value):
        return cls(const=value)


@dataclass(frozen=True, eq=False, kw_only=True)
class LinearSystem:
    """Fields shared by every system variant.

    ``origin`` records ``(catalog_name, overrides)`` for systems built by
    :func:`koopfam.catalog.catalog` so that configs serialise canonically.
    """

    name: str = ""
    default_x0: tuple | None = None
    conserved_row: int | None = None
    observable_pairs: tuple | None = None
    origin: tuple | None = None

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def matrix(self, t) -> np.ndarray:
        return self.matrices(np.atleast_1d(np.asarray(t, dtype=float)))[0]

    def matrices(self, times) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_oracle(self) -> bool:
        return True


@dataclass(frozen=True, eq=False, kw_only=True)
class HybridSystem(LinearSystem):
    """``A(t) = matrices[l]`` on ``[switch_times[l], switch_times[l+1])``.

    The first matrix also applies before ``switch_times[0]`` and the last one
    after the final switch.
    """

    switch_times: tuple
    matrices_: tuple = field(default=())

    def __post_init__(self):
        T = np.asarray(self.switch_times, dtype=float)
        mats = tuple(np.array(M, dtype=float) for M in self.matrices_)
        if T.ndim != 1 or T.size == 0:
            raise ConfigError("hybrid system needs at least one switch time")
        if T.size != len(mats):
            raise ConfigError(f"{T.size} switch times but {len(mats)} matrices")
        if np.any(np.diff(T) <= 0):
            raise ConfigError("switch times must be strictly increasing")
        n = mats[0].shape[0]
        for i, M in enumerate(mats):
            if M.shape != (n, n):
                raise ConfigError(f"matrix {i} has shape {M.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(M)):
                raise ConfigError(f"matrix {i} has non-finite entries")
            M.setflags(write=False)
        object.__setattr__(self, "switch_times", tuple(float(x) for x in T))
        object.__setattr__(self, "matrices_", mats)

    @property
    def dim(self):
        return self.matrices_[0].shape[0]

    @property
    def segment_matrices(self):
        return self.matrices_

    def segment_index(self, t):
        """Index ``l`` of the segment containing ``t`` (switches snapped)."""
        T = np.asarray(self.switch_times)
        idx = np.searchsorted(T, np.asarray(t, dtype=float) + SNAP_TOL, side="right") - 1
        return np.clip(idx, 0, len(T) - 1)

    def matrices(self, times):
        idx = np.atleast_1d(self.segment_index(times))
        return np.stack([self.matrices_[i] for i in idx])


@dataclass(frozen=True)
class SpiralBlock:
    """2x2 block ``[[sigma, omega], [-omega, sigma]]`` on coordinates ``pair``."""

    pair: tuple
    sigma: TrigFunction
    omega: TrigFunction

    def alpha(self, t, t0):
        return np.real(self.sigma.integral(t, t0))

    def beta(self, t, t0):
        return np.real(self.omega.integral(t, t0))


@dataclass(frozen=True, eq=False, kw_only=True)
class SpiralSystem(LinearSystem):
    """Block-diagonal (after permutation) system of spiral blocks.

    Coordinates not covered by a block have zero dynamics.
    """

    n: int
    blocks: tuple

    def __post_init__(self):
        seen = set()
        for b in self.blocks:
            p, q = b.pair
            if p == q or not (0 <= p < self.n and 0 <= q < self.n):
                raise ConfigError(f"invalid spiral pair {b.pair} for dimension {self.n}")
            if p in seen or q in seen:
                raise ConfigError("spiral block pairs must be disjoint")
            seen.update((p, q))
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self):
        return self.n

    def matrices(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        A = np.zeros((times.size, self.n, self.n))
        for b in self.blocks:
            p, q = b.pair
            s = np.real(b.sigma(times))
            w = np.real(b.omega(times))
            A[:, p, p] = s
            A[:, q, q] = s
            A[:, p, q] = w
            A[:, q, p] = -w
        return A

    @property
    def is_single_block(self):
        return self.n == 2 and len(self.blocks) == 1


@dataclass(frozen=True, eq=False, kw_only=True)
class CommutingSystem(LinearSystem):
    """``A(t) = R diag(rates_i(t)) R^-1`` with time-independent ``R``."""

    R: np.ndarray
    rates: tuple

    def __post_init__(self):
        R = np.array(self.R, dtype=complex if np.iscomplexobj(self.R) else float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ConfigError("R must be square")
        if len(self.rates) != R.shape[0]:
            raise ConfigError("one rate function per eigenvector is required")
        if np.linalg.cond(R) > 1e12:
            raise ConfigError("eigenvector matrix R is not invertible")
        R.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "rates", tuple(self.rates))

    @property
    def dim(self):
        return self.R.shape[0]

    def _exponents(self, t, t0):
        return np.stack([np.asarray(f.integral(t, t0), dtype=complex) for f in self.rates], axis=-1)

    def matrices(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        lam = np.stack([np.asarray(f(times), dtype=complex) for f in self.rates], axis=-1)
        Rinv = np.linalg.inv(self.R)
        A = np.einsum("ij,tj,jk->tik", self.R, lam, Rinv)
        return _realify(A)


@dataclass(frozen=True, eq=False, kw_only=True)
class GenericSystem(LinearSystem):
    """Arbitrary ``A(t)`` given as a callable returning an ``(n, n)`` array."""

    n: int
    func: Callable = None

    @property
    def dim(self):
        return self.n

    @property
    def has_oracle(self):
        return False

    def matrices(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.size, self.n, self.n), dtype=complex)
        for i, t in enumerate(times):
            A = np.asarray(self.func(float(t)))
            if A.shape != (self.n, self.n) or not np.all(np.isfinite(A)):
                raise NumericalError(f"A(t) is not a finite {self.n}x{self.n} matrix at t={t}")
            out[i] = A
        return _realify(out)


def _realify(A, tol=1e-12):
    if np.iscomplexobj(A):
        scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
        if np.max(np.abs(A.imag), initial=0.0) <= tol * scale:
            return A.real.copy()
    return A


# ---------------------------------------------------------------------------
# Fundamental matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    """``M`` maps a state at ``t0`` to the state at ``t``."""

    t: float
    t0: float
    M: np.ndarray


def _check_times(times, t0):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < t0 - SNAP_TOL):
        raise DomainError(f"fundamental matrix needs t >= t0 (t0={t0}, min t={times.min()})")
    return times


def fundamental_matrices(system: LinearSystem, times, t0) -> np.ndarray:
    """Exact fundamental matrices ``M(t, t0)`` for an array of times.

    Returns an array of shape ``(len(times), n, n)``.
    """
    times = _check_times(times, t0)
    if isinstance(system, HybridSystem):
        return _hybrid_fundamental(system, times, float(t0))
    if isinstance(system, SpiralSystem):
        return _spiral_fundamental(system, times, float(t0))
    if isinstance(system, CommutingSystem):
        E = np.exp(system._exponents(times, float(t0)))
        M = np.einsum("ij,tj,jk->tik", system.R, E, np.linalg.inv(system.R))
        return _realify(M)
    raise UnsupportedSystemError(
        f"no closed-form fundamental matrix for {type(system).__name__}; use integrate_rk4"
    )


def fundamental_matrix(system: LinearSystem, t, t0) -> FundamentalMatrix:
    """Exact fundamental matrix ``M(t, t0)`` of an analytic system variant."""
    M = fundamental_matrices(system, [t], t0)[0]
    return FundamentalMatrix(t=float(t), t0=float(t0), M=M)


def _hybrid_fundamental(system, times, t0):
    n = system.dim
    T = np.asarray(system.switch_times)
    tmax = float(times.max()) if times.size else t0
    inner = T[(T > t0 + SNAP_TOL) & (T < tmax - SNAP_TOL)]
    breaks = np.concatenate([[t0], inner])
    at_break = [np.eye(n)]
    for a, b in zip(breaks[:-1], breaks[1:]):
        A = system.matrices_[int(system.segment_index(0.5 * (a + b)))]
        at_break.append(linalg.expm(A * (b - a)) @ at_break[-1])

    out = np.empty((times.size, n, n))
    j = np.searchsorted(breaks, times + SNAP_TOL, side="right") - 1
    j = np.clip(j, 0, len(breaks) - 1)
    for jb in np.unique(j):
        sel = np.flatnonzero(j == jb)
        tau = times[sel] - breaks[jb]
        mid = breaks[jb] + 0.5 * np.maximum(tau, 0.0)
        seg = system.segment_index(mid)
        for l in np.unique(seg):
            s2 = sel[seg == l]
            tau2 = np.maximum(times[s2] - breaks[jb], 0.0)
            tau2[tau2 <= SNAP_TOL] = 0.0
            E = linalg.expm(system.matrices_[int(l)][None, :, :] * tau2[:, None, None])
            out[s2] = E @ at_break[jb]
    return out


def _spiral_fundamental(system, times, t0):
    n = system.dim
    M = np.zeros((times.size, n, n))
    M[:, np.arange(n), np.arange(n)] = 1.0
    for b in system.blocks:
        p, q = b.pair
        ea = np.exp(b.alpha(times, t0))
        be = b.beta(times, t0)
        c, s = ea * np.cos(be), ea * np.sin(be)
        M[:, p, p] = c
        M[:, q, q] = c
        M[:, p, q] = s
        M[:, q, p] = -s
    return M


# ---------------------------------------------------------------------------
# RK4 oracle
# ---------------------------------------------------------------------------


def _rk4_propagators(system, a, b, substeps):
    """One-step RK4 propagators over intervals ``[a_i, b_i]``.

    For hybrid systems each interval must lie inside one segment; the
    segment matrix is then used for every stage.
    """
    n = system.dim
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = (b - a) / substeps
    eye = np.eye(n)
    hybrid = isinstance(system, HybridSystem)
    Phi = np.broadcast_to(eye, (a.size, n, n)).astype(float)
    hh = h[:, None, None]
    for j in range(substeps):
        ta = a + j * h
        if hybrid:
            A1 = system.matrices(ta + 0.5 * h)
            A2 = A4 = A1
        else:
            A1 = system.matrices(ta)
            A2 = system.matrices(ta + 0.5 * h)
            A4 = system.matrices(ta + h)
        if np.iscomplexobj(A1) or np.iscomplexobj(A2) or np.iscomplexobj(A4):
            Phi = Phi.astype(complex)
        K1 = A1
        K2 = A2 @ (eye + 0.5 * hh * K1)
        K3 = A2 @ (eye + 0.5 * hh * K2)
        K4 = A4 @ (eye + hh * K3)
        P = eye + (hh / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        Phi = P @ Phi
    return Phi


def integrate_rk4(system: LinearSystem, x0, grid: TimeGrid, substeps: int = 100) -> SnapshotMatrix:
    """Classical fourth-order Runge-Kutta trajectory on ``grid``.

    Each grid step is split into ``substeps`` RK4 steps. For hybrid systems,
    grid steps that contain a switch time are additionally split at the
    switch so that no RK4 step straddles a discontinuity.
    """
    if int(substeps) != substeps or substeps < 1:
        raise DomainError("substeps must be a positive integer")
    x0 = np.asarray(x0)
    if x0.shape != (system.dim,):
        raise DomainError(f"x0 must have shape ({system.dim},), got {x0.shape}")
    times = grid.times
    a, b = times[:-1], times[1:]
    props = np.empty((grid.steps, system.dim, system.dim), dtype=complex)
    plain = np.ones(grid.steps, dtype=bool)
    if isinstance(system, HybridSystem):
        T = np.asarray(system.switch_times)
        for k in range(grid.steps):
            inside = T[(T > a[k] + SNAP_TOL) & (T < b[k] - SNAP_TOL)]
            if inside.size:
                plain[k] = False
                edges = np.concatenate([[a[k]], inside, [b[k]]])
                P = np.eye(system.dim)
                for lo, hi in zip(edges[:-1], edges[1:]):
                    P = _rk4_propagators(system, [lo], [hi], substeps)[0] @ P
                props[k] = P
    if plain.any():
        idx = np.flatnonzero(plain)
        chunk = 4096
        for start in range(0, idx.size, chunk):
            sel = idx[start:start + chunk]
            props[sel] = _rk4_propagators(system, a[sel], b[sel], substeps)
    out = np.empty((system.dim, grid.steps + 1), dtype=complex)
    out[:, 0] = x0
    for k in range(grid.steps):
        out[:, k + 1] = props[k] @ out[:, k]
    if not np.all(np.isfinite(out)):
        raise NumericalError("RK4 trajectory overflowed")
    if not np.iscomplexobj(x0) and np.max(np.abs(out.imag)) == 0.0:
        out = out.real
    return SnapshotMatrix(grid, out)


# ---------------------------------------------------------------------------
# Exact Koopman spectrum
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KoopmanSpectrumExact:
    """Koopman eigen-triples of ``M(t, t0)``.

    ``eigenvalues[i]`` is the continuous exponent ``lambda_i`` with
    ``exp(lambda_i)`` an eigenvalue of ``M``; eigenfunctions are
    ``phi_i(x) = left[:, i].conj() @ x`` and modes are ``modes[:, i]``.
    """

    t: float
    t0: float
    eigenvalues: np.ndarray
    left: np.ndarray
    modes: np.ndarray

    def eigenfunctions(self, x):
        return self.left.conj().T @ np.asarray(x)

    def expand(self, x0):
        """``sum_i exp(lambda_i) phi_i(x0) v_i``."""
        return self.modes @ (np.exp(self.eigenvalues) * self.eigenfunctions(x0))


def _spiral_exact(system, t, t0):
    n = system.dim
    lam = np.zeros(n, dtype=complex)
    V = np.zeros((n, n), dtype=complex)
    used = set()
    col = 0
    for b in system.blocks:
        p, q = b.pair
        a = float(b.alpha(t, t0))
        be = float(b.beta(t, t0))
        for sign in (1.0, -1.0):
            lam[col] = a + 1j * sign * be
            V[p, col] = 1 / np.sqrt(2)
            V[q, col] = 1j * sign / np.sqrt(2)
            col += 1
        used.update((p, q))
    for j in range(n):
        if j not in used:
            V[j, col] = 1.0
            col += 1
    return lam, V


def _commuting_exact(system, t, t0):
    lam = np.asarray(system._exponents(np.asarray(t, dtype=float), t0), dtype=complex).reshape(-1)
    V = linalg._normalise_columns(system.R)
    return lam, V


def _ordered(lam, V):
    order = linalg.canonical_order(np.exp(lam))
    V = V[:, order]
    return lam[order], V, np.linalg.inv(V).conj().T


def koopman_exact(system: LinearSystem, t, t0, path_dt=0.01) -> KoopmanSpectrumExact:
    """Exact Koopman eigenvalues, eigenfunctions and modes for ``(t, t0)``.

    Spiral and commuting systems use the accumulated integrals directly;
    hybrid systems track eigenvalue branches of ``M(tau, t0)`` along
    ``tau in [t0, t]`` with spacing at most ``path_dt``.
    """
    if t < t0 - SNAP_TOL:
        raise DomainError("koopman_exact needs t >= t0")
    if isinstance(system, SpiralSystem):
        lam, V, W = _ordered(*_spiral_exact(system, t, t0))
        return KoopmanSpectrumExact(float(t), float(t0), lam, W, V)
    if isinstance(system, CommutingSystem):
        lam, V, W = _ordered(*_commuting_exact(system, t, t0))
        return KoopmanSpectrumExact(float(t), float(t0), lam, W, V)
    if isinstance(system, HybridSystem):
        steps = max(1, int(np.ceil((t - t0) / path_dt)))
        path = t0 + (t - t0) * np.arange(steps + 1) / steps
        return koopman_exact_series(system, path, t0)[-1]
    raise UnsupportedSystemError(f"no exact Koopman spectrum for {type(system).__name__}")


def koopman_exact_series(system: LinearSystem, times, t0) -> list:
    """:func:`koopman_exact` at every entry of an increasing ``times`` array.

    For hybrid systems the branch continuity is taken along ``times``
    itself, which should therefore start at ``t0`` and be reasonably fine.
    """
    times = _check_times(times, t0)
    if not isinstance(system, HybridSystem):
        return [koopman_exact(system, float(t), t0) for t in times]
    Ms = fundamental_matrices(system, times, t0)
    decs = [linalg.eig(M) for M in Ms]
    track = track_branches([d.values for d in decs])
    out = []
    for k, (t, d) in enumerate(zip(times, decs)):
        # track.values[k] are branch-ordered; map back to canonical positions.
        lam = np.empty_like(track.exponents[k])
        lam[track.permutation[k]] = track.exponents[k]
        out.append(KoopmanSpectrumExact(float(t), float(t0), lam, d.left, d.right))
    return out


# ---------------------------------------------------------------------------
# Coupled oscillators
# ---------------------------------------------------------------------------


def coupled_frequencies(m1, m2, k1, k2, k3):
    """Natural frequencies ``(w1, w2)``, ``w1 >= w2 > 0``, of two masses
    coupled by springs ``k1 | m1 | k2 | m2 | k3`` (generalised eigenproblem
    ``det(K - nu M) = 0``, ``w = sqrt(nu)``)."""
    if m1 <= 0 or m2 <= 0 or k1 <= 0 or k3 <= 0 or k2 < 0:
        raise DomainError("masses and outer elasticities must be positive, k2 non-negative")
    K = np.array([[k1 + k2, -k2], [-k2, k2 + k3]], dtype=float)
    Mm = np.diag([float(m1), float(m2)])
    nu = scipy.linalg.eigh(K, Mm, eigvals_only=True)
    w = np.sqrt(np.sort(nu)[::-1])
    return float(w[0]), float(w[1])


def coupled_oscillator_matrix(m1, m2, k1, k2, k3):
    """First-order system matrix for states ``(x1, x2, x1', x2')``."""
    return np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-(k1 + k2) / m1, k2 / m1, 0.0, 0.0],
            [k2 / m2, -(k2 + k3) / m2, 0.0, 0.0],
        ]
    )
