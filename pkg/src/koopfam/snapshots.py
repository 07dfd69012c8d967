"""Trajectory sampling, polar observables and snapshot persistence."""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np

from koopfam.errors import ConfigError, DomainError, OriginError, RankError
from koopfam.grid import SnapshotMatrix, TimeGrid
from koopfam.systems import LinearSystem, fundamental_matrices, integrate_rk4
from koopfam.tables import read_table, write_table

__all__ = [
    "TimeGrid",
    "SnapshotMatrix",
    "StencilWindow",
    "ObservableMap",
    "sample_trajectory",
    "apply_observables",
    "reconstruct_state",
    "select_active_observables",
    "write_snapshots",
    "read_snapshots",
    "parse_pairs",
]


@dataclass(frozen=True)
class StencilWindow:
    """Snapshot columns ``k-1, ..., k+s-1`` (``s+1`` columns, ``s`` pairs)."""

    k: int
    s: int

    def __post_init__(self):
        if self.s < 1:
            raise DomainError(f"stencil size must be >= 1, got {self.s}")
        if self.k < 1:
            raise DomainError(f"stencil anchor must be >= 1, got {self.k}")

    @property
    def first(self):
        return self.k - 1

    @property
    def last(self):
        return self.k + self.s - 1

    def check(self, n_columns):
        if self.last >= n_columns:
            raise DomainError(
                f"stencil k={self.k}, s={self.s} needs column {self.last} but only "
                f"{n_columns} columns exist"
            )
        return self

    def slices(self):
        """``(basis, shifted)`` column slices."""
        return slice(self.k - 1, self.k + self.s - 1), slice(self.k, self.k + self.s)


def sample_trajectory(system: LinearSystem, x0, grid: TimeGrid, substeps: int = 100) -> SnapshotMatrix:
    """Snapshots ``M(t_k, t0) x0`` on ``grid``.

    Analytic variants use the closed-form fundamental matrix; otherwise the
    RK4 oracle runs with ``substeps`` (at least 100) sub-steps per grid step.
    """
    x0 = np.asarray(x0)
    if x0.shape != (system.dim,):
        raise DomainError(f"x0 must have {system.dim} entries, got shape {x0.shape}")
    if system.has_oracle:
        M = fundamental_matrices(system, grid.times, grid.t0)
        values = np.einsum("kij,j->ik", M, x0)
        return SnapshotMatrix(grid, values)
    return integrate_rk4(system, x0, grid, substeps=max(100, int(substeps)))


def parse_pairs(text):
    """Parse ``"(0,2),(1,3)"`` into ``((0, 2), (1, 3))``."""
    try:
        value = ast.literal_eval(f"[{text}]")
        pairs = tuple((int(a), int(b)) for a, b in value)
    except (ValueError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse observable pairs {text!r}; expected e.g. '(0,1)' or '(0,2),(1,3)'") from exc
    if not pairs:
        raise ConfigError("at least one observable pair is required")
    return pairs


@dataclass(frozen=True)
class ObservableMap:
    """Polar (radius, unit phase) observables for coordinate pairs.

    Each pair ``(p, q)`` of state coordinates gives the observables
    ``r = sqrt(x_p^2 + x_q^2)`` and ``e = (x_p + i x_q) / r``. Coordinates
    in no pair are passed through unchanged after all pair observables.
    """

    pairs: tuple
    n: int

    def __post_init__(self):
        pairs = tuple((int(p), int(q)) for p, q in self.pairs)
        flat = [i for pq in pairs for i in pq]
        if len(set(flat)) != len(flat):
            raise ConfigError(f"observable pairs {pairs} overlap")
        if any(i < 0 or i >= self.n for i in flat):
            raise ConfigError(f"observable pairs {pairs} out of range for dimension {self.n}")
        object.__setattr__(self, "pairs", pairs)

    @property
    def passthrough(self):
        used = {i for pq in self.pairs for i in pq}
        return tuple(i for i in range(self.n) if i not in used)

    @property
    def m(self):
        return 2 * len(self.pairs) + len(self.passthrough)

    @property
    def labels(self):
        out = []
        for p, q in self.pairs:
            out += [f"r_{p + 1}_{q + 1}", f"e_{p + 1}_{q + 1}"]
        return tuple(out) + tuple(f"x{i + 1}" for i in self.passthrough)

    def forward(self, X):
        """Map states (columns of ``X``) to observables."""
        X = np.asarray(X)
        vec = X.ndim == 1
        X = X.reshape(self.n, -1)
        U = np.empty((self.m, X.shape[1]), dtype=complex)
        for j, (p, q) in enumerate(self.pairs):
            z = X[p] + 1j * X[q]
            r = np.abs(z)
            bad = np.flatnonzero(r == 0.0)
            if bad.size:
                raise OriginError(
                    f"trajectory hits coordinate origin of pair ({p},{q}) at column {int(bad[0])}"
                )
            U[2 * j] = r
            U[2 * j + 1] = z / r
        for j, i in enumerate(self.passthrough):
            U[2 * len(self.pairs) + j] = X[i]
        return U[:, 0] if vec else U

    def inverse(self, U, tol=1e-6):
        """Map observables back to states; phases must have unit modulus."""
        U = np.asarray(U)
        vec = U.ndim == 1
        U = U.reshape(self.m, -1)
        X = np.empty((self.n, U.shape[1]), dtype=complex)
        for j, (p, q) in enumerate(self.pairs):
            r, e = U[2 * j], U[2 * j + 1]
            dev = np.abs(np.abs(e) - 1.0)
            if np.any(dev > tol):
                col = int(np.argmax(dev))
                raise DomainError(f"phase observable of pair ({p},{q}) has modulus {abs(e[col])} at column {col}")
            # x_p = r (e + conj e)/2, x_q = r (e - conj e)/2i
            X[p] = r * (e + e.conj()) / 2
            X[q] = r * (e - e.conj()) / 2j
        for j, i in enumerate(self.passthrough):
            X[i] = U[2 * len(self.pairs) + j]
        if np.max(np.abs(X.imag), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(X), initial=0.0)):
            X = X.real
        return X[:, 0] if vec else X


def apply_observables(obs: ObservableMap, snaps: SnapshotMatrix) -> SnapshotMatrix:
    """Transform state snapshots to polar observables."""
    if snaps.n_rows != obs.n:
        raise DomainError(f"observable map expects {obs.n} state rows, snapshots have {snaps.n_rows}")
    return SnapshotMatrix(snaps.grid, obs.forward(snaps.values), obs.labels)


def reconstruct_state(obs: ObservableMap, u_snaps: SnapshotMatrix, tol=1e-6) -> SnapshotMatrix:
    """Inverse of :func:`apply_observables`."""
    if u_snaps.n_rows != obs.m:
        raise DomainError(f"observable map expects {obs.m} observable rows, got {u_snaps.n_rows}")
    return SnapshotMatrix(u_snaps.grid, obs.inverse(u_snaps.values, tol=tol))


def select_active_observables(snaps: SnapshotMatrix, window: StencilWindow, tol=1e-12,
                              exclude=None, rank_tol=1e-13):
    """Rows that move within ``window`` and keep the stencil basis full rank.

    A row is active if its values change by more than ``tol`` over the
    window columns. Active rows are then added greedily in index order,
    keeping each only if it raises the numerical rank of the restricted
    stencil basis (singular values above ``rank_tol * sigma_max``).

    Parameters
    ----------
    exclude : iterable of int, optional
        Rows dropped up front (e.g. one row of a conserved total).

    Raises
    ------
    RankError
        No row qualifies.
    """
    window.check(snaps.values.shape[1])
    skip = set(exclude or ())
    cols = snaps.values[:, window.first:window.last + 1]
    spread = np.max(np.abs(cols - cols[:, :1]), axis=1)
    candidates = [i for i in range(snaps.n_rows) if i not in skip and spread[i] > tol]
    basis = snaps.values[:, window.slices()[0]]
    chosen = []
    rank = 0
    for i in candidates:
        trial = chosen + [i]
        sv = np.linalg.svd(basis[trial], compute_uv=False)
        r = int(np.sum(sv > rank_tol * sv[0])) if sv[0] > 0 else 0
        if r > rank:
            chosen, rank = trial, r
    if not chosen:
        raise RankError(f"no active observables in window k={window.k}, s={window.s}")
    return tuple(chosen)


def write_snapshots(path, snaps: SnapshotMatrix):
    """Write ``t,<labels>``; complex data uses ``re_<label>,im_<label>``."""
    V = snaps.values
    t = snaps.times
    if np.iscomplexobj(V):
        header = ["t"] + [f"{part}_{lab}" for lab in snaps.labels for part in ("re", "im")]
        parts = np.empty((2 * V.shape[0], V.shape[1]))
        parts[0::2], parts[1::2] = V.real, V.imag
    else:
        header = ["t"] + list(snaps.labels)
        parts = V
    rows = ([t[k]] + list(parts[:, k]) for k in range(V.shape[1]))
    write_table(path, "snapshots", header, rows)


def read_snapshots(path) -> SnapshotMatrix:
    """Read a file written by :func:`write_snapshots`."""
    _, header, rows = read_table(path, "snapshots")
    if not header or header[0] != "t":
        raise ConfigError(f"{path}: first column must be 't'")
    if not rows:
        raise ConfigError(f"{path}: no snapshot rows")
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric value: {exc}") from exc
    t = data[:, 0]
    cols = header[1:]
    if cols and all(c.startswith(("re_", "im_")) for c in cols) and len(cols) % 2 == 0 \
            and all(cols[i][3:] == cols[i + 1][3:] and cols[i].startswith("re_") for i in range(0, len(cols), 2)):
        values = (data[:, 1::2] + 1j * data[:, 2::2]).T
        labels = tuple(c[3:] for c in cols[0::2])
    else:
        values = data[:, 1:].T
        labels = tuple(cols)
    K = len(t) - 1
    if K == 0:
        grid = TimeGrid(t[0], 1.0, 0)
    else:
        dt = float(f"{(t[-1] - t[0]) / K:.12g}")
        grid = TimeGrid(t[0], dt, K)
        if np.max(np.abs(grid.times - t)) > 1e-9 * max(1.0, abs(t[-1])):
            raise ConfigError(f"{path}: time column is not a uniform grid")
    return SnapshotMatrix(grid, values, labels)
