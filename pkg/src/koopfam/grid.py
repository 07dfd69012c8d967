"""Uniform time grids and snapshot matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from koopfam.errors import DomainError

__all__ = ["TimeGrid", "SnapshotMatrix"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t0 + k * dt`` for ``k = 0..steps``."""

    t0: float
    dt: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 0:
            raise DomainError(f"steps must be a non-negative integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def times(self):
        # Integer multiples keep switch-time comparisons reproducible.
        return self.t0 + np.arange(self.steps + 1) * self.dt

    def time(self, k):
        return self.t0 + k * self.dt

    @property
    def t_end(self):
        return self.time(self.steps)

    def __len__(self):
        return self.steps + 1


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    """Column-per-time observable data on a :class:`TimeGrid`.

    ``values[:, k]`` is the observable vector at ``grid.time(k)``.
    """

    grid: TimeGrid
    values: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if values.ndim != 2:
            raise DomainError("snapshot values must be 2-D (observables x times)")
        if values.shape[1] != self.grid.steps + 1:
            raise DomainError(
                f"expected {self.grid.steps + 1} snapshot columns, got {values.shape[1]}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("snapshot values must be finite")
        if np.iscomplexobj(values) and np.all(values.imag == 0):
            values = values.real.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        labels = tuple(self.labels) if self.labels else tuple(f"x{i + 1}" for i in range(values.shape[0]))
        if len(labels) != values.shape[0]:
            raise DomainError("one label per observable row is required")
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def times(self):
        return self.grid.times

    def column(self, k):
        return self.values[:, k]

    def rows(self, index):
        """Restriction to a subset of observable rows."""
        index = list(index)
        return SnapshotMatrix(self.grid, self.values[index], tuple(self.labels[i] for i in index))
