"""Axis-aligned grid over ``[0, 1]^d`` with cells of side ``epsilon``.

Cell ``j`` along an axis covers ``[j*eps, (j+1)*eps)``; the last cell also
takes the point 1.0. Cells are addressed by integer tuples and never
materialized as objects.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError

CellIndex = tuple[int, ...]


def format_cell(c) -> str:
    return ",".join(str(int(v)) for v in c)


def parse_cell(text: str) -> CellIndex:
    return tuple(int(v) for v in text.split(","))


@dataclass(frozen=True)
class GridPartition:
    dimension: int
    cell_side: float

    def __post_init__(self):
        if self.dimension < 1:
            raise ArgumentError(f"dimension must be >= 1, got {self.dimension}")
        if not (0 < self.cell_side <= 1):
            raise ArgumentError(f"cell side must be in (0, 1], got {self.cell_side}")

    @property
    def cells_per_axis(self) -> int:
        # round() absorbs representation error, e.g. 1/0.004 -> 250 not 251
        return math.ceil(round(1.0 / self.cell_side, 9))

    @property
    def cell_volume(self) -> float:
        return self.cell_side ** self.dimension

    @property
    def cell_count(self) -> int:
        return self.cells_per_axis ** self.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_axis,) * self.dimension

    @property
    def integral(self) -> bool:
        """True when the cells tile the box exactly (1/epsilon is an integer)."""
        return abs(self.cells_per_axis * self.cell_side - 1.0) < 1e-9

    def cell_indices(self, X) -> np.ndarray:
        """Vectorized :meth:`cell_of` for an ``(m, d)`` array."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dimension:
            raise ArgumentError(f"expected dimension {self.dimension}, got {X.shape[1]}")
        if not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0:
            raise DomainError("point outside [0, 1]^d")
        eps, k = self.cell_side, self.cells_per_axis
        idx = np.floor(X / eps).astype(np.int64)
        # Make membership agree with the interval bounds j*eps as computed in
        # floating point, so boundary points land in the higher cell.
        idx += (idx + 1) * eps <= X
        idx -= idx * eps > X
        return np.clip(idx, 0, k - 1)

    def cell_of(self, x) -> CellIndex:
        return tuple(int(v) for v in self.cell_indices(np.asarray(x, dtype=np.float64)[None, :])[0])

    def _check(self, c):
        c = tuple(int(v) for v in c)
        if len(c) != self.dimension or any(v < 0 or v >= self.cells_per_axis for v in c):
            raise ArgumentError(f"cell index {c} out of bounds for {self.shape}")
        return c

    def center_of(self, c) -> tuple[float, ...]:
        c = self._check(c)
        return tuple(min((v + 0.5) * self.cell_side, 1.0) for v in c)

    def bounds_of(self, c):
        """Lower and upper corners of the cell box, clipped to the unit box."""
        c = np.asarray(self._check(c), dtype=np.float64)
        lower = c * self.cell_side
        upper = np.minimum((c + 1) * self.cell_side, 1.0)
        return lower, upper

    def axis_centers(self) -> np.ndarray:
        return np.minimum((np.arange(self.cells_per_axis) + 0.5) * self.cell_side, 1.0)

    def group_points(self, ds) -> dict[CellIndex, list[int]]:
        """Map each occupied cell to the indices of the points it holds."""
        if ds.dimension != self.dimension:
            raise ArgumentError(f"dataset dimension {ds.dimension} != partition dimension {self.dimension}")
        groups = defaultdict(list)
        for i, c in enumerate(map(tuple, self.cell_indices(ds.X).tolist())):
            groups[c].append(i)
        return dict(groups)


# Module-level aliases matching the operation names used elsewhere.
def cell_of(p: GridPartition, x) -> CellIndex:
    return p.cell_of(x)


def center_of(p: GridPartition, c) -> tuple[float, ...]:
    return p.center_of(c)


def group_points(p: GridPartition, ds) -> dict[CellIndex, list[int]]:
    return p.group_points(ds)
