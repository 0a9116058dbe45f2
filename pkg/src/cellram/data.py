"""Labeled datasets on the unit hypercube: CSV ingestion, splitting, and
synthetic two-class generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, DegenerateDatasetError, DomainError, ParseError


class LabeledPoint(NamedTuple):
    x: tuple[float, ...]
    label: int


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Points in ``[0, 1]^d`` with integer class labels.

    ``X`` has shape ``(n, d)`` and ``y`` shape ``(n,)``. Both arrays are made
    read-only on construction.
    """

    X: np.ndarray
    y: np.ndarray
    classes: tuple[int, ...] = field(default=())
    name: str = ""

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DegenerateDatasetError("dataset must be a non-empty (n, d) array")
        if y.shape != (X.shape[0],):
            raise ArgumentError(f"label array shape {y.shape} does not match {X.shape[0]} points")
        if not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0:
            raise DomainError("coordinates must lie in [0, 1]")
        if np.any(y < 0):
            raise ArgumentError("labels must be non-negative integers")
        present = tuple(int(c) for c in np.unique(y))
        classes = tuple(sorted(int(c) for c in self.classes)) if self.classes else present
        if not set(present) <= set(classes):
            raise ArgumentError(f"labels {present} not within declared classes {classes}")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "classes", classes)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    @property
    def points(self) -> list[LabeledPoint]:
        return [LabeledPoint(tuple(map(float, x)), int(l)) for x, l in zip(self.X, self.y)]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.classes == other.classes
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def subset(self, idx, name=None) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.X[idx], self.y[idx], self.classes, name or self.name)


def require_two_classes(ds: LabeledDataset) -> None:
    if len(np.unique(ds.y)) < 2:
        raise DegenerateDatasetError(
            f"dataset {ds.name!r} has fewer than 2 distinct labels; r-separation is undefined"
        )


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_dataset(path, format="csv") -> LabeledDataset:
    """Read ``d`` coordinate columns followed by one integer label column.

    A non-numeric first row is treated as a header.
    """
    if format != "csv":
        raise ArgumentError(f"unsupported dataset format {format!r}")
    path = Path(path)
    coords, labels = [], []
    arity = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [cell.strip() for cell in row]
            if not row or all(cell == "" for cell in row):
                continue
            if lineno == 1 and not all(_is_number(cell) for cell in row):
                continue
            if len(row) < 2:
                raise ParseError("expected at least one coordinate and a label", lineno)
            if arity is None:
                arity = len(row)
            elif len(row) != arity:
                raise ParseError(f"expected {arity} columns, found {len(row)}", lineno)
            try:
                x = [float(cell) for cell in row[:-1]]
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {row[:-1]}", lineno) from None
            try:
                label = float(row[-1])
            except ValueError:
                raise ParseError(f"non-numeric label {row[-1]!r}", lineno) from None
            if not label.is_integer() or label < 0:
                raise ParseError(f"label {row[-1]!r} is not a non-negative integer", lineno)
            if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in x):
                raise DomainError(f"coordinate outside [0, 1]: {row[:-1]}", lineno)
            coords.append(x)
            labels.append(int(label))
    if not coords:
        raise DegenerateDatasetError(f"{path} contains no data rows")
    ds = LabeledDataset(np.array(coords), np.array(labels), name=path.stem)
    require_two_classes(ds)
    return ds


def save_dataset(ds: LabeledDataset, path, header=True) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{j}" for j in range(ds.dimension)] + ["label"])
        for x, label in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in x] + [int(label)])


def split(ds: LabeledDataset, test_fraction: float, seed: int):
    """Deterministic shuffle split into ``(train, test)``.

    The test size is ``ceil(test_fraction * n)`` clamped to ``[1, n - 1]`` so
    neither side is ever empty.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ArgumentError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if ds.n < 2:
        raise ArgumentError(f"cannot split a dataset of {ds.n} point(s)")
    n_test = min(max(math.ceil(test_fraction * ds.n), 1), ds.n - 1)
    perm = np.random.default_rng(seed).permutation(ds.n)
    train = ds.subset(np.sort(perm[n_test:]), f"{ds.name}-train")
    test = ds.subset(np.sort(perm[:n_test]), f"{ds.name}-test")
    return train, test


# Synthetic families. Points come from a Gaussian mixture clipped to the unit
# square; the label is the side of a sinusoidal boundary
#   x2 = 0.5 + amplitude * sin(2*pi*frequency*x1 + phase)
# and points closer than gap/2 (vertically) to the boundary are rejected, so
# every family is r-separated by construction.
SYNTHETIC_FAMILIES = {
    "two_blob": dict(
        means=[(0.40, 0.38), (0.60, 0.62)],
        sds=[0.12, 0.12],
        weights=[0.5, 0.5],
        amplitude=0.18,
        frequency=1.1,
        phase=0.0,
        gap=0.01,
    ),
    "sparse_ds1": dict(
        means=[(0.25, 0.30), (0.75, 0.30), (0.25, 0.70), (0.75, 0.70)],
        sds=[0.22, 0.22, 0.22, 0.22],
        weights=[0.25, 0.25, 0.25, 0.25],
        amplitude=0.08,
        frequency=1.5,
        phase=0.5,
        gap=0.03,
    ),
    "dense_ds2": dict(
        means=[(0.2, 0.45), (0.4, 0.55), (0.6, 0.45), (0.8, 0.55), (0.3, 0.5), (0.7, 0.5)],
        sds=[0.07, 0.07, 0.07, 0.07, 0.07, 0.07],
        weights=[1 / 6] * 6,
        amplitude=0.06,
        frequency=2.0,
        phase=0.0,
        gap=0.008,
    ),
}


def boundary_height(family: str, x1):
    p = SYNTHETIC_FAMILIES[family]
    return 0.5 + p["amplitude"] * np.sin(2 * np.pi * p["frequency"] * np.asarray(x1) + p["phase"])


def synthetic_label(family: str, X):
    """Ground-truth labeling rule of a synthetic family (1 above the boundary)."""
    X = np.atleast_2d(X)
    return (X[:, 1] > boundary_height(family, X[:, 0])).astype(np.int64)


def generate_synthetic(family: str, n: int, seed: int) -> LabeledDataset:
    if family not in SYNTHETIC_FAMILIES:
        raise ArgumentError(f"unknown synthetic family {family!r}; choose from {sorted(SYNTHETIC_FAMILIES)}")
    if n < 10:
        raise ArgumentError(f"n must be >= 10, got {n}")
    p = SYNTHETIC_FAMILIES[family]
    rng = np.random.default_rng(seed)
    means = np.asarray(p["means"])
    sds = np.asarray(p["sds"])
    accepted = []
    have = 0
    while have < n:
        m = max(2 * (n - have), 64)
        comp = rng.choice(len(means), size=m, p=p["weights"])
        pts = means[comp] + sds[comp, None] * rng.standard_normal((m, 2))
        np.clip(pts, 0.0, 1.0, out=pts)
        offset = pts[:, 1] - boundary_height(family, pts[:, 0])
        pts = pts[np.abs(offset) >= p["gap"] / 2]
        accepted.append(pts)
        have += len(pts)
    X = np.concatenate(accepted)[:n]
    y = synthetic_label(family, X)
    ds = LabeledDataset(X, y, classes=(0, 1), name=family)
    require_two_classes(ds)
    return ds
