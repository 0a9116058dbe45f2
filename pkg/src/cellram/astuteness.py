"""Per-cell ground truth and unastuteness.

A cell is *normal* when its observed points share one label, *cross-boundary*
when they disagree, and *empty* when it holds none. Empty cells take the
majority label of the model's own predictions on uniform samples.
Unastuteness is estimated by simple Monte Carlo under a uniform conditional
distribution over the cell box. Cross-boundary cells are assigned the worst
value 1.

Randomness is drawn from a stream keyed by ``(seed, purpose, cell index)``,
so results do not depend on the order or threading of cell assessments.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .opmodel import CellOpEstimate, OpModel, pooled_op
from .partition import CellIndex, GridPartition

NORMAL = "normal"
EMPTY = "empty"
CROSS_BOUNDARY = "cross_boundary"

MIN_SAMPLES = 30
DEFAULT_VOTE_N = 101

_VOTE_STREAM = 0
_SAMPLE_STREAM = 1


@dataclass(frozen=True)
class CellType:
    kind: str
    label: int | None = None
    vote_margin: float | None = None

    @classmethod
    def normal(cls, label):
        return cls(NORMAL, int(label))

    @classmethod
    def empty(cls, label, margin):
        return cls(EMPTY, int(label), float(margin))

    @classmethod
    def cross_boundary(cls):
        return cls(CROSS_BOUNDARY)


@dataclass(frozen=True)
class CellAstutenessEstimate:
    mean: float
    variance: float
    samples_used: int
    cell_type: CellType


@dataclass(frozen=True)
class CellAssessment:
    index: CellIndex
    cell_type: CellType
    truth: int | None
    unastuteness: CellAstutenessEstimate
    op: CellOpEstimate
    seconds: float = 0.0


def cell_rng(seed: int, cell: CellIndex, stream: int) -> np.random.Generator:
    """Generator for one cell and purpose; SeedSequence hashes the key."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), *map(int, cell)]))


def sample_cell(p: GridPartition, c: CellIndex, n: int, rng) -> np.ndarray:
    lower, upper = p.bounds_of(c)
    return rng.uniform(lower, upper, size=(n, p.dimension))


def type_cell(labels_in_cell, model, p: GridPartition, c: CellIndex,
              vote_n: int = DEFAULT_VOTE_N, seed: int = 0) -> CellType:
    """Classify a cell from the labels of the points observed in it.

    ``labels_in_cell`` may be labels or labeled points. For empty cells the
    vote margin is the majority fraction; a tie for the top count is
    resolved towards the lowest class index and reported with margin 0.5.
    """
    if vote_n < 1 or vote_n % 2 == 0:
        raise ArgumentError(f"vote_n must be a positive odd count, got {vote_n}")
    labels = {int(getattr(item, "label", item)) for item in labels_in_cell}
    if len(labels) == 1:
        return CellType.normal(labels.pop())
    if len(labels) > 1:
        return CellType.cross_boundary()
    votes = model.predict(sample_cell(p, c, vote_n, cell_rng(seed, c, _VOTE_STREAM)))
    return _tally(votes, model.classes)


def _tally(votes, classes) -> CellType:
    counts = np.array([np.count_nonzero(votes == k) for k in classes])
    winner = int(np.argmax(counts))
    if np.count_nonzero(counts == counts[winner]) > 1:
        margin = 0.5
    else:
        margin = max(counts[winner] / len(votes), 0.5)
    return CellType.empty(classes[winner], margin)


def unastuteness_from_indicators(miss, cell_type=None) -> CellAstutenessEstimate:
    """Sample mean of the miss indicators and its variance
    ``sum((I - mean)^2) / ((n - 1) n)``."""
    miss = np.asarray(miss, dtype=np.float64)
    n = miss.size
    mean = float(miss.mean())
    var = float(np.sum((miss - mean) ** 2) / ((n - 1) * n))
    return CellAstutenessEstimate(mean, var, n, cell_type)


def estimate_unastuteness(model, p: GridPartition, c: CellIndex, truth: int,
                          n: int = 10_000, seed: int = 0, cell_type=None) -> CellAstutenessEstimate:
    if n < MIN_SAMPLES:
        raise ArgumentError(f"need at least {MIN_SAMPLES} samples per cell, got {n}")
    if int(truth) not in model.classes:
        raise ArgumentError(f"truth {truth} not among classes {model.classes}")
    X = sample_cell(p, c, n, cell_rng(seed, c, _SAMPLE_STREAM))
    return unastuteness_from_indicators(model.predict(X) != int(truth), cell_type)


def cross_boundary_estimate(cell_type=None, n=0) -> CellAstutenessEstimate:
    return CellAstutenessEstimate(1.0, 0.0, n, cell_type or CellType.cross_boundary())


def assess_cell(model, labels_in_cell, p: GridPartition, c: CellIndex, opmodel: OpModel,
                n: int = 10_000, vote_n: int = DEFAULT_VOTE_N, seed: int = 0,
                op: CellOpEstimate | None = None) -> CellAssessment:
    start = time.perf_counter()
    ctype = type_cell(labels_in_cell, model, p, c, vote_n, seed)
    if ctype.kind == CROSS_BOUNDARY:
        lam = cross_boundary_estimate(ctype)
    else:
        lam = estimate_unastuteness(model, p, c, ctype.label, n, seed, ctype)
    if op is None:
        op = pooled_op(opmodel, p, c)
    return CellAssessment(tuple(c), ctype, ctype.label, lam, op, time.perf_counter() - start)


def assess_cells(model, cells, labels_by_cell, p: GridPartition, n: int = 10_000,
                 vote_n: int = DEFAULT_VOTE_N, seed: int = 0, batch: int = 64) -> list[CellAssessment]:
    """Assess ``(index, CellOpEstimate)`` pairs in order.

    Cells are processed ``batch`` at a time; within a batch the samples of
    all non-cross-boundary cells are classified in one ``predict`` call per
    phase. Every cell draws from its own streams, so the numbers equal those
    of :func:`assess_cell` on each cell whatever the batching.
    """
    if n < MIN_SAMPLES:
        raise ArgumentError(f"need at least {MIN_SAMPLES} samples per cell, got {n}")
    if vote_n < 1 or vote_n % 2 == 0:
        raise ArgumentError(f"vote_n must be a positive odd count, got {vote_n}")
    if batch < 1:
        raise ArgumentError(f"batch must be >= 1, got {batch}")
    cells = list(cells)
    out = []
    for i in range(0, len(cells), batch):
        out.extend(_assess_batch(model, cells[i:i + batch], labels_by_cell, p, n, vote_n, seed))
    return out


def _assess_batch(model, cells, labels_by_cell, p, n, vote_n, seed):
    start = time.perf_counter()
    types: list[CellType | None] = []
    empty = []
    for c, _ in cells:
        labels = set(labels_by_cell.get(c, ()))
        if len(labels) == 1:
            types.append(CellType.normal(labels.pop()))
        elif len(labels) > 1:
            types.append(CellType.cross_boundary())
        else:
            types.append(None)
            empty.append(len(types) - 1)
    if empty:
        X = np.concatenate([sample_cell(p, cells[i][0], vote_n, cell_rng(seed, cells[i][0], _VOTE_STREAM))
                            for i in empty])
        votes = model.predict(X).reshape(len(empty), vote_n)
        for row, i in zip(votes, empty):
            types[i] = _tally(row, model.classes)

    sampled = [i for i, t in enumerate(types) if t.kind != CROSS_BOUNDARY]
    results: list[CellAstutenessEstimate | None] = [None] * len(cells)
    if sampled:
        X = np.concatenate([sample_cell(p, cells[i][0], n, cell_rng(seed, cells[i][0], _SAMPLE_STREAM))
                            for i in sampled])
        pred = model.predict(X).reshape(len(sampled), n)
        for row, i in zip(pred, sampled):
            results[i] = unastuteness_from_indicators(row != types[i].label, types[i])
    per_cell = (time.perf_counter() - start) / max(len(cells), 1)
    out = []
    for (c, op), t, lam in zip(cells, types, results):
        if lam is None:
            lam = cross_boundary_estimate(t)
        out.append(CellAssessment(tuple(c), t, t.label, lam, op, per_cell))
    return out
