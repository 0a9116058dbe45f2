"""Estimate the r-separation of a labeled dataset.

Distances are L-infinity. ``d_min`` is the smallest distance between two
points with different labels and ``r_hat = d_min / 2``, so that differently
labeled points are at least ``2 * r_hat`` apart.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset, require_two_classes
from .errors import ArgumentError, LabelConflictError

BRUTE_FORCE_LIMIT = 20000
_BLOCK = 512


@dataclass(frozen=True)
class SeparationEstimate:
    d_min: float
    r_hat: float
    witness: tuple[tuple[float, ...], tuple[float, ...]]
    witness_labels: tuple[int, int]


@dataclass(frozen=True)
class CellSizeCheck:
    status: str  # "ok" or "too_large"
    max_epsilon: float
    reference: str

    @property
    def ok(self):
        return self.status == "ok"


def _best_pair(X, pairs):
    """Lexicographically smallest (p, q) with p <= q among candidate index pairs."""
    best = None
    for i, j in pairs:
        a, b = tuple(X[i]), tuple(X[j])
        key = (a, b) if a <= b else (b, a)
        if best is None or key < best[0]:
            best = (key, (i, j) if a <= b else (j, i))
    return best[1]


def _check_conflicts(ds):
    """Raise for the lexicographically smallest point carrying two labels."""
    uniq, inverse = np.unique(ds.X, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    lo = np.full(len(uniq), np.iinfo(np.int64).max)
    hi = np.full(len(uniq), np.iinfo(np.int64).min)
    np.minimum.at(lo, inverse, ds.y)
    np.maximum.at(hi, inverse, ds.y)
    bad = np.nonzero(lo != hi)[0]
    if len(bad):
        g = int(bad[0])  # np.unique sorts rows lexicographically
        raise LabelConflictError(uniq[g], sorted({int(v) for v in ds.y[inverse == g]}))


def _finish(ds, d_min, pairs):
    i, j = _best_pair(ds.X, pairs)
    return SeparationEstimate(
        d_min=float(d_min),
        r_hat=float(d_min) / 2.0,
        witness=(tuple(map(float, ds.X[i])), tuple(map(float, ds.X[j]))),
        witness_labels=(int(ds.y[i]), int(ds.y[j])),
    )


def min_cross_distance_bruteforce(ds: LabeledDataset) -> SeparationEstimate:
    """Full pairwise scan, blocked over rows."""
    require_two_classes(ds)
    _check_conflicts(ds)
    X, y = ds.X, ds.y
    best = np.inf
    pairs = []
    for start in range(0, ds.n, _BLOCK):
        rows = slice(start, min(start + _BLOCK, ds.n))
        D = np.abs(X[rows, None, :] - X[None, :, :]).max(axis=2)
        D[y[rows, None] == y[None, :]] = np.inf
        m = D.min()
        if m > best:
            continue
        if m < best:
            best, pairs = m, []
        ii, jj = np.nonzero(D == m)
        pairs.extend((start + i, j) for i, j in zip(ii, jj) if start + i < j)
    return _finish(ds, best, sorted(set(pairs)))


def _upper_bound(X, y, seed=0, probes=256):
    """Smallest cross-label distance seen from a random sample of points.

    Callers have ruled out conflicting duplicates, so the bound is positive.
    """
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(X), size=min(probes, len(X)), replace=False)
    best, pair = np.inf, None
    for i in idx:
        other = np.nonzero(y != y[i])[0]
        dist = np.abs(X[other] - X[i]).max(axis=1)
        k = int(np.argmin(dist))
        if dist[k] < best:
            best, pair = float(dist[k]), (int(i), int(other[k]))
    return best, pair


def _bucket_scan(X, y, side):
    """Exact minimum among cross-label pairs at distance <= side.

    Points are hashed into boxes of the given side; any pair within ``side``
    falls in the same or an adjacent box.
    """
    # Inflated bucket side keeps pairs at exactly ``side`` in adjacent boxes
    # despite rounding in the division.
    keys = np.floor(X / (side * (1 + 1e-9))).astype(np.int64)
    buckets = defaultdict(list)
    for i, key in enumerate(map(tuple, keys)):
        buckets[key].append(i)
    buckets = {k: np.asarray(v) for k, v in buckets.items()}
    d = X.shape[1]
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=d) if o >= (0,) * d]
    best = side
    pairs = []
    for key, members in buckets.items():
        for off in offsets:
            nb = buckets.get(tuple(k + o for k, o in zip(key, off)))
            if nb is None:
                continue
            D = np.abs(X[members, None, :] - X[None, nb, :]).max(axis=2)
            D[y[members, None] == y[None, nb]] = np.inf
            if off == (0,) * d:
                D[np.tril_indices(len(members), 0, len(nb))] = np.inf
            m = D.min()
            if m > best:
                continue
            if m < best:
                best, pairs = m, []
            ii, jj = np.nonzero(D == m)
            pairs.extend(tuple(sorted((int(members[a]), int(nb[b])))) for a, b in zip(ii, jj))
    return best, pairs


def min_cross_distance_bucketed(ds: LabeledDataset, seed=0) -> SeparationEstimate:
    """Grid-bucketed exact search.

    Start from an upper bound found by probing a few points, bucket with that
    side, and whenever the best distance shrinks below half the bucket side,
    re-bucket at the smaller side and rescan.
    """
    require_two_classes(ds)
    _check_conflicts(ds)
    X, y = ds.X, ds.y
    side, _ = _upper_bound(X, y, seed)
    while True:
        best, pairs = _bucket_scan(X, y, side)
        if best >= side / 2:
            break
        side = best
    return _finish(ds, best, sorted(set(pairs)))


def estimate_r(ds: LabeledDataset, method="auto") -> SeparationEstimate:
    if method == "auto":
        method = "brute" if ds.n <= BRUTE_FORCE_LIMIT else "bucketed"
    if method == "brute":
        return min_cross_distance_bruteforce(ds)
    if method == "bucketed":
        return min_cross_distance_bucketed(ds)
    raise ArgumentError(f"unknown method {method!r}")


def validate_cell_size(est: SeparationEstimate, epsilon: float, against="r_hat") -> CellSizeCheck:
    """``ok`` iff ``epsilon`` is strictly below the reference radius."""
    if not epsilon > 0:
        raise ArgumentError(f"epsilon must be > 0, got {epsilon}")
    if against == "r_hat":
        limit = est.r_hat
    elif against == "d_min":
        limit = est.d_min
    else:
        raise ArgumentError(f"against must be 'r_hat' or 'd_min', got {against!r}")
    return CellSizeCheck("ok" if epsilon < limit else "too_large", limit, against)


def auto_epsilon(est: SeparationEstimate, against="r_hat") -> float:
    """Largest ``1/k`` strictly below the reference radius."""
    limit = est.r_hat if against == "r_hat" else est.d_min
    k = int(np.floor(1.0 / limit)) + 1
    while 1.0 / k >= limit:
        k += 1
    return 1.0 / k
