"""Operational profile: Gaussian KDE with bootstrap variance, pooled per cell.

The density at ``x`` is the sample mean of per-point kernel terms

    W_j(x) = h^-d * prod_k phi((x_k - X_jk) / h)

and its variance is the sample variance of ``B`` bootstrap KDEs, each fitted
on a resample (with replacement) of the training coordinates. A resample is
stored as its multiplicity vector, so a bootstrap KDE is a weighted mean of
the same kernel terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ArgumentError, DegenerateDensityError
from .partition import CellIndex, GridPartition

BANDWIDTH_GRID = np.logspace(-2, 0, 20)
DEFAULT_REPLICAS = 100
MAX_ENUMERATED_DIMENSION = 3
_CHUNK = 4096


@dataclass(frozen=True)
class CellOpEstimate:
    mean: float
    variance: float
    density_at_center: float


def _phi(u):
    return np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)


def cv_log_likelihood(coords, h_values, folds=5, seed=0) -> np.ndarray:
    """Total held-out log-density for each bandwidth under k-fold CV."""
    X = np.asarray(coords, dtype=np.float64)
    n, d = X.shape
    assign = np.random.default_rng(seed).permutation(n) % folds
    h_values = np.asarray(h_values, dtype=np.float64)
    total = np.zeros(len(h_values))
    for f in range(folds):
        train, held = X[assign != f], X[assign == f]
        if len(train) == 0 or len(held) == 0:
            continue
        for start in range(0, len(held), _CHUNK):
            V = held[start:start + _CHUNK]
            sq = ((V[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
            for i, h in enumerate(h_values):
                logk = logsumexp(-0.5 * sq / (h * h), axis=1)
                total[i] += float(np.sum(logk - math.log(len(train)) - d * math.log(h * math.sqrt(2 * math.pi))))
    return total


def select_bandwidth(coords, seed=0, folds=5, grid=BANDWIDTH_GRID) -> float:
    """Grid-search the bandwidth maximizing cross-validated log-likelihood."""
    X = np.asarray(coords, dtype=np.float64)
    if np.all(np.ptp(X, axis=0) == 0):
        raise DegenerateDensityError("all coordinates identical; bandwidth selection is degenerate")
    scores = cv_log_likelihood(X, grid, folds=folds, seed=seed)
    return float(grid[int(np.argmax(scores))])


class OpModel:
    """Fitted KDE plus bootstrap replicas.

    Instances are treated as immutable; the per-center and per-grid caches
    are filled idempotently, so concurrent queries see the same values.
    """

    def __init__(self, coords, h, resamples):
        X = np.array(coords, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if not h > 0:
            raise ArgumentError(f"bandwidth must be > 0, got {h}")
        resamples = np.asarray(resamples, dtype=np.int64)
        if resamples.ndim != 2 or resamples.shape[0] < 2:
            raise ArgumentError("need at least 2 bootstrap resamples")
        X.flags.writeable = False
        self.X = X
        self.h = float(h)
        self.resamples = resamples
        n = X.shape[0]
        counts = np.zeros((resamples.shape[0], n))
        for b, idx in enumerate(resamples):
            counts[b] = np.bincount(idx, minlength=n)
        counts.flags.writeable = False
        self.counts = counts
        self._center_cache: dict[tuple, CellOpEstimate] = {}
        self._grid_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dimension(self):
        return self.X.shape[1]

    @property
    def replicas(self):
        return self.counts.shape[0]

    # -- pointwise queries -------------------------------------------------

    def kernel_terms(self, Q) -> np.ndarray:
        """``W_j(q)`` for every query row and training point, shape ``(m, n)``."""
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[1] != self.dimension:
            raise ArgumentError(f"query dimension {Q.shape[1]} != {self.dimension}")
        K = np.ones((Q.shape[0], self.n))
        for k in range(self.dimension):
            K *= _phi((Q[:, k, None] - self.X[None, :, k]) / self.h) / self.h
        return K

    def density(self, x):
        """KDE value at a point (float) or at each row of an array."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim <= 1:
            return float(self.kernel_terms(x.reshape(1, -1)).mean(axis=1)[0])
        return np.concatenate([self.kernel_terms(x[s:s + 512]).mean(axis=1)
                               for s in range(0, len(x), 512)])

    def replica_densities(self, x) -> np.ndarray:
        """Bootstrap KDE values; shape ``(B,)`` for a point or ``(m, B)``."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim <= 1
        Q = x.reshape(1, -1) if single else x
        out = np.concatenate([self.kernel_terms(Q[s:s + 512]) @ self.counts.T / self.n
                              for s in range(0, len(Q), 512)])
        return out[0] if single else out

    def density_variance(self, x):
        """Sample variance (``B - 1`` denominator) of the bootstrap KDEs."""
        reps = self.replica_densities(x)
        var = np.var(reps, axis=-1, ddof=1)
        return float(var) if np.ndim(var) == 0 else var

    def analytic_variance(self, x) -> float:
        """Asymptotic ``f(x) * R(K) / (n h^d)`` with ``R(K) = (2 sqrt(pi))^-d``.

        Diagnostic only; the bootstrap variance is the one used downstream.
        """
        d = self.dimension
        roughness = (1.0 / (2.0 * math.sqrt(math.pi))) ** d
        return self.density(x) * roughness / (self.n * self.h ** d)

    # -- grid evaluation -----------------------------------------------------

    def _axis_factors(self, p: GridPartition):
        c = p.axis_centers()
        return [_phi((c[:, None] - self.X[None, :, k]) / self.h) / self.h for k in range(p.dimension)]

    @staticmethod
    def _contract(factors, w):
        if len(factors) == 1:
            return factors[0] @ w
        if len(factors) == 2:
            return (factors[0] * w) @ factors[1].T
        F0, F1, F2 = factors
        return np.stack([(F1 * (F0[i] * w)) @ F2.T for i in range(F0.shape[0])])

    def grid(self, p: GridPartition):
        """Density and bootstrap variance at every cell center.

        Uses separability of the product kernel; only for ``d <= 3``.
        Returns two arrays of shape ``p.shape``.
        """
        key = (p.dimension, p.cell_side)
        cached = self._grid_cache.get(key)
        if cached is not None:
            return cached
        if p.dimension != self.dimension:
            raise ArgumentError(f"partition dimension {p.dimension} != {self.dimension}")
        if p.dimension > MAX_ENUMERATED_DIMENSION:
            raise ArgumentError(f"grid evaluation supports d <= {MAX_ENUMERATED_DIMENSION}")
        factors = self._axis_factors(p)
        mean = self._contract(factors, np.ones(self.n)) / self.n
        # Welford over replicas keeps memory at two grids regardless of B.
        run_mean = np.zeros(p.shape)
        m2 = np.zeros(p.shape)
        for b in range(self.replicas):
            rep = self._contract(factors, self.counts[b]) / self.n
            delta = rep - run_mean
            run_mean += delta / (b + 1)
            m2 += delta * (rep - run_mean)
        var = np.maximum(m2 / (self.replicas - 1), 0.0)
        mean.flags.writeable = False
        var.flags.writeable = False
        self._grid_cache.setdefault(key, (mean, var))
        return self._grid_cache[key]

    def center_estimate(self, p: GridPartition, c: CellIndex) -> tuple[float, float]:
        """Density mean and variance at the cell center (grid value if cached)."""
        cached = self._grid_cache.get((p.dimension, p.cell_side))
        if cached is not None:
            return float(cached[0][c]), float(cached[1][c])
        x = np.asarray(p.center_of(c))
        return self.density(x), self.density_variance(x)


def fit_kde(coords, h="auto", seed=0, B=DEFAULT_REPLICAS) -> OpModel:
    X = np.asarray(coords, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ArgumentError(f"KDE needs at least 2 points, got {X.shape[0]}")
    if B < 2:
        raise ArgumentError(f"need B >= 2 bootstrap replicas, got {B}")
    if h == "auto" or h is None:
        h = select_bandwidth(X, seed=seed)
    elif not float(h) > 0:
        raise ArgumentError(f"bandwidth must be > 0, got {h}")
    rng = np.random.default_rng([seed, 2])
    resamples = rng.integers(0, X.shape[0], size=(B, X.shape[0]))
    return OpModel(X, float(h), resamples)


def pooled_op(m: OpModel, p: GridPartition, c: CellIndex) -> CellOpEstimate:
    """Cell mass approximated by center density times cell volume."""
    c = tuple(int(v) for v in c)
    key = (p.dimension, p.cell_side, c)
    grid = m._grid_cache.get((p.dimension, p.cell_side))
    if grid is None and key in m._center_cache:
        return m._center_cache[key]
    dens, var = m.center_estimate(p, c)
    v = p.cell_volume
    est = CellOpEstimate(mean=dens * v, variance=v * v * var, density_at_center=dens)
    if grid is None:
        m._center_cache.setdefault(key, est)
    return est


@dataclass
class CellRanking:
    """Cells ordered by descending pooled OP, truncated to the requested mass."""

    cells: list = field(default_factory=list)
    total_mass: float = 0.0
    covered_mass: float = 0.0
    enumerated: int = 0
    exhaustive: bool = True

    def __iter__(self):
        return iter(self.cells)

    def __len__(self):
        return len(self.cells)

    def __getitem__(self, i):
        return self.cells[i]

    @property
    def remainder_mass(self) -> float:
        return max(self.total_mass - self.covered_mass, 0.0)


def candidate_cells(m: OpModel, p: GridPartition) -> list[CellIndex]:
    """Cells holding a training coordinate plus their axis neighbours."""
    occupied = {tuple(c) for c in p.cell_indices(m.X).tolist()}
    k = p.cells_per_axis
    found = set(occupied)
    for c in occupied:
        for axis in range(p.dimension):
            for step in (-1, 1):
                v = c[axis] + step
                if 0 <= v < k:
                    found.add(c[:axis] + (v,) + c[axis + 1:])
    return sorted(found)


def rank_cells_by_op(m: OpModel, p: GridPartition, threshold=0.99, max_cells=None,
                     max_enumerated=10_000_000) -> CellRanking:
    """Shortest prefix of cells (by descending pooled OP) reaching
    ``threshold`` of the enumerated mass, capped at ``max_cells``.

    For ``d <= 3`` (and a grid within ``max_enumerated`` cells) every cell is
    enumerated. Otherwise only :func:`candidate_cells` are considered.
    Ties are broken by lexicographic cell index.
    """
    if not 0 < threshold <= 1:
        raise ArgumentError(f"threshold must be in (0, 1], got {threshold}")
    v = p.cell_volume
    exhaustive = p.dimension <= MAX_ENUMERATED_DIMENSION and p.cell_count <= max_enumerated
    if exhaustive:
        dens, var = m.grid(p)
        flat_d, flat_v = dens.reshape(-1), var.reshape(-1)
        index_of = lambda f: tuple(int(i) for i in np.unravel_index(f, p.shape))
    else:
        cands = candidate_cells(m, p)
        centers = np.array([p.center_of(c) for c in cands])
        flat_d = m.density(centers)
        flat_v = m.density_variance(centers)
        index_of = lambda f: cands[f]
    means = flat_d * v
    order = np.argsort(-means, kind="stable")
    csum = np.cumsum(means[order])
    total = float(csum[-1]) if len(csum) else 0.0
    cut = int(np.searchsorted(csum, threshold * total, side="left")) + 1
    cut = min(cut, len(order))
    if max_cells is not None:
        cut = min(cut, int(max_cells))
    cells = []
    for f in order[:cut]:
        c = index_of(int(f))
        est = CellOpEstimate(mean=float(means[f]), variance=float(v * v * flat_v[f]),
                             density_at_center=float(flat_d[f]))
        if not exhaustive:
            m._center_cache.setdefault((p.dimension, p.cell_side, c), est)
        cells.append((c, est))
    covered = float(csum[cut - 1]) if cut else 0.0
    return CellRanking(cells, total, covered, len(means), exhaustive)
