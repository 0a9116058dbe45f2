import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from cellram.errors import ArgumentError, DegenerateDensityError
from cellram.opmodel import (
    BANDWIDTH_GRID,
    OpModel,
    fit_kde,
    pooled_op,
    rank_cells_by_op,
)
from cellram.partition import GridPartition


def single_point(x, h):
    x = np.atleast_2d(x)
    return OpModel(x, h, np.zeros((2, 1), dtype=int))


def contained_sample(n, seed, d=2, sd=0.1):
    rng = np.random.default_rng(seed)
    return np.clip(rng.normal(0.5, sd, size=(n, d)), 0, 1)


def test_zero_offset_density():
    m = single_point([0.3, 0.6], 0.2)
    assert m.density([0.3, 0.6]) == pytest.approx(1 / (2 * math.pi * 0.04), rel=1e-9)
    assert m.density([0.3, 0.6]) == pytest.approx(3.97887, abs=1e-5)


def test_single_point_bootstrap_variance_is_zero():
    m = single_point([0.3, 0.6], 0.2)
    assert m.density_variance([0.1, 0.1]) == 0.0


def test_pooled_op_example():
    p = GridPartition(2, 0.004)
    m = single_point(p.center_of((0, 0)), 0.2)
    est = pooled_op(m, p, (0, 0))
    assert est.density_at_center == pytest.approx(3.97887, abs=1e-5)
    assert est.mean == pytest.approx(6.366e-5, rel=1e-4)
    assert est.variance == 0.0


def test_zero_density_cell():
    p = GridPartition(1, 0.25)
    m = single_point([0.0], 1e-3)
    est = pooled_op(m, p, (3,))
    assert est.mean == 0.0 and est.variance == 0.0


def test_far_query_vanishes():
    m = fit_kde(contained_sample(50, 0), h=0.1, seed=0, B=10)
    assert m.density([1e3, 1e3]) == 0.0


def test_symmetric_pair():
    m = OpModel([[0.25], [0.75]], 0.125, np.zeros((2, 2), dtype=int))
    terms = m.kernel_terms([[0.5]])[0]
    assert terms[0] == terms[1]
    assert m.density([0.5]) == pytest.approx(norm.pdf(2.0) / 0.125, rel=1e-12)


def test_density_is_mean_of_kernel_terms():
    X = contained_sample(200, 1, d=3)
    h = 0.07
    m = fit_kde(X, h=h, seed=0, B=5)
    q = np.array([0.45, 0.52, 0.61])
    W = np.prod(norm.pdf((q - X) / h), axis=1) / h**3
    assert m.density(q) == pytest.approx(W.mean(), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((80, 2))
    Q = rng.random((10, 2))
    a = fit_kde(X, h=0.1, B=2).density(Q)
    b = fit_kde(X[rng.permutation(80)], h=0.1, B=2).density(Q)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_bootstrap_determinism():
    X = contained_sample(300, 2)
    Q = np.random.default_rng(0).random((20, 2))
    a = fit_kde(X, h=0.05, seed=9, B=30).density_variance(Q)
    b = fit_kde(X, h=0.05, seed=9, B=30).density_variance(Q)
    assert np.array_equal(a, b)
    assert np.all(a >= 0)


def test_bootstrap_variance_definition():
    X = contained_sample(100, 3)
    m = fit_kde(X, h=0.08, seed=1, B=12)
    q = np.array([0.5, 0.4])
    reps = []
    for idx in m.resamples:
        reps.append(np.mean(np.prod(norm.pdf((q - X[idx]) / 0.08), axis=1)) / 0.08**2)
    reps = np.array(reps)
    expected = np.sum((reps - reps.mean()) ** 2) / (len(reps) - 1)
    assert m.density_variance(q) == pytest.approx(expected, rel=1e-9)


def test_grid_matches_pointwise_queries():
    X = contained_sample(150, 4)
    m = fit_kde(X, h=0.06, seed=0, B=20)
    p = GridPartition(2, 0.05)
    dens, var = m.grid(p)
    centers = np.array([p.center_of(c) for c in np.ndindex(*p.shape)])
    assert np.allclose(dens.reshape(-1), m.density(centers), rtol=1e-10, atol=1e-300)
    assert np.allclose(var.reshape(-1), m.density_variance(centers), rtol=1e-7, atol=1e-18)


def test_grid_matches_pointwise_queries_3d():
    X = contained_sample(60, 5, d=3)
    m = fit_kde(X, h=0.1, seed=0, B=5)
    p = GridPartition(3, 0.25)
    dens, _ = m.grid(p)
    centers = np.array([p.center_of(c) for c in np.ndindex(*p.shape)])
    assert np.allclose(dens.reshape(-1), m.density(centers), rtol=1e-10)


def test_riemann_mass_on_fine_grid():
    m = fit_kde(contained_sample(2000, 6), h="auto", seed=0, B=10)
    p = GridPartition(2, 0.004)
    dens, _ = m.grid(p)
    assert 0.95 <= dens.sum() * p.cell_volume <= 1.01


def test_pooled_mean_linear_in_volume():
    m = fit_kde(contained_sample(100, 7), h=0.1, B=4)
    for k in (4, 8, 16):
        p = GridPartition(2, 1 / k)
        c = (k // 2, k // 2)
        est = pooled_op(m, p, c)
        assert est.mean == pytest.approx(m.density(p.center_of(c)) * p.cell_volume, rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_auto_bandwidth_interior(seed):
    coords = np.clip(np.random.default_rng(seed).normal(0.5, 0.1, 1000), 0, 1)
    h = fit_kde(coords, seed=seed, B=2).h
    assert BANDWIDTH_GRID[0] < h < BANDWIDTH_GRID[-1]


def test_fit_preconditions():
    with pytest.raises(ArgumentError):
        fit_kde([[0.5, 0.5]])
    with pytest.raises(ArgumentError):
        fit_kde([[0.1], [0.2]], h=0.0)
    with pytest.raises(ArgumentError):
        fit_kde([[0.1], [0.2]], h=0.1, B=1)
    with pytest.raises(DegenerateDensityError):
        fit_kde([[0.4, 0.4]] * 10)


def test_bootstrap_calibration_1d():
    h, n = 0.05, 500
    draw = lambda s: np.clip(np.random.default_rng(s).normal(0.5, 0.1, n), 0, 1)
    boot = fit_kde(draw(0), h=h, seed=0, B=100).density_variance([0.5])
    spread = np.var([fit_kde(draw(s), h=h, B=2).density([0.5]) for s in range(1, 201)], ddof=1)
    assert 0.5 <= boot / spread <= 2.0


def test_analytic_variance_same_order_as_bootstrap():
    m = fit_kde(np.clip(np.random.default_rng(1).normal(0.5, 0.1, 2000), 0, 1), h=0.02, seed=0, B=100)
    ratio = m.density_variance([0.5]) / m.analytic_variance([0.5])
    assert 0.5 <= ratio <= 2.0


# -- ranking -----------------------------------------------------------------

def test_rank_ties_break_lexicographically():
    p = GridPartition(1, 0.25)
    ranking = rank_cells_by_op(single_point([0.5], 0.3), p, threshold=1.0)
    assert [c for c, _ in ranking] == [(1,), (2,), (0,), (3,)]


def test_rank_threshold_one_keeps_all_cells():
    m = fit_kde(np.random.default_rng(0).random((400, 2)), h=0.5, B=3)
    p = GridPartition(2, 0.1)
    ranking = rank_cells_by_op(m, p, threshold=1.0)
    assert len(ranking) == 100 and ranking.exhaustive
    means = [e.mean for _, e in ranking]
    assert means == sorted(means, reverse=True)


def test_rank_concentrated_density():
    p = GridPartition(2, 0.25)
    ranking = rank_cells_by_op(single_point([0.6, 0.1], 0.01), p, threshold=0.5)
    assert [c for c, _ in ranking] == [(2, 0)]


@pytest.mark.parametrize("seed", range(100))
def test_rank_prefix_property(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((int(rng.integers(5, 60)), 2)) * rng.uniform(0.2, 1.0)
    m = fit_kde(X, h=float(rng.uniform(0.02, 0.3)), B=2)
    p = GridPartition(2, 1 / int(rng.integers(3, 30)))
    thr = float(rng.uniform(0.1, 1.0))
    ranking = rank_cells_by_op(m, p, threshold=thr)
    csum = np.cumsum([e.mean for _, e in ranking])
    assert csum[-1] >= thr * ranking.total_mass
    if len(csum) > 1:
        assert csum[-2] < thr * ranking.total_mass


def test_rank_max_cells_and_remainder():
    m = fit_kde(contained_sample(200, 3), h=0.1, B=2)
    p = GridPartition(2, 0.05)
    ranking = rank_cells_by_op(m, p, threshold=0.99, max_cells=7)
    assert len(ranking) == 7
    assert ranking.remainder_mass == pytest.approx(ranking.total_mass - ranking.covered_mass)


def test_rank_candidate_fallback_in_high_dimension():
    X = contained_sample(30, 8, d=4, sd=0.05)
    m = fit_kde(X, h=0.05, B=3)
    p = GridPartition(4, 0.1)
    ranking = rank_cells_by_op(m, p, threshold=1.0)
    assert not ranking.exhaustive
    occupied = {tuple(c) for c in p.cell_indices(X).tolist()}
    assert occupied <= {c for c, _ in ranking}
    for c, est in ranking:
        assert est.mean == pytest.approx(pooled_op(m, p, c).mean, rel=1e-12)


def test_rank_rejects_bad_threshold():
    with pytest.raises(ArgumentError):
        rank_cells_by_op(single_point([0.5], 0.1), GridPartition(1, 0.5), threshold=0.0)
