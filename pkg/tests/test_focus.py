import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset, toy_dataset
from focusedmr import simlab
from focusedmr.exceptions import EstimationError
from focusedmr.focus import (
    ALL_UNIONS,
    SINGLE_FULL,
    BiasEstimate,
    estimate_bias,
    focused_estimate,
    kmeans_candidates,
    w_statistic,
)
from focusedmr.kmeans import KMeans1D, kmeans_1d
from focusedmr.liml import components, minimize, variance_of_fit
from focusedmr.summary_data import Dataset

# Exact rational values for the toy with core {0, 1}, additional {2}, theta_C = 0.2.
BIAS_TOY = dict(
    eta_c=17.307692307692307, eta_s=33.65384615384615,
    sig_c=1.849112426035503, sig_s=0.9245562130177515, xi_s=0.07396449704142012,
    b_s=3.6538461538461537, b_hat=0.07169811320754717, var_b=0.04123157927121378,
    delta_c=0.06395061728395061, delta_f=0.02069063723745105, w=-0.043259980046499565,
)


@pytest.fixture
def bias_toy():
    ds = toy_dataset(core=(True, True, False))
    comp_c = components(ds, (0, 1), 0.2)
    comp_s = components(ds, (2,), 0.2)
    return ds, comp_c, comp_s


def test_toy_components(bias_toy):
    _, comp_c, comp_s = bias_toy
    for got, key in ((comp_c.eta, "eta_c"), (comp_s.eta, "eta_s"), (comp_c.sigma_term, "sig_c"),
                     (comp_s.sigma_term, "sig_s"), (comp_s.xi, "xi_s")):
        assert got == pytest.approx(BIAS_TOY[key], rel=1e-13)


def test_toy_bias_and_w(bias_toy):
    ds, comp_c, comp_s = bias_toy
    bias = estimate_bias(ds, (2,), 0.2, comp_c, comp_s)
    assert bias.b_s_hat == pytest.approx(BIAS_TOY["b_s"], rel=1e-13)
    assert bias.b_hat == pytest.approx(BIAS_TOY["b_hat"], rel=1e-13)
    assert bias.var_b == pytest.approx(BIAS_TOY["var_b"], rel=1e-13)
    d_c = variance_of_fit(comp_c)
    d_f = variance_of_fit(comp_c, comp_s)
    assert d_c == pytest.approx(BIAS_TOY["delta_c"], rel=1e-13)
    assert d_f == pytest.approx(BIAS_TOY["delta_f"], rel=1e-13)
    assert w_statistic(bias, d_f, d_c) == pytest.approx(BIAS_TOY["w"], rel=1e-12)


def test_toy_selection_picks_full():
    ds = toy_dataset(core=(True, True, False))
    sel = focused_estimate(ds)
    assert sel.core_fit.theta_hat == pytest.approx(0.2, abs=1e-12)
    assert sel.w_stats[1] == pytest.approx(BIAS_TOY["w"], rel=1e-9)
    assert sel.chosen.k == 1


def test_w_arithmetic():
    b = BiasEstimate(0.5, 0.0, 0.05, None)
    assert w_statistic(b, 0.2, 0.3) == pytest.approx(0.10, abs=1e-15)
    assert w_statistic((0.1, 0.05), 0.3, 0.3) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1))
def test_w_monotone_in_bias(b1, b2, var_b, d_f, d_c):
    lo, hi = sorted((b1, b2))
    assert w_statistic((lo, var_b), d_f, d_c) <= w_statistic((hi, var_b), d_f, d_c)


def test_noise_free_valid_data_has_no_bias():
    rng = np.random.default_rng(3)
    bx = rng.uniform(0.5, 1.0, 12)
    se = np.full(12, 1e-4)
    ds = Dataset.from_arrays(bx, se, 0.2 * bx, se, np.arange(12) < 4)
    sel = focused_estimate(ds)
    assert abs(sel.b_hat[0]) < 1e-8


def test_weak_candidate_excluded_and_degraded():
    # A noisy additional variant with beta_x = 0 drives eta_C + eta_S below zero.
    ds = Dataset.from_arrays([0.2, 0.0], [0.1, 1.0], [0.04, 0.1], [0.1, 0.01], [True, False])
    with pytest.warns(UserWarning, match="excluded"):
        sel = focused_estimate(ds)
    assert sel.degraded and sel.chosen.is_core and sel.candidates == ()
    assert sel.theta_hat == sel.core_fit.theta_hat


def test_w_positive_returns_core_exactly():
    ds = Dataset.from_arrays([0.1, 0.2, 0.3], [0.05] * 3, [0.02, 0.04, 0.5], [0.05] * 3,
                             [True, True, False])
    sel = focused_estimate(ds)
    assert sel.w_stats[1] > 0
    assert sel.theta_hat == sel.core_fit.theta_hat
    assert sel.chosen.is_core


def test_full_selection_matches_minimize(rng):
    for _ in range(20):
        ds = random_dataset(rng)
        sel = focused_estimate(ds)
        if sel.w_stats[1] <= 0:
            assert sel.theta_hat == minimize(ds, ds.full_set()).theta_hat
            break
    else:
        pytest.fail("no replicate selected the full set")


def test_selection_invariant_recomputed(rng):
    for _ in range(10):
        ds = random_dataset(rng, p=40, n_core=6)
        cands = kmeans_candidates(ds, 3)
        sel = focused_estimate(ds, cands)
        theta_c = sel.core_fit.theta_hat
        comp_c = components(ds, ds.core_indices, theta_c)
        d_c = variance_of_fit(comp_c)
        w = {}
        for c in cands:
            add = sorted(set(c.indices) - set(ds.core_indices))
            comp_s = components(ds, add, theta_c)
            w[c.k] = w_statistic(estimate_bias(ds, add, theta_c, comp_c, comp_s),
                                 variance_of_fit(comp_c, comp_s), d_c)
        best = min(w, key=lambda k: (w[k], k))
        expected = best if w[best] <= 0 else 0
        assert (0 if sel.chosen.is_core else sel.chosen.k) == expected
        for k, v in w.items():
            assert sel.w_stats[k] == pytest.approx(v, rel=1e-12, abs=1e-15)


def test_candidates_must_be_strict_supersets(toy):
    ds = toy_dataset(core=(True, True, False))
    with pytest.raises(ValueError):
        focused_estimate(ds, [ds.core_set()])
    with pytest.raises(ValueError):
        focused_estimate(ds, [])
    with pytest.raises(Exception):
        focused_estimate(toy)


def test_core_too_weak_raises():
    ds = Dataset.from_arrays([0.01, 0.5], [0.1, 0.1], [0.0, 0.1], [0.1, 0.1], [True, False])
    with pytest.raises(EstimationError):
        focused_estimate(ds)


def test_selection_probability_above_half_at_zero_tau():
    cfg = simlab.SimConfig(tau_bar=0.0, reps=1000, intervals=False)
    picks = [not focused_estimate(simlab.generate(cfg, r)).selected_core for r in range(cfg.reps)]
    assert np.mean(picks) > 0.5


# k-means candidates

def test_kmeans_separated_clusters():
    labels, centers, _ = kmeans_1d([1, 1, 1, 5, 5, 5], 2)
    assert labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert centers.tolist() == [1.0, 5.0]


def test_kmeans_candidates_two_clusters():
    bx = np.ones(8)
    by = np.array([0.2, 0.2, 1, 1, 1, 5, 5, 5])
    ds = Dataset.from_arrays(bx, [0.1] * 8, by, [0.1] * 8, [1, 1, 0, 0, 0, 0, 0, 0])
    cands = kmeans_candidates(ds, 2)
    assert [c.indices for c in cands] == [(0, 1, 2, 3, 4), (0, 1, 5, 6, 7), tuple(range(8))]
    assert [c.k for c in cands] == [1, 2, 3]


def test_kmeans_seven_sets():
    rng = np.random.default_rng(0)
    p = 94
    bx = rng.uniform(0.05, 0.2, p)
    by = bx * rng.normal(0.2, 0.5, p)
    ds = Dataset.from_arrays(bx, [0.01] * p, by, [0.01] * p, np.arange(p) < 3)
    cands = kmeans_candidates(ds, 3)
    assert len(cands) == 7
    assert len({c.indices for c in cands}) == 7
    assert cands[-1].indices == tuple(range(p))


def test_kmeans_one_cluster_is_full():
    ds = random_dataset(np.random.default_rng(1))
    one = kmeans_candidates(ds, 1)
    single = kmeans_candidates(ds, 1, mode=SINGLE_FULL)
    assert [c.indices for c in one] == [c.indices for c in single] == [ds.full_set().indices]


def test_kmeans_drops_zero_exposure():
    ds = Dataset.from_arrays([1, 1, 0, 1], [0.1] * 4, [0.2, 0.3, 0.1, 0.4], [0.1] * 4,
                             [1, 0, 0, 0])
    with pytest.warns(UserWarning, match="dropping 1"):
        cands = kmeans_candidates(ds, 1, mode=ALL_UNIONS)
    assert cands[0].indices == (0, 1, 3)


def test_kmeans_needs_enough_variants():
    ds = Dataset.from_arrays([1, 1], [0.1] * 2, [0.2, 0.3], [0.1] * 2, [1, 0])
    with pytest.raises(ValueError):
        kmeans_candidates(ds, 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=60), st.integers(1, 3))
def test_kmeans_deterministic_and_ordered(values, k):
    if len(values) < k:
        return
    a = kmeans_1d(values, k)
    b = kmeans_1d(list(values), k)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.all(np.diff(a[1]) >= 0)


def test_kmeans_estimator_api():
    est = KMeans1D(n_clusters=2).fit(np.array([[1.0], [1.1], [5.0], [5.2]]))
    assert est.labels_.tolist() == [0, 0, 1, 1]
    assert est.predict([0.0, 10.0]).tolist() == [0, 1]
    assert est.get_params() == {"n_clusters": 2, "max_iter": 100}
