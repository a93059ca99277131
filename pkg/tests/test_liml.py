import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset, toy_dataset
from focusedmr.exceptions import EstimationError
from focusedmr.liml import (
    FALLBACK_BOUND,
    components,
    minimize,
    objective,
    score,
    search_bound,
    variance_of_fit,
)
from focusedmr.summary_data import Dataset, InstrumentSet

# Exact rational evaluation of the toy at theta = 0.2, rounded to double.
TOY_Q = 0.34615384615384615
TOY_SCORE = 3.5281065088757395
TOY_ETA = 50.96153846153846
TOY_SIGMA = 2.7736686390532546
TOY_XI = 0.22189349112426035
TOY_VAR = 0.02069063723745105


def test_toy_objective_and_score(toy):
    core = toy.core_set()
    assert objective(toy, core, 0.2) == pytest.approx(TOY_Q, rel=1e-14)
    assert score(toy, core, 0.2) == pytest.approx(TOY_SCORE, rel=1e-14)


def test_toy_components_and_variance(toy):
    comp = components(toy, toy.core_set(), 0.2)
    assert comp.eta == pytest.approx(TOY_ETA, rel=1e-14)
    assert comp.sigma_term == pytest.approx(TOY_SIGMA, rel=1e-14)
    assert comp.xi == pytest.approx(TOY_XI, rel=1e-14)
    assert variance_of_fit(comp) == pytest.approx(TOY_VAR, rel=1e-14)


def test_objective_at_zero_is_outcome_chi_square(toy):
    expected = sum(by**2 / 0.05**2 for by in (0.02, 0.04, 0.09))
    assert objective(toy, toy.core_set(), 0.0) == pytest.approx(expected, rel=1e-14)


def test_components_at_zero_theta(toy):
    comp = components(toy, toy.core_set(), 0.0)
    assert comp.xi == 0.0
    assert comp.omega == (0.05**2,) * 3


def test_single_variant_is_ratio():
    ds = Dataset.from_arrays([0.3], [0.05], [0.12], [0.05], [True])
    fit = minimize(ds, ds.core_set())
    assert fit.theta_hat == pytest.approx(0.4, abs=1e-9)
    assert objective(ds, ds.core_set(), 0.4) == pytest.approx(0.0, abs=1e-28)
    assert score(ds, ds.core_set(), 0.12 / 0.3) == pytest.approx(0.0, abs=1e-12)


def test_no_relevant_instruments():
    ds = Dataset.from_arrays([0.0, 0.0], [0.1, 0.1], [0.1, 0.2], [0.1, 0.1], [True, True])
    with pytest.raises(EstimationError, match="no relevant instruments"):
        minimize(ds, ds.core_set())


def test_search_bound_fallback():
    assert search_bound(np.array([0.01]), np.array([0.1]), np.array([1.0])) == FALLBACK_BOUND
    assert search_bound(np.array([1.0, 0.01]), np.array([0.1, 0.1]), np.array([2.0, 5.0])) == 20.0


def test_variance_needs_positive_eta():
    ds = Dataset.from_arrays([0.01, 0.01], [0.1, 0.1], [0.1, 0.2], [0.1, 0.1], [True, True])
    comp = components(ds, ds.core_set(), 0.1)
    with pytest.raises(EstimationError, match="too weak"):
        variance_of_fit(comp)
    assert np.isnan(minimize(ds, ds.core_set()).variance)


def test_variance_strong_limit():
    comp = components(toy_dataset(), (0, 1), 0.2)
    add = components(toy_dataset(), (2,), 0.2)
    from dataclasses import replace
    c0, a0 = replace(comp, sigma_term=0.0), replace(add, sigma_term=0.0)
    assert variance_of_fit(c0, a0) == pytest.approx(1.0 / (comp.eta + add.eta), rel=1e-14)


def test_dense_grid_oracle(rng):
    for _ in range(10):
        ds = random_dataset(rng)
        full = ds.full_set()
        fit = minimize(ds, full)
        grid = np.linspace(-fit.bound, fit.bound, 200_001)
        vals = np.array([objective(ds, full, t) for t in grid[::50]])
        assert fit.objective_at_min <= vals.min() + 1e-9


def test_score_condition_at_minimum(rng):
    for _ in range(20):
        ds = random_dataset(rng)
        fit = minimize(ds, ds.full_set())
        dq = abs(score(ds, ds.full_set(), fit.theta_hat))
        # -dQ/dtheta / 2 vanishes up to golden-section resolution.
        curvature = abs(score(ds, ds.full_set(), fit.theta_hat + 1e-6)
                        - score(ds, ds.full_set(), fit.theta_hat - 1e-6)) / 2e-6
        assert dq <= curvature * 1e-9 + 1e-9


def test_finite_difference(rng):
    for _ in range(5):
        ds = random_dataset(rng)
        s = ds.full_set()
        for theta in rng.uniform(-2, 2, 10):
            h = 1e-6 * max(1.0, abs(theta))
            fd = (objective(ds, s, theta + h) - objective(ds, s, theta - h)) / (2 * h)
            assert -2 * score(ds, s, theta) == pytest.approx(fd, rel=1e-4, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_scale_equivariance(seed, c):
    ds = random_dataset(np.random.default_rng(seed), p=8, n_core=8)
    scaled = Dataset.from_arrays(ds.beta_x, ds.se_x, c * ds.beta_y, c * ds.se_y, ds.is_core)
    s = ds.core_set()
    for theta in (-0.7, 0.0, 0.3, 1.9):
        assert objective(scaled, s, c * theta) == pytest.approx(objective(ds, s, theta), rel=1e-12)
    t1 = minimize(ds, s).theta_hat
    t2 = minimize(scaled, s).theta_hat
    assert t2 == pytest.approx(c * t1, rel=1e-7, abs=1e-9)


def test_permutation_invariance(rng):
    ds = random_dataset(rng, p=15, n_core=15)
    perm = rng.permutation(15)
    shuffled = Dataset.from_arrays(ds.beta_x[perm], ds.se_x[perm], ds.beta_y[perm],
                                   ds.se_y[perm], ds.is_core[perm])
    a, b = minimize(ds, ds.core_set()), minimize(shuffled, shuffled.core_set())
    assert b.theta_hat == pytest.approx(a.theta_hat, abs=1e-12)
    ca = components(ds, ds.core_set(), 0.3)
    cb = components(shuffled, shuffled.core_set(), 0.3)
    assert cb.eta == pytest.approx(ca.eta, rel=1e-12)
    assert cb.sigma_term == pytest.approx(ca.sigma_term, rel=1e-12)


def test_candidate_variance_uses_core_reference():
    ds = toy_dataset(core=(True, True, False))
    fit_c = minimize(ds, ds.core_set())
    fit_f = minimize(ds, InstrumentSet((0, 1, 2), k=1))
    comp_c = components(ds, (0, 1), fit_c.theta_hat)
    comp_s = components(ds, (2,), fit_c.theta_hat)
    assert fit_f.variance == pytest.approx(variance_of_fit(comp_c, comp_s), rel=1e-14)


def test_empty_set_rejected(toy):
    with pytest.raises(ValueError):
        objective(toy, (), 0.1)
