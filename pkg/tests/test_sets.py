import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsvf.bench import generate_dataset, single_state_problem
from rsvf.errors import InvalidInputError
from rsvf.mdp import TabularMDP, TransitionModel, solve_nominal
from rsvf.posterior import PosteriorSampleSet, TransitionDataset
from rsvf.robust import AmbiguousMDP, solve_robust, worst_case_model
from rsvf.sets import (BCI_FALLBACK, CONDITION_SATISFIED, ConfidenceBudget, bci_radii,
                       build_bci, build_hoeffding, build_mean, build_rsvf,
                       condition_fractions, hoeffding_radius, hyperplane_level)

from conftest import random_simplex


def test_budget():
    mdp = TabularMDP(np.zeros((5, 2)), 0.9, np.eye(5)[0])
    budget = ConfidenceBudget.for_mdp(0.05, mdp)
    assert budget.per_cell == 0.05 / 10
    with pytest.raises(InvalidInputError):
        ConfidenceBudget(1.0, 3)


def test_hoeffding_radius_formula():
    assert hoeffding_radius(100, 5, 10, 0.05) == pytest.approx(math.sqrt(0.02 * math.log(6400)))
    assert hoeffding_radius(100, 5, 10, 0.05) == pytest.approx(0.4187, abs=1e-4)
    assert hoeffding_radius(0, 5, 10, 0.05) == 2.0
    radii = hoeffding_radius(np.array([10, 100, 1000]), 5, 10, 0.05)
    assert np.all(np.diff(radii) < 0)


def test_build_hoeffding_uses_empirical_rows():
    mdp = TabularMDP(np.zeros((2, 1)), 0.9, [1, 0])
    data = TransitionDataset([(0, 0, 1)] * 3 + [(0, 0, 0)], 2, 1)
    amdp = build_hoeffding(mdp, data, ConfidenceBudget.for_mdp(0.05, mdp))
    np.testing.assert_allclose(amdp.nominal[0, 0], [0.25, 0.75])
    assert amdp.radius[1, 0] == 2.0


def test_bci_order_statistic_example():
    # Distances 0.01 * j for j = 1..100: 0.96 leaves 4 samples outside (< 5).
    d = 0.01 * np.arange(1, 101)
    mean = np.array([0.0, 1.0])
    samples = np.column_stack([d / 2, 1 - d / 2])
    psi = bci_radii(samples, mean, 0.05)
    assert psi == pytest.approx(0.96)
    assert np.sum(d > psi + 1e-12) == 4


def test_bci_degenerate_cases():
    mean = np.array([0.3, 0.7])
    assert bci_radii(np.tile(mean, (50, 1)), mean, 0.01) == 0.0
    samples = np.random.default_rng(0).dirichlet([1, 1], size=20)
    assert bci_radii(samples, mean, 1.0) == 0.0


def test_bci_needs_enough_samples():
    mdp = TabularMDP(np.zeros((2, 1)), 0.9, [1, 0])
    post = PosteriorSampleSet(np.full((2, 1, 30, 2), 0.5), np.full((2, 1, 2), 0.5))
    with pytest.raises(InvalidInputError, match="40"):
        build_bci(mdp, post, ConfidenceBudget.for_mdp(0.05, mdp))


def test_hyperplane_level_examples():
    values = np.arange(1, 101, dtype=float)
    samples = np.column_stack([values / 100, 1 - values / 100])
    v = np.array([100.0, 0.0])
    g = hyperplane_level(samples, v, 0.05)
    assert g == pytest.approx(6.0)
    assert np.sum(samples @ v >= g - 1e-9) == 95
    assert hyperplane_level(np.full((10, 2), 0.5), np.array([2.0, 2.0]), 0.05) == 2.0
    assert hyperplane_level(samples[:10], v, 0.05) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        hyperplane_level(np.zeros((0, 2)), v, 0.05)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 400), st.integers(2, 6), st.floats(0.001, 0.5), st.integers(0, 2**32 - 1))
def test_quantile_reverification(m, S, per_cell, seed):
    rng = np.random.default_rng(seed)
    samples = rng.dirichlet(np.ones(S), size=m)
    if rng.random() < 0.3:
        samples = np.round(samples, 1)  # ties
        samples /= samples.sum(axis=1, keepdims=True)
    v = rng.normal(size=S)
    g = hyperplane_level(samples, v, per_cell)
    assert np.mean(samples @ v < g) <= per_cell
    mean = samples.mean(axis=0)
    psi = bci_radii(samples, mean, per_cell)
    outside = np.abs(samples - mean).sum(axis=1) > psi
    assert np.mean(outside) < per_cell


def point_mass_posterior(model, m=50):
    samples = np.repeat(model.probs[:, :, None, :], m, axis=2)
    return PosteriorSampleSet(samples, model.probs.copy())


def random_problem(rng, S=3, A=2):
    mdp = TabularMDP(rng.normal(size=(S, A)), 0.9, rng.dirichlet(np.ones(S)))
    return mdp, TransitionModel(random_simplex(rng, (S, A), S))


def test_mean_on_point_mass_equals_nominal(rng):
    mdp, truth = random_problem(rng)
    post = point_mass_posterior(truth)
    sol = build_mean(mdp, post)
    policy, v = solve_nominal(mdp, truth)
    assert np.array_equal(sol.value, v) and np.array_equal(sol.policy, policy)
    zero = solve_robust(AmbiguousMDP(mdp, post.mean, np.zeros((3, 2))))
    assert np.array_equal(zero.value, sol.value)


def test_rsvf_on_point_mass_is_nominal(rng):
    mdp, truth = random_problem(rng)
    post = point_mass_posterior(truth, m=200)
    sol, trace = build_rsvf(mdp, post, ConfidenceBudget.for_mdp(0.05, mdp))
    assert trace.terminated_by == CONDITION_SATISFIED
    assert len(trace.iterations) == 1
    assert np.all(trace.iterations[0].radius <= 1e-12)
    np.testing.assert_allclose(sol.value, solve_nominal(mdp, truth)[1], atol=1e-8)


def single_state_instance(n, seed, kind="single-state-dirichlet", m=1000):
    problem, _ = single_state_problem(kind, {}, seed)
    g = np.random.default_rng(seed)
    truth = problem.draw_truth(g)
    data = generate_dataset(truth, n, seed)
    post = problem.fit_posterior(data, m, seed + 1, problem.known(truth))
    return problem.mdp, post


@pytest.mark.parametrize("seed", range(5))
def test_rsvf_single_state_is_the_quantile(seed):
    mdp, post = single_state_instance(10, seed)
    budget = ConfidenceBudget.for_mdp(0.05, mdp)
    sol, trace = build_rsvf(mdp, post, budget)
    assert trace.terminated_by == CONDITION_SATISFIED
    gamma = mdp.discount
    w = mdp.rewards[1:, 0] / (1 - gamma)
    returns = np.sort(post.samples[0, 0, :, 1:] @ w)
    k = math.floor(budget.per_cell * post.sample_count + 1e-9)
    assert sol.safe_return == pytest.approx(mdp.rewards[0, 0] + gamma * returns[k], abs=1e-8)


def test_rsvf_contract_on_random_instances(rng):
    from rsvf.posterior import DirichletPrior, dirichlet_posterior
    for trial in range(6):
        S, A = 3, 2
        mdp, truth = random_problem(rng, S, A)
        data = generate_dataset(truth, int(rng.integers(0, 15)), trial)
        post = dirichlet_posterior(DirichletPrior.uniform(S, A), data, 200, trial)
        budget = ConfidenceBudget(0.3, S * A)
        sol, trace = build_rsvf(mdp, post, budget, max_iters=8)
        assert sol.safe_return >= trace.bci_safe_return - 1e-9
        returns = trace.safe_returns
        assert all(b <= a + 1e-8 for a, b in zip(returns, returns[1:]))
        if trace.terminated_by == CONDITION_SATISFIED:
            last = trace.iterations[-1]
            amdp = AmbiguousMDP(mdp, last.nominal, last.radius)
            _, holds = condition_fractions(amdp, post.samples, last.value, budget.per_cell)
            assert holds.all()
            if last.value_set_size == 1:
                bci = build_bci(mdp, post, budget)
                # The BCI ball's worst case for v never beats the RSVF level.
                rsvf_worst = worst_case_model(amdp, trace.iterations[0].value) \
                    @ trace.iterations[0].value
                bci_worst = worst_case_model(bci, trace.iterations[0].value) \
                    @ trace.iterations[0].value
                assert np.all(bci_worst <= rsvf_worst + 1e-9)


def test_rsvf_fallback_is_bci(monkeypatch):
    import rsvf.sets as sets

    mdp, post = single_state_instance(5, 0)
    budget = ConfidenceBudget.for_mdp(0.05, mdp)
    bci = solve_robust(build_bci(mdp, post, budget))
    # Force every check to fail so the loop has to end by falling back.
    monkeypatch.setattr(sets, "condition_fractions",
                        lambda amdp, s, v, pc: (np.zeros(amdp.radius.shape),
                                                np.zeros(amdp.radius.shape, bool)))
    sol, trace = build_rsvf(mdp, post, budget, max_iters=3)
    assert trace.terminated_by in (BCI_FALLBACK, "iteration-cap")
    assert sol.safe_return == bci.safe_return


def test_rsvf_validation(rng):
    mdp, truth = random_problem(rng)
    post = point_mass_posterior(truth, m=200)
    with pytest.raises(InvalidInputError):
        build_rsvf(mdp, post, ConfidenceBudget.for_mdp(0.05, mdp), max_iters=0)
