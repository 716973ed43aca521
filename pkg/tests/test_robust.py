import numpy as np
import pytest

from rsvf.geometry import L1AmbiguitySet, worst_case_l1
from rsvf.mdp import TabularMDP, TransitionModel, evaluate_policy, solve_nominal
from rsvf.robust import (AmbiguousMDP, robust_bellman, robust_evaluate, solve_robust,
                         worst_case_transition_model)

from conftest import random_simplex
from oracles import worst_case_lp


def random_amdp(rng, S=3, A=2, gamma=0.9, radius=None):
    mdp = TabularMDP(rng.normal(size=(S, A)), gamma, rng.dirichlet(np.ones(S)))
    nominal = random_simplex(rng, (S, A), S)
    if radius is None:
        radius = rng.uniform(0, 1, size=(S, A))
    return AmbiguousMDP(mdp, nominal, np.broadcast_to(radius, (S, A)))


def test_zero_radius_is_nominal_backup(rng):
    amdp = random_amdp(rng, radius=0.0)
    v = rng.normal(size=3)
    q = amdp.base.rewards + amdp.base.discount * amdp.nominal @ v
    np.testing.assert_allclose(robust_bellman(amdp, v), q.max(axis=1), atol=1e-14)


def test_full_simplex_single_action(rng):
    amdp = random_amdp(rng, A=1, radius=2.0)
    v = rng.normal(size=3)
    expected = amdp.base.rewards[:, 0] + amdp.base.discount * v.min()
    np.testing.assert_allclose(robust_bellman(amdp, v), expected, atol=1e-14)


def test_backup_matches_lp_per_state_action():
    rng = np.random.default_rng(7)
    amdp = random_amdp(rng, S=2, A=2, radius=0.2)
    v = rng.normal(size=2)
    q = np.array([[amdp.base.rewards[s, a] + amdp.base.discount
                   * worst_case_lp(amdp.nominal[s, a], 0.2, v) for a in range(2)]
                  for s in range(2)])
    np.testing.assert_allclose(robust_bellman(amdp, v), q.max(axis=1), atol=1e-10)


def test_one_state_self_loop():
    amdp = AmbiguousMDP(TabularMDP([[1.0]], 0.9, [1.0]), np.ones((1, 1, 1)), [[1.3]])
    sol = solve_robust(amdp)
    assert sol.value[0] == pytest.approx(10.0, abs=1e-7)


def test_single_state_bellman_update(rng):
    # State 0 moves to terminals 1..5 that carry their values forever.
    w = rng.uniform(0, 10, size=5)
    gamma = 0.9
    rewards = np.concatenate([[0.0], (1 - gamma) * w])[:, None]
    mdp = TabularMDP(rewards, gamma, np.eye(6)[0])
    nominal = np.eye(6)[:, None, :].copy()
    nominal[0, 0] = np.concatenate([[0.0], rng.dirichlet(np.ones(5))])
    radius = np.zeros((6, 1))
    radius[0, 0] = 0.5
    sol = solve_robust(AmbiguousMDP(mdp, nominal, radius))
    values = np.concatenate([[0.0], w])
    inner, _ = worst_case_l1(L1AmbiguitySet(nominal[0, 0], 0.5),
                             np.concatenate([[values[1:].max() + 100], w]))
    # Mass may be shifted onto state 0 itself, whose value is its own robust value.
    assert sol.safe_return <= gamma * inner + 1e-8
    assert sol.safe_return == pytest.approx(sol.value[0], abs=1e-12)
    fixed, _ = worst_case_l1(L1AmbiguitySet(nominal[0, 0], 0.5), sol.value)
    assert sol.value[0] == pytest.approx(gamma * fixed, abs=1e-7)


def test_zero_radius_equals_nominal_bit_for_bit(rng):
    for _ in range(10):
        amdp = random_amdp(rng, S=4, A=3, radius=0.0)
        policy, v = solve_nominal(amdp.base, TransitionModel(amdp.nominal))
        sol = solve_robust(amdp)
        assert np.array_equal(sol.value, v)
        assert np.array_equal(sol.policy, policy)


def test_robust_evaluate(rng):
    amdp = random_amdp(rng, S=3)
    model = TransitionModel(amdp.nominal)
    policy = np.array([1, 0, 1])
    robust = robust_evaluate(amdp, policy)
    assert np.all(robust <= evaluate_policy(amdp.base, policy, model) + 1e-8)
    zero = AmbiguousMDP(amdp.base, amdp.nominal, np.zeros((3, 2)))
    np.testing.assert_allclose(robust_evaluate(zero, policy),
                               evaluate_policy(amdp.base, policy, model), atol=1e-8)
    sol = solve_robust(amdp)
    np.testing.assert_allclose(robust_evaluate(amdp, sol.policy), sol.value, atol=1e-8)


def test_contraction_and_monotonicity(rng):
    for _ in range(100):
        amdp = random_amdp(rng, S=int(rng.integers(1, 6)), A=int(rng.integers(1, 4)))
        S = amdp.base.num_states
        u, v = rng.normal(scale=5, size=(2, S))
        tu, tv = robust_bellman(amdp, u), robust_bellman(amdp, v)
        assert np.abs(tu - tv).max() <= 0.9 * np.abs(u - v).max() + 1e-12
        lo = np.minimum(u, v)
        assert np.all(robust_bellman(amdp, lo) <= np.maximum(tu, tv) + 1e-12)
        assert np.all(robust_bellman(amdp, lo) <= tu + 1e-12)


def test_enlarging_a_radius_never_helps(rng):
    for _ in range(20):
        amdp = random_amdp(rng, S=4, A=2)
        base = solve_robust(amdp).value
        radius = amdp.radius.copy()
        s, a = rng.integers(4), rng.integers(2)
        radius[s, a] += rng.uniform(0, 1)
        bigger = solve_robust(AmbiguousMDP(amdp.base, amdp.nominal, radius)).value
        assert np.all(bigger <= base + 1e-8)


def test_safe_side_inequality(rng):
    for _ in range(20):
        amdp = random_amdp(rng, S=4, A=2)
        policy = rng.integers(0, 2, size=4)
        robust = robust_evaluate(amdp, policy)
        # A model with every row inside its ball: mix nominal with the worst case.
        worst = worst_case_transition_model(amdp, rng.normal(size=4)).probs
        t = rng.uniform()
        model = TransitionModel((1 - t) * amdp.nominal + t * worst)
        assert np.all(robust <= evaluate_policy(amdp.base, policy, model) + 1e-8)


def test_safe_return_is_initial_average(rng):
    sol = solve_robust(random_amdp(rng))
    assert sol.safe_return >= sol.value.min() - 1e-12
