"""
Robust value iteration for s,a-rectangular L1 ambiguity sets.

The robust Bellman operator is ``max_a min_{p in P[s,a]} r(s,a) + gamma p.v``.
Every set shares the same value vector within a sweep, so the inner
minimization is done for all state-actions at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import MAX_RADIUS, L1AmbiguitySet, worst_case_rows
from .mdp import (MAX_SWEEPS, TabularMDP, TransitionModel, check_policy, check_simplex,
                  check_value, greedy, q_values, value_iteration)


@dataclass(frozen=True)
class AmbiguousMDP:
    """A base MDP plus one L1 ball per state-action.

    ``nominal`` has shape ``(S, A, S)`` and ``radius`` shape ``(S, A)``.
    """

    base: TabularMDP
    nominal: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        nominal = check_simplex(self.nominal, "nominal transition row")
        radius = np.array(self.radius, dtype=float)
        S, A = self.base.shape
        if nominal.shape != (S, A, S) or radius.shape != (S, A):
            raise InvalidInputError("ambiguity sets must cover every state-action")
        if not np.all(radius >= 0.0):
            raise InvalidInputError("radii must be non-negative")
        radius = np.minimum(radius, MAX_RADIUS)
        nominal.setflags(write=False)
        radius.setflags(write=False)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "radius", radius)

    @classmethod
    def from_sets(cls, base, sets):
        """Build from a nested ``sets[s][a]`` list of ``L1AmbiguitySet``."""
        nominal = np.array([[st.nominal for st in row] for row in sets])
        radius = np.array([[st.radius for st in row] for row in sets])
        return cls(base, nominal, radius)

    @classmethod
    def nominal_only(cls, base, model):
        return cls(base, model.probs, np.zeros(base.shape))

    def ambiguity_set(self, s, a):
        return L1AmbiguitySet(self.nominal[s, a], self.radius[s, a])


@dataclass(frozen=True)
class RobustSolution:
    value: np.ndarray
    policy: np.ndarray
    safe_return: float
    iterations: int


def worst_case_model(amdp, v):
    """Adversarial transition rows for the value vector ``v``."""
    return worst_case_rows(amdp.nominal, amdp.radius, v)


def robust_q(amdp, v):
    base = amdp.base
    return q_values(base.rewards, worst_case_model(amdp, v), v, base.discount)


def robust_bellman(amdp, v):
    """One application of the robust Bellman operator."""
    v = check_value(amdp.base, v)
    return robust_q(amdp, v).max(axis=1)


def solve_robust(amdp, max_sweeps=MAX_SWEEPS):
    """Robust value iteration from zero to the fixed point.

    The greedy robust policy is extracted once at convergence.
    """
    base = amdp.base
    v, sweeps = value_iteration(
        lambda u: robust_q(amdp, u).max(axis=1), base.num_states, base.discount, max_sweeps)
    policy = greedy(robust_q(amdp, v))
    return RobustSolution(v, policy, float(base.initial_dist @ v), sweeps)


def robust_evaluate(amdp, policy, max_sweeps=MAX_SWEEPS):
    """Worst-case value of a fixed policy over the ambiguity sets."""
    base = amdp.base
    pi = check_policy(base, policy)
    states = np.arange(base.num_states)
    sub = AmbiguousMDP(
        TabularMDP(base.rewards[states, pi][:, None], base.discount, base.initial_dist),
        amdp.nominal[states, pi][:, None, :],
        amdp.radius[states, pi][:, None],
    )
    v, _ = value_iteration(
        lambda u: robust_q(sub, u)[:, 0], base.num_states, base.discount, max_sweeps)
    return v


def worst_case_transition_model(amdp, v):
    return TransitionModel(worst_case_model(amdp, v))
