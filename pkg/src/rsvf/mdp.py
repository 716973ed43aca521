"""
Finite tabular MDPs: representation, exact policy evaluation and nominal
value iteration.

Transitions are stored densely as an ``(S, A, S)`` array where
``probs[s, a]`` is the distribution of the successor state. Policies are
integer arrays of length ``S`` and value functions are float arrays of
length ``S``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError

SIMPLEX_TOL = 1e-9
RENORMALIZE_TOL = 1e-7
MAX_SWEEPS = 100_000
VALUE_TOL = 1e-9


def check_simplex(p, name="probability vector"):
    """Validate rows of ``p`` (last axis) on the simplex.

    Rows off by at most ``RENORMALIZE_TOL`` are clipped and renormalized;
    anything worse raises. Returns a new float array.
    """
    p = np.array(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if p.size and p.min() < -RENORMALIZE_TOL:
        raise InvalidInputError(f"{name} has negative entries (min {p.min():.3e})")
    sums = p.sum(axis=-1)
    err = np.max(np.abs(sums - 1.0)) if sums.size else 0.0
    if err > RENORMALIZE_TOL:
        raise InvalidInputError(f"{name} does not sum to one (error {err:.3e})")
    if err > SIMPLEX_TOL or (p.size and p.min() < 0):
        p = np.clip(p, 0.0, None)
        p /= p.sum(axis=-1, keepdims=True)
    return p


def _freeze(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TabularMDP:
    """Rewards ``r(s, a)``, discount and initial distribution of an MDP."""

    rewards: np.ndarray
    discount: float
    initial_dist: np.ndarray

    def __post_init__(self):
        r = np.array(self.rewards, dtype=float)
        if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1:
            raise InvalidInputError("rewards must be a non-empty (S, A) array")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("rewards must be finite")
        if not 0.0 <= self.discount < 1.0:
            raise InvalidInputError(f"discount must lie in [0, 1), got {self.discount}")
        p0 = check_simplex(self.initial_dist, "initial distribution")
        if p0.shape != (r.shape[0],):
            raise InvalidInputError("initial distribution length must equal num_states")
        object.__setattr__(self, "rewards", _freeze(r))
        object.__setattr__(self, "initial_dist", _freeze(p0))
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self):
        return self.rewards.shape[0]

    @property
    def num_actions(self):
        return self.rewards.shape[1]

    @property
    def shape(self):
        return self.rewards.shape


@dataclass(frozen=True)
class TransitionModel:
    """One successor distribution per state-action pair, shape ``(S, A, S)``."""

    probs: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.probs, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidInputError("transition array must have shape (S, A, S)")
        object.__setattr__(self, "probs", _freeze(check_simplex(P, "transition row")))

    @property
    def num_states(self):
        return self.probs.shape[0]

    @property
    def num_actions(self):
        return self.probs.shape[1]

    def row(self, s, a):
        return self.probs[s, a]


def _check_model(mdp, model):
    if model.probs.shape[:2] != mdp.shape:
        raise InvalidInputError(
            f"model shape {model.probs.shape} does not match MDP shape {mdp.shape}")


def check_policy(mdp, policy):
    pi = np.asarray(policy)
    if pi.shape != (mdp.num_states,):
        raise InvalidInputError("policy must have one action per state")
    if not np.issubdtype(pi.dtype, np.integer):
        if not np.all(pi == np.round(pi)):
            raise InvalidInputError("policy entries must be integers")
        pi = pi.astype(int)
    if pi.min() < 0 or pi.max() >= mdp.num_actions:
        raise InvalidInputError("policy action index out of range")
    return pi


def check_value(mdp, value):
    v = np.asarray(value, dtype=float)
    if v.shape != (mdp.num_states,):
        raise InvalidInputError("value function length must equal num_states")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("value function must be finite")
    return v


def q_values(rewards, probs, value, discount):
    """One-step lookahead ``r(s,a) + discount * probs[s,a] @ value``."""
    return rewards + discount * (probs @ value)


def greedy(q):
    """Greedy action per state; ``np.argmax`` breaks ties toward index 0."""
    return np.argmax(q, axis=1)


def stopping_threshold(discount, tol=VALUE_TOL):
    """Sweep-to-sweep change that guarantees a Bellman residual below ``tol``."""
    if discount == 0.0:
        return np.inf
    return tol * (1.0 - discount) / discount


def evaluate_policy(mdp, policy, model):
    """Value of a stationary deterministic policy under ``model``.

    Solves ``(I - discount * P_pi) v = r_pi`` directly and applies one step
    of iterative refinement.
    """
    _check_model(mdp, model)
    pi = check_policy(mdp, policy)
    states = np.arange(mdp.num_states)
    P_pi = model.probs[states, pi]
    r_pi = mdp.rewards[states, pi]
    M = np.eye(mdp.num_states) - mdp.discount * P_pi
    v = np.linalg.solve(M, r_pi)
    v = v + np.linalg.solve(M, r_pi - M @ v)
    return v


def return_of(mdp, value):
    """Expected return ``p0 . v`` under the initial distribution."""
    v = check_value(mdp, value)
    return float(mdp.initial_dist @ v)


def value_iteration(backup, num_states, discount, max_sweeps=MAX_SWEEPS):
    """Iterate ``backup`` from zero until the change is below the stopping rule.

    Returns the final iterate and the number of sweeps.
    """
    threshold = stopping_threshold(discount)
    v = np.zeros(num_states)
    change = np.inf
    for sweep in range(1, max_sweeps + 1):
        v_next = backup(v)
        change = np.max(np.abs(v_next - v))
        v = v_next
        if change <= threshold:
            return v, sweep
    raise NumericalFailureError(
        f"value iteration did not converge in {max_sweeps} sweeps", change)


def solve_nominal(mdp, model, max_sweeps=MAX_SWEEPS):
    """Optimal policy and value function of the MDP under a fixed model."""
    _check_model(mdp, model)
    P, r, gamma = model.probs, mdp.rewards, mdp.discount
    v, _ = value_iteration(
        lambda u: q_values(r, P, u, gamma).max(axis=1), mdp.num_states, gamma, max_sweeps)
    policy = greedy(q_values(r, P, v, gamma))
    return policy, v


def bellman_residual(mdp, model, value, policy=None):
    """Infinity-norm residual of one (optimal or policy) Bellman backup."""
    q = q_values(mdp.rewards, model.probs, value, mdp.discount)
    if policy is None:
        backed = q.max(axis=1)
    else:
        backed = q[np.arange(mdp.num_states), policy]
    return float(np.max(np.abs(backed - value)))
