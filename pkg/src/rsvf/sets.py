"""
Ambiguity-set constructions: Hoeffding, Bayesian credible L1 balls (BCI),
RSVF, and the unprotected posterior-mean baseline.

All probability constraints are enforced on a finite posterior sample, so
the empirical quantiles are rounded toward the safe side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import MAX_RADIUS, HyperplaneTarget, min_radius_center
from .mdp import solve_nominal
from .robust import AmbiguousMDP, RobustSolution, solve_robust, worst_case_model

DEDUP_TOL = 1e-7

CONDITION_SATISFIED = "condition-satisfied"
BCI_FALLBACK = "bci-fallback"
ITERATION_CAP = "iteration-cap"


@dataclass(frozen=True)
class ConfidenceBudget:
    """Overall failure probability split evenly over ``num_cells`` state-actions."""

    delta: float
    num_cells: int

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.num_cells < 1:
            raise InvalidInputError("num_cells must be positive")

    @classmethod
    def for_mdp(cls, delta, mdp):
        return cls(delta, mdp.num_states * mdp.num_actions)

    @property
    def per_cell(self):
        return self.delta / self.num_cells

    def min_samples(self):
        """Posterior samples needed before the per-cell quantile is resolvable."""
        return math.ceil(_snap(1.0 / self.per_cell))


def _snap(x):
    """Round ``x`` to the nearest integer when it is one up to float noise."""
    r = round(x)
    return float(r) if abs(x - r) <= 1e-9 * max(1.0, abs(x)) else x


def allowed_tail_count(per_cell, m):
    """Largest number of samples that may fall strictly outside (strict ``<``)."""
    return max(math.ceil(_snap(per_cell * m)) - 1, 0)


def quantile_index(per_cell, m):
    """Number of samples allowed strictly below the level (``<=``).

    No snapping here: a plain floor already rounds toward safety.
    """
    return min(math.floor(per_cell * m), m - 1)


def hoeffding_radius(n, num_states, num_cells, delta):
    """``sqrt(2/n * log(num_cells * 2**S / delta))`` clamped to 2; 2 when ``n == 0``."""
    n = np.asarray(n, dtype=float)
    log_term = math.log(num_cells) + num_states * math.log(2.0) - math.log(delta)
    with np.errstate(divide="ignore"):
        radius = np.sqrt(2.0 / n * log_term)
    return np.where(n > 0, np.minimum(radius, MAX_RADIUS), MAX_RADIUS)


def build_hoeffding(mdp, data, budget, known=None):
    """Distribution-free L1 balls around the empirical transition rows."""
    S, A = mdp.shape
    if data.counts.shape != (S, A, S):
        raise InvalidInputError("dataset dimensions do not match the MDP")
    nominal = data.empirical_means()
    radius = hoeffding_radius(data.n, S, budget.num_cells, budget.delta)
    if known is not None:
        nominal[known.mask] = known.model.probs[known.mask]
        radius[known.mask] = 0.0
    return AmbiguousMDP(mdp, nominal, radius)


def _check_posterior(mdp, posterior):
    if posterior.shape != mdp.shape or posterior.mean.shape[2] != mdp.num_states:
        raise InvalidInputError("posterior dimensions do not match the MDP")


def bci_radii(samples, mean, per_cell):
    """Smallest radius leaving strictly fewer than ``per_cell * m`` samples outside.

    A budget of ``per_cell >= 1`` constrains nothing and yields radius 0.
    """
    m = samples.shape[-2]
    dist = np.abs(samples - mean[..., None, :]).sum(axis=-1)
    c_max = allowed_tail_count(per_cell, m)
    if per_cell >= 1.0 or c_max >= m:
        return np.zeros(dist.shape[:-1])
    return np.partition(dist, m - 1 - c_max, axis=-1)[..., m - 1 - c_max]


def build_bci(mdp, posterior, budget):
    """Bayesian credible L1 balls centered at the posterior mean."""
    _check_posterior(mdp, posterior)
    m = posterior.sample_count
    required = budget.min_samples()
    if m < required:
        raise InvalidInputError(f"BCI needs at least {required} posterior samples, got {m}")
    radius = bci_radii(posterior.samples, posterior.mean, budget.per_cell)
    return AmbiguousMDP(mdp, posterior.mean, radius)


def hyperplane_levels(samples, value, per_cell):
    """Vectorized ``hyperplane_level`` over leading axes of ``samples``."""
    returns = samples @ value
    m = returns.shape[-1]
    k = quantile_index(per_cell, m)
    return np.partition(returns, k, axis=-1)[..., k]


def hyperplane_level(samples, value, per_cell):
    """Largest ``g`` with at least ``1 - per_cell`` of samples satisfying ``g <= v.p``.

    Computed as the ``floor(per_cell * m)``-th smallest (0-based) of ``v.p``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise InvalidInputError("need a non-empty (m, S) sample array")
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise InvalidInputError("value function must be finite")
    return float(hyperplane_levels(samples, value, per_cell))


def build_mean(mdp, posterior):
    """Nominal solution at the posterior mean; its return carries no guarantee."""
    _check_posterior(mdp, posterior)
    return solve_robust(AmbiguousMDP.nominal_only(mdp, posterior.mean_model()))


@dataclass
class RsvfIteration:
    value: np.ndarray
    policy: np.ndarray
    radius: np.ndarray
    nominal: np.ndarray
    safe_return: float
    value_set_size: int
    # Smallest per-cell fraction of samples satisfying the relaxed condition.
    condition_fraction: float
    condition_holds: bool
    # Same check against every value function in the set, recorded only.
    full_set_condition_holds: bool


@dataclass
class RsvfTrace:
    iterations: list = field(default_factory=list)
    terminated_by: str = ""
    bci_safe_return: float = float("nan")

    @property
    def safe_returns(self):
        return [it.safe_return for it in self.iterations]


def rsvf_sets(mdp, posterior, values, per_cell, lp_solver="simplex", previous=None):
    """Per-cell centers and radii that meet every value function's hyperplane.

    Among minimum-radius centers the one closest to the posterior mean is
    used. When ``previous`` (an ``AmbiguousMDP``) is given, each new ball
    also encloses the previous one, so the sets only grow.
    """
    S, A = mdp.shape
    levels = np.stack([hyperplane_levels(posterior.samples, v, per_cell) for v in values])
    nominal = np.empty((S, A, S))
    radius = np.empty((S, A))
    for s in range(S):
        for a in range(A):
            targets = [HyperplaneTarget(v, levels[i, s, a]) for i, v in enumerate(values)]
            contain = None
            if previous is not None:
                contain = (previous.nominal[s, a], previous.radius[s, a])
            nominal[s, a], radius[s, a] = min_radius_center(
                targets, anchor=posterior.mean[s, a], solver=lp_solver, contain=contain)
    return AmbiguousMDP(mdp, nominal, radius)


def condition_fractions(amdp, samples, value, per_cell):
    """Check ``min_{p in P} (p - p*) . v <= 0`` on posterior draws ``p*``.

    Returns the per-cell fraction of draws that satisfy it and a boolean
    mask of cells where the allowed number of failures is not exceeded.
    """
    worst = worst_case_model(amdp, value) @ value
    draws = samples @ value
    tol = 1e-9 * max(1.0, np.abs(value).max())
    ok = worst[..., None] <= draws + tol
    m = samples.shape[2]
    failures = m - ok.sum(axis=-1)
    holds = failures <= quantile_index(per_cell, m)
    return ok.mean(axis=-1), holds


def _dedup_append(values, v):
    if any(np.max(np.abs(v - u)) <= DEDUP_TOL for u in values):
        return False
    values.append(v)
    return True


def build_rsvf(mdp, posterior, budget, max_iters=20, verify=None, lp_solver="simplex"):
    """Robustification with value-function-guided ambiguity sets.

    Starting from the value function of the posterior-mean model, each pass
    builds, for every state-action, the smallest L1 ball that meets the
    hyperplane ``v . p = g(v)`` of each value function in the current set,
    where ``g(v)`` is the conservative ``per_cell`` lower quantile of
    ``v . p*`` under the posterior. The robust solution of those sets is then
    tested against the relaxed safety condition using its own value
    function; on failure that value function joins the set. Each pass's
    balls enclose the previous pass's, so safe returns never increase.

    The loop ends when the condition holds in every cell, when the safe
    return drops below the BCI estimate (the BCI solution is returned), or
    after ``max_iters`` passes (also returning BCI). ``verify`` optionally
    supplies fresh posterior draws for the condition check; ``lp_solver``
    is passed to ``min_radius_center``.
    """
    _check_posterior(mdp, posterior)
    if max_iters < 1:
        raise InvalidInputError("max_iters must be at least 1")
    per_cell = budget.per_cell
    check = posterior if verify is None else verify
    _check_posterior(mdp, check)

    bci = solve_robust(build_bci(mdp, posterior, budget))
    trace = RsvfTrace(bci_safe_return=bci.safe_return)
    _, v0 = solve_nominal(mdp, posterior.mean_model())
    values = [v0]
    amdp = None

    for _ in range(max_iters):
        amdp = rsvf_sets(mdp, posterior, values, per_cell, lp_solver, previous=amdp)
        sol = solve_robust(amdp)
        fractions, holds = condition_fractions(amdp, check.samples, sol.value, per_cell)
        full = all(condition_fractions(amdp, check.samples, u, per_cell)[1].all()
                   for u in values + [sol.value])
        trace.iterations.append(RsvfIteration(
            sol.value, sol.policy, amdp.radius, amdp.nominal, sol.safe_return, len(values),
            float(fractions.min()), bool(holds.all()), full))
        if sol.safe_return < bci.safe_return:
            trace.terminated_by = BCI_FALLBACK
            return bci, trace
        if holds.all():
            trace.terminated_by = CONDITION_SATISFIED
            return sol, trace
        if not _dedup_append(values, sol.value):
            break
    trace.terminated_by = ITERATION_CAP
    return bci, trace
