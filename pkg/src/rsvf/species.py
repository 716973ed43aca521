"""
Invasive-species population MDP.

The population evolves as ``N' = min(lambda * N, K)`` (and never below
zero) with growth rate::

    lambda = lambda_bar - z * N * beta1 - z * max(0, N - N_bar)**2 * beta2 + noise

where ``z`` indicates the control action. States are bins of the observed
population ``y = N + noise`` with representative values ``linspace(0, K,
bins)``, so observation noise enters the transitions. Transition rows are
Monte Carlo histograms built from one fixed set of standard normal draws;
reusing the draws keeps rows for nearby growth rates consistent.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidInputError
from .mdp import TabularMDP, TransitionModel
from .posterior import PosteriorSampleSet, cell_rng

NO_CONTROL, CONTROL = 0, 1
PARAM_NAMES = ("lambda_bar", "beta1", "beta2")


@dataclass(frozen=True)
class PopulationModelParams:
    lambda_bar: float = 1.2
    beta1: float = 0.002
    beta2: float = 0.00005
    n_bar: float = 300.0
    capacity: float = 1000.0
    sigma_lambda: float = 0.1
    sigma_y: float = 20.0

    def __post_init__(self):
        if self.capacity <= 0:
            raise InvalidInputError("carrying capacity must be positive")
        if self.sigma_lambda < 0 or self.sigma_y < 0:
            raise InvalidInputError("noise standard deviations must be non-negative")

    def theta(self):
        return np.array([self.lambda_bar, self.beta1, self.beta2])

    def with_theta(self, theta):
        return PopulationModelParams(float(theta[0]), float(theta[1]), float(theta[2]),
                                     self.n_bar, self.capacity, self.sigma_lambda, self.sigma_y)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidInputError(f"unknown population parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PopulationPrior:
    """Independent Gaussian prior on ``(lambda_bar, beta1, beta2)``.

    The prior is truncated to ``width`` standard deviations around its mean;
    the remaining parameters of ``mean`` are treated as known.
    """

    mean: PopulationModelParams = PopulationModelParams()
    sd: tuple = (0.05, 0.0005, 0.00001)
    width: float = 5.0

    def __post_init__(self):
        sd = tuple(float(x) for x in self.sd)
        if len(sd) != 3 or min(sd) < 0:
            raise InvalidInputError("prior sd must hold three non-negative numbers")
        object.__setattr__(self, "sd", sd)

    def bounds(self):
        mu, sd = self.mean.theta(), np.array(self.sd)
        return mu - self.width * sd, mu + self.width * sd

    def log_density(self, theta):
        mu, sd = self.mean.theta(), np.array(self.sd)
        lo, hi = self.bounds()
        if np.any(theta < lo) or np.any(theta > hi):
            return -np.inf
        free = sd > 0
        return -0.5 * np.sum(((theta[free] - mu[free]) / sd[free]) ** 2)

    def sample(self, rng, size):
        mu, sd = self.mean.theta(), np.array(self.sd)
        out = np.empty((size, 3))
        filled = 0
        while filled < size:
            draw = mu + sd * rng.standard_normal((size, 3))
            ok = np.all(np.abs(draw - mu) <= self.width * sd, axis=1)
            take = draw[ok][: size - filled]
            out[filled:filled + len(take)] = take
            filled += len(take)
        return out


class SpeciesModel:
    """Discretized population dynamics shared by the truth and the posterior."""

    def __init__(self, params, bins=50, draws=100_000, seed=0, grid_points=96):
        if bins < 2:
            raise InvalidInputError("need at least two population bins")
        self.params = params
        self.bins = bins
        self.draws = draws
        self.grid_points = grid_points
        self.levels = np.linspace(0.0, params.capacity, bins)
        self.edges = (self.levels[1:] + self.levels[:-1]) / 2.0
        rng = cell_rng(seed, 0)
        self._z_growth = rng.standard_normal(draws)
        self._z_obs = rng.standard_normal(draws)
        self._tables = {}

    # dynamics -------------------------------------------------------------
    def growth_mean(self, theta, state, action):
        """Mean growth rate for parameter rows ``theta`` of shape ``(..., 3)``."""
        theta = np.asarray(theta, dtype=float)
        N = self.levels[state]
        excess = max(0.0, N - self.params.n_bar)
        control = action * (N * theta[..., 1] + excess**2 * theta[..., 2])
        return theta[..., 0] - control

    def successor_rows(self, state, mu, chunk=8):
        """Histogram of the next observed bin for each growth mean in ``mu``."""
        p = self.params
        N = self.levels[state]
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        rows = np.empty((mu.size, self.bins))
        for start in range(0, mu.size, chunk):
            m = mu[start:start + chunk, None]
            nxt = np.clip((m + p.sigma_lambda * self._z_growth) * N, 0.0, p.capacity)
            y = nxt + p.sigma_y * self._z_obs
            idx = np.searchsorted(self.edges, y)
            flat = idx + self.bins * np.arange(len(m))[:, None]
            counts = np.bincount(flat.ravel(), minlength=len(m) * self.bins)
            rows[start:start + len(m)] = counts.reshape(len(m), self.bins) / self.draws
        return rows

    def transition_model(self, params=None):
        theta = (params or self.params).theta()
        P = np.empty((self.bins, 2, self.bins))
        for s in range(self.bins):
            for a in (NO_CONTROL, CONTROL):
                P[s, a] = self.successor_rows(s, self.growth_mean(theta, s, a))[0]
        return TransitionModel(P)

    # tabulation over the growth mean ------------------------------------
    def _mu_range(self, state, prior):
        lo, hi = prior.bounds()
        corners = np.array(np.meshgrid(*zip(lo, hi))).reshape(3, -1).T
        mus = np.concatenate([self.growth_mean(corners, state, a) for a in (0, 1)])
        mu_lo, mu_hi = mus.min(), mus.max()
        N = self.levels[state]
        if N > 0:
            # Outside this band the clipped next population is saturated.
            slack = 6.0 * self.params.sigma_lambda + 1e-3
            mu_lo = max(mu_lo, -slack)
            mu_hi = min(mu_hi, self.params.capacity / N + slack)
            mu_hi = max(mu_hi, mu_lo)
        return mu_lo, mu_hi

    def table(self, prior):
        """Per-state grid of growth means and the matching transition rows."""
        key = (prior.mean, prior.sd, prior.width)
        if key not in self._tables:
            grids, rows = [], []
            for s in range(self.bins):
                lo, hi = self._mu_range(s, prior)
                grid = np.linspace(lo, hi, self.grid_points)
                grids.append(grid)
                rows.append(self.successor_rows(s, grid))
            self._tables[key] = (np.array(grids), np.array(rows))
        return self._tables[key]

    def interpolate(self, prior, state, mu):
        """Rows at growth means ``mu`` by linear interpolation in the table."""
        grids, rows = self.table(prior)
        grid = grids[state]
        mu = np.clip(np.asarray(mu, dtype=float), grid[0], grid[-1])
        if grid[-1] == grid[0]:
            return np.broadcast_to(rows[state][0], mu.shape + (self.bins,)).copy()
        pos = (mu - grid[0]) / (grid[1] - grid[0])
        i = np.clip(np.floor(pos).astype(int), 0, len(grid) - 2)
        w = (pos - i)[..., None]
        return (1 - w) * rows[state][i] + w * rows[state][i + 1]


def build_species_mdp(params, bins=50, rewards=(1.0, 100.0), discount=0.9,
                      initial_fraction=0.3, draws=100_000, seed=0):
    """Tabular MDP and true transitions of the population model.

    Reward is ``-c_N * N(s) - c_a * [a == control]``; the initial
    distribution is a point mass on the bin nearest ``initial_fraction * K``.
    """
    model = SpeciesModel(params, bins, draws, seed)
    return _species_mdp(model, rewards, discount, initial_fraction), model.transition_model()


def _species_mdp(model, rewards, discount, initial_fraction):
    c_n, c_a = rewards
    r = -c_n * model.levels[:, None] - c_a * np.array([0.0, 1.0])[None, :]
    p0 = np.zeros(model.bins)
    p0[int(np.argmin(np.abs(model.levels - initial_fraction * model.params.capacity)))] = 1.0
    return TabularMDP(r, discount, p0)


class _Observations:
    """Grouped data ``(s, a, s', count)`` with the table lookups precomputed."""

    def __init__(self, model, prior, counts):
        s, a, nxt = np.nonzero(counts)
        self.counts = counts[s, a, nxt].astype(float)
        grids, self.rows = model.table(prior)
        self.lo = grids[s, 0]
        self.hi = grids[s, -1]
        self.step = np.where(self.hi > self.lo, (self.hi - self.lo) / (grids.shape[1] - 1), 1.0)
        N = model.levels[s]
        excess = np.maximum(0.0, N - model.params.n_bar)
        # The growth mean is linear in the parameters.
        self.coef = np.column_stack([np.ones_like(N), -a * N, -a * excess**2])
        self.s, self.nxt = s, nxt
        self.last = grids.shape[1] - 1

    def log_likelihood(self, theta):
        mu = np.clip(self.coef @ theta, self.lo, self.hi)
        pos = (mu - self.lo) / self.step
        i = np.minimum(pos.astype(int), self.last - 1)
        w = pos - i
        p = (1 - w) * self.rows[self.s, i, self.nxt] + w * self.rows[self.s, i + 1, self.nxt]
        return self.counts @ np.log(np.maximum(p, 1e-12))


def sample_parameters(model, prior, data, m, seed, chain_length=None):
    """Posterior draws of ``(lambda_bar, beta1, beta2)`` and MH diagnostics.

    Uses random-walk Metropolis with step sizes adapted during burn-in;
    with no data, draws come straight from the prior.
    """
    rng = cell_rng(seed, 1)
    sd = np.array(prior.sd)
    if np.all(sd == 0):
        return np.tile(prior.mean.theta(), (m, 1)), {"acceptance": None}
    if data.n.sum() == 0:
        return prior.sample(rng, m), {"acceptance": None}
    obs = _Observations(model, prior, data.counts)
    chain_length = chain_length or 10 * m
    burn = chain_length // 2
    keep = chain_length - burn

    def log_post(theta):
        lp = prior.log_density(theta)
        return lp if lp == -np.inf else lp + obs.log_likelihood(theta)

    theta = prior.mean.theta().copy()
    current = log_post(theta)
    step = sd / np.sqrt(1.0 + data.n.sum() / 20.0)
    log_scale = np.log(2.38 / np.sqrt(3))
    chain = np.empty((keep, 3))
    window = accepted = 0
    for t in range(chain_length):
        proposal = theta + np.exp(log_scale) * step * rng.standard_normal(3)
        candidate = log_post(proposal)
        if np.log(rng.random()) < candidate - current:
            theta, current = proposal, candidate
            if t < burn:
                window += 1
            else:
                accepted += 1
        if t < burn and (t + 1) % 50 == 0:
            log_scale += (window / 50 - 0.3) * 2.0 / np.sqrt((t + 1) / 50)
            window = 0
        if t >= burn:
            chain[t - burn] = theta
    idx = np.linspace(0, keep - 1, m).round().astype(int)
    return chain[idx], {"acceptance": accepted / keep}


def species_posterior(model, prior, data, m, seed, chain_length=None):
    """Posterior over transition models induced by the parameter posterior.

    Each parameter draw is mapped through the tabulated dynamics to one row
    per state-action. With empty data this is the prior predictive.
    """
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    thetas, diagnostics = sample_parameters(model, prior, data, m, seed, chain_length)
    S = model.bins
    samples = np.empty((S, 2, m, S))
    direct = np.all(np.array(prior.sd) == 0)
    for s in range(S):
        for a in (NO_CONTROL, CONTROL):
            mu = model.growth_mean(thetas, s, a)
            if direct:
                samples[s, a] = model.successor_rows(s, mu[:1])[0]
            else:
                samples[s, a] = model.interpolate(prior, s, mu)
    diagnostics["theta"] = thetas
    return PosteriorSampleSet(samples, samples.mean(axis=2), diagnostics)
