"""
Datasets of observed transitions and posterior samples over transition rows.

Two samplers are provided: the conjugate Dirichlet posterior and a
random-walk Metropolis-Hastings sampler for a Gaussian prior on softmax
logits. Each state-action pair is sampled with its own generator derived
from ``(seed, s, a)``, so results do not depend on evaluation order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError
from .mdp import TransitionModel, check_simplex


def cell_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class TransitionDataset:
    """Observed ``(s, a, s')`` triples for an MDP with ``S`` states and ``A`` actions."""

    triples: np.ndarray
    num_states: int
    num_actions: int

    def __post_init__(self):
        t = np.asarray(self.triples, dtype=int).reshape(-1, 3)
        S, A = self.num_states, self.num_actions
        if t.size and (t.min() < 0 or t[:, 0].max() >= S or t[:, 1].max() >= A
                       or t[:, 2].max() >= S):
            raise InvalidInputError("transition indices out of range")
        t.setflags(write=False)
        object.__setattr__(self, "triples", t)
        counts = np.zeros((S, A, S), dtype=np.int64)
        np.add.at(counts, (t[:, 0], t[:, 1], t[:, 2]), 1)
        counts.setflags(write=False)
        object.__setattr__(self, "_counts", counts)

    @classmethod
    def empty(cls, num_states, num_actions):
        return cls(np.zeros((0, 3), dtype=int), num_states, num_actions)

    @property
    def counts(self):
        """Count table of shape ``(S, A, S)``."""
        return self._counts

    @property
    def n(self):
        """Number of transitions observed from each state-action."""
        return self._counts.sum(axis=2)

    def empirical_means(self, fallback=None):
        """Empirical transition rows; unvisited pairs get ``fallback`` (uniform)."""
        S = self.num_states
        n = self.n[..., None]
        if fallback is None:
            fallback = np.full(S, 1.0 / S)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(n > 0, self._counts / np.maximum(n, 1), fallback)
        return means


@dataclass(frozen=True)
class KnownCells:
    """State-actions whose transition rows are known exactly."""

    mask: np.ndarray
    model: TransitionModel

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.model.probs.shape[:2]:
            raise InvalidInputError("known-cell mask must have shape (S, A)")
        object.__setattr__(self, "mask", mask)


@dataclass
class PosteriorSampleSet:
    """``samples[s, a]`` holds ``m`` draws of the transition row from ``(s, a)``."""

    samples: np.ndarray
    mean: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        if self.samples.ndim != 4 or self.samples.shape[:2] != self.mean.shape[:2] \
                or self.samples.shape[3] != self.mean.shape[2]:
            raise InvalidInputError("samples must have shape (S, A, m, S) matching the mean")
        if self.samples.shape[2] < 1:
            raise InvalidInputError("at least one sample per state-action is required")

    @property
    def sample_count(self):
        return self.samples.shape[2]

    @property
    def shape(self):
        return self.mean.shape[:2]

    def cell(self, s, a):
        return self.samples[s, a]

    def mean_model(self):
        return TransitionModel(self.mean)


def apply_known(samples, mean, known):
    if known is not None:
        rows = known.model.probs[known.mask]
        samples[known.mask] = rows[:, None, :]
        mean[known.mask] = rows


@dataclass(frozen=True)
class DirichletPrior:
    """Concentration parameters of shape ``(S, A, S)``.

    Zero entries mark successors that are structurally impossible a priori;
    each row needs at least one positive entry.
    """

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 3 or np.any(alpha < 0) or np.any(alpha.sum(axis=2) <= 0):
            raise InvalidInputError("alpha must be (S, A, S), non-negative, positive per row")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def uniform(cls, num_states, num_actions, concentration=1.0):
        return cls(np.full((num_states, num_actions, num_states), concentration))


def dirichlet_posterior(prior, data, m, seed, known=None):
    """Conjugate posterior samples; the mean is the analytic posterior mean."""
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    if prior.alpha.shape != data.counts.shape:
        raise InvalidInputError("prior and dataset dimensions differ")
    post = prior.alpha + data.counts
    S, A, _ = post.shape
    samples = np.zeros((S, A, m, S))
    for s in range(S):
        for a in range(A):
            if known is not None and known.mask[s, a]:
                continue
            support = post[s, a] > 0
            g = cell_rng(seed, s, a).standard_gamma(post[s, a, support], size=(m, support.sum()))
            samples[s, a][:, support] = g / g.sum(axis=1, keepdims=True)
    mean = post / post.sum(axis=2, keepdims=True)
    apply_known(samples, mean, known)
    return PosteriorSampleSet(samples, mean)


def _mh_logits(prior_mean, prior_sd, counts, m, chain_length, rng, target=0.3):
    """Random-walk Metropolis over softmax logits for one state-action."""
    K = prior_mean.size
    n = counts.sum()
    precision = 1.0 / prior_sd**2

    def log_post(theta):
        return (-0.5 * np.sum(precision * (theta - prior_mean) ** 2)
                + counts @ theta - n * logsumexp(theta))

    base = 1.0 / np.sqrt(precision + n / K)
    log_scale = np.log(2.38 / np.sqrt(K))
    theta = prior_mean.copy()
    current = log_post(theta)
    burn = chain_length // 2
    keep = chain_length - burn
    chain = np.empty((keep, K))
    window = accepted = 0
    normals = rng.standard_normal((chain_length, K))
    uniforms = np.log(rng.random(chain_length))
    for t in range(chain_length):
        proposal = theta + np.exp(log_scale) * base * normals[t]
        candidate = log_post(proposal)
        if uniforms[t] < candidate - current:
            theta, current = proposal, candidate
            if t < burn:
                window += 1
            else:
                accepted += 1
        if t < burn and (t + 1) % 50 == 0:
            # Adaptation stops at the end of burn-in.
            log_scale += (window / 50 - target) * 2.0 / np.sqrt((t + 1) / 50)
            window = 0
        if t >= burn:
            chain[t - burn] = theta
    idx = np.linspace(0, keep - 1, m).round().astype(int)
    return chain[idx], accepted / keep


def gaussian_logit_posterior(prior_mean, prior_sd, data, m, chain_length, seed, known=None):
    """Posterior samples under independent Gaussian priors on softmax logits.

    ``prior_mean`` and ``prior_sd`` broadcast to ``(S, A, S)``; a logit of
    ``-inf`` removes that successor from the support. Samples come from a
    random-walk Metropolis chain per state-action whose step size adapts
    toward 0.3 acceptance during the burn-in half and is then frozen. Chains
    with a post-burn-in acceptance rate outside ``[0.05, 0.95]`` are listed
    under ``diagnostics["warnings"]``.
    """
    if m < 1 or chain_length < m:
        raise InvalidInputError("need m >= 1 and chain_length >= m")
    shape = data.counts.shape
    mu = np.broadcast_to(np.asarray(prior_mean, dtype=float), shape)
    sd = np.broadcast_to(np.asarray(prior_sd, dtype=float), shape)
    support = np.isfinite(mu)
    if np.any(sd[support] <= 0) or np.any(support.sum(axis=2) == 0):
        raise InvalidInputError("prior sd must be positive on a non-empty support")
    if np.any(data.counts[~support] > 0):
        raise InvalidInputError("observed a successor outside the prior support")
    S, A, _ = shape
    samples = np.zeros((S, A, m, S))
    rates = {}
    flagged = []
    for s in range(S):
        for a in range(A):
            if known is not None and known.mask[s, a]:
                continue
            sup = support[s, a]
            if sup.sum() == 1:
                samples[s, a][:, sup] = 1.0
                continue
            logits, rate = _mh_logits(mu[s, a, sup], sd[s, a, sup], data.counts[s, a, sup],
                                      m, chain_length, cell_rng(seed, s, a))
            probs = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
            samples[s, a][:, sup] = probs
            rates[(s, a)] = rate
            if not 0.05 <= rate <= 0.95:
                flagged.append((s, a, rate))
    mean = samples.mean(axis=2)
    apply_known(samples, mean, known)
    samples = check_simplex(samples, "posterior sample")
    diagnostics = {"acceptance": rates, "warnings": flagged}
    if flagged:
        warnings.warn(f"Metropolis acceptance outside [0.05, 0.95] for {len(flagged)} cells",
                      RuntimeWarning, stacklevel=2)
    return PosteriorSampleSet(samples, mean, diagnostics)
