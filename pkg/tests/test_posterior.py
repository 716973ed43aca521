import numpy as np
import pytest

from rsvf.errors import InvalidInputError
from rsvf.mdp import TransitionModel
from rsvf.posterior import (DirichletPrior, KnownCells, TransitionDataset, dirichlet_posterior,
                            gaussian_logit_posterior)


def dataset_from_counts(counts):
    """Dataset realizing ``counts[s, a, t]``; trailing source states may be omitted."""
    counts = np.asarray(counts)
    _, A, S = counts.shape
    idx = np.argwhere(counts > 0)
    triples = np.repeat(idx, counts[tuple(idx.T)], axis=0)
    return TransitionDataset(triples.reshape(-1, 3), S, A)


def test_dataset_counts_and_validation():
    data = TransitionDataset([(0, 0, 1), (0, 0, 1), (1, 0, 0)], 2, 1)
    np.testing.assert_array_equal(data.counts[:, 0], [[0, 2], [1, 0]])
    np.testing.assert_array_equal(data.n, [[2], [1]])
    with pytest.raises(InvalidInputError):
        TransitionDataset([(0, 0, 2)], 2, 1)
    empty = TransitionDataset.empty(3, 2)
    assert empty.n.sum() == 0
    np.testing.assert_allclose(empty.empirical_means(), np.full((3, 2, 3), 1 / 3))


def test_conjugate_update_mean():
    data = dataset_from_counts([[[2, 0, 0]]] + [[[0, 0, 0]]] * 2)
    post = dirichlet_posterior(DirichletPrior(np.ones((3, 1, 3))), data, 50, seed=1)
    np.testing.assert_allclose(post.mean[0, 0], [0.6, 0.2, 0.2], atol=1e-15)
    np.testing.assert_allclose(post.mean[1, 0], [1 / 3] * 3, atol=1e-15)


def test_monte_carlo_mean():
    data = dataset_from_counts([[[10, 10]]] + [[[0, 0]]])
    post = dirichlet_posterior(DirichletPrior(np.ones((2, 1, 2))), data, 10_000, seed=3)
    np.testing.assert_allclose(post.samples[0, 0].mean(axis=0), [0.5, 0.5], atol=0.02)


def test_samples_on_simplex_and_deterministic():
    data = dataset_from_counts(np.random.default_rng(0).integers(0, 5, size=(3, 2, 3)))
    prior = DirichletPrior.uniform(3, 2)
    a = dirichlet_posterior(prior, data, 200, seed=9)
    b = dirichlet_posterior(prior, data, 200, seed=9)
    assert np.array_equal(a.samples, b.samples)
    assert np.all(a.samples >= 0)
    np.testing.assert_allclose(a.samples.sum(axis=-1), 1.0, atol=1e-9)


def test_zero_concentration_excludes_successor():
    alpha = np.ones((2, 1, 2))
    alpha[0, 0, 1] = 0.0
    post = dirichlet_posterior(DirichletPrior(alpha), TransitionDataset.empty(2, 1), 20, 0)
    assert np.all(post.samples[0, 0, :, 1] == 0.0)
    with pytest.raises(InvalidInputError):
        DirichletPrior(np.zeros((1, 1, 2)))


def test_known_cells_are_pinned():
    truth = TransitionModel(np.array([[[0.3, 0.7]], [[0.0, 1.0]]]))
    known = KnownCells(np.array([[False], [True]]), truth)
    post = dirichlet_posterior(DirichletPrior.uniform(2, 1), TransitionDataset.empty(2, 1),
                               10, 0, known=known)
    assert np.all(post.samples[1, 0] == [0.0, 1.0])
    np.testing.assert_array_equal(post.mean[1, 0], [0.0, 1.0])


def test_dirichlet_coverage():
    # The conservative (1 - q) quantile of ||p - mean|| covers the truth often enough.
    rng = np.random.default_rng(5)
    q, m, hits, reps = 0.05, 400, 0, 500
    truth = rng.dirichlet(np.ones(4))
    for rep in range(reps):
        counts = rng.multinomial(20, truth)[None, None]
        post = dirichlet_posterior(DirichletPrior(np.ones((4, 1, 4))),
                                   dataset_from_counts(counts), m, seed=rep)
        d = np.abs(post.samples[0, 0] - post.mean[0, 0]).sum(axis=1)
        radius = np.sort(d)[int(np.ceil((1 - q) * m)) - 1]
        hits += np.abs(truth - post.mean[0, 0]).sum() <= radius
    assert hits / reps >= 1 - q - 0.02


def test_logit_prior_dominated_limit():
    mu = np.array([0.0, 1.0, -1.0])
    post = gaussian_logit_posterior(mu, 1e-6, TransitionDataset.empty(3, 1), 50, 200, seed=0)
    expected = np.exp(mu) / np.exp(mu).sum()
    np.testing.assert_allclose(post.samples[0, 0], np.tile(expected, (50, 1)), atol=1e-4)


def test_logit_flat_prior_large_n():
    counts = np.array([[[300, 500, 200]]])
    post = gaussian_logit_posterior(0.0, 100.0, dataset_from_counts(counts), 400, 8000, seed=2)
    freq = counts[0, 0] / counts.sum()
    se = np.sqrt(freq * (1 - freq) / counts.sum())
    assert np.all(np.abs(post.mean[0, 0] - freq) <= 3 * se)
    assert not post.diagnostics["warnings"]


def test_logit_deterministic_and_mean_is_sample_mean():
    data = dataset_from_counts([[[3, 1]], [[0, 2]]])
    a = gaussian_logit_posterior(0.0, 1.0, data, 100, 400, seed=4)
    b = gaussian_logit_posterior(0.0, 1.0, data, 100, 400, seed=4)
    assert np.array_equal(a.samples, b.samples)
    np.testing.assert_allclose(a.mean, a.samples.mean(axis=2), atol=1e-12)


def test_logit_acceptance_warning(monkeypatch):
    import rsvf.posterior as posterior

    original = posterior._mh_logits

    def stuck(*args, **kwargs):
        chain, _ = original(*args, **kwargs)
        return chain, 0.01

    monkeypatch.setattr(posterior, "_mh_logits", stuck)
    with pytest.warns(RuntimeWarning, match="acceptance"):
        post = gaussian_logit_posterior(0.0, 1.0, TransitionDataset.empty(2, 1), 10, 20, seed=0)
    assert [(s, a) for s, a, _ in post.diagnostics["warnings"]] == [(0, 0), (1, 0)]


def test_logit_validation():
    data = TransitionDataset.empty(2, 1)
    with pytest.raises(InvalidInputError):
        gaussian_logit_posterior(0.0, 1.0, data, 10, 5, seed=0)
    with pytest.raises(InvalidInputError):
        gaussian_logit_posterior(0.0, 0.0, data, 10, 20, seed=0)
