"""
Experiment harness: simulated datasets from a known truth, the three
benchmark problems, per-replication records and summaries, and CSV/JSON I/O.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .mdp import TabularMDP, TransitionModel, evaluate_policy, return_of, solve_nominal
from .posterior import (DirichletPrior, KnownCells, TransitionDataset, dirichlet_posterior,
                        gaussian_logit_posterior)
from .robust import solve_robust
from .sets import ConfidenceBudget, build_bci, build_hoeffding, build_mean, build_rsvf
from .species import PopulationModelParams, PopulationPrior, SpeciesModel, _species_mdp
from .species import species_posterior

log = logging.getLogger(__name__)

METHODS = ("hoeffding", "bci", "rsvf", "mean")
PROBLEMS = ("single-state-dirichlet", "single-state-gaussian", "species-mdp")
RECORD_HEADER = ["method", "n_per_cell", "replication", "safe_estimate", "true_optimal",
                 "realized_return", "regret", "violation"]
SUMMARY_HEADER = ["method", "n_per_cell", "mean_regret", "stderr_regret", "violation_rate",
                  "replications"]
FAILED = "failed"


@dataclass
class ExperimentConfig:
    methods: list = field(default_factory=lambda: list(METHODS))
    delta: float = 0.05
    n_grid: list = field(default_factory=lambda: [5, 20, 50, 200])
    replications: int = 100
    posterior_samples: int = 1000
    seed: int = 0
    problem: str = "single-state-dirichlet"
    problem_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.methods = list(self.methods)
        self.n_grid = [int(n) for n in self.n_grid]
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InvalidInputError(f"methods must be a non-empty subset of {METHODS}")
        if not self.n_grid or min(self.n_grid) < 0:
            raise InvalidInputError("n_grid must be a non-empty list of counts")
        if self.replications < 1:
            raise InvalidInputError("replications must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError("delta must lie in (0, 1)")
        if self.posterior_samples < 1:
            raise InvalidInputError("posterior_samples must be positive")
        if self.problem not in PROBLEMS:
            raise InvalidInputError(f"problem must be one of {PROBLEMS}")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentRecord:
    method: str
    n_per_cell: int
    replication: int
    safe_estimate: float
    true_optimal: float
    realized_return: float
    regret: float
    violation: object

    @classmethod
    def make(cls, method, n, rep, safe, true_opt, realized):
        return cls(method, n, rep, safe, true_opt, realized, abs(true_opt - safe),
                   int(safe > realized))

    @property
    def failed(self):
        return self.violation == FAILED


def generate_dataset(truth, n_per_cell, seed):
    """``n_per_cell`` i.i.d. successors from every true transition row."""
    if n_per_cell < 0:
        raise InvalidInputError("n_per_cell must be non-negative")
    S, A, _ = truth.probs.shape
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    triples = []
    for s in range(S):
        for a in range(A):
            if n_per_cell == 0:
                continue
            nxt = rng.choice(S, size=n_per_cell, p=truth.probs[s, a])
            triples.append(np.column_stack([np.full(n_per_cell, s), np.full(n_per_cell, a), nxt]))
    if not triples:
        return TransitionDataset.empty(S, A)
    return TransitionDataset(np.vstack(triples), S, A)


# problems ---------------------------------------------------------------

@dataclass
class Problem:
    """A benchmark: MDP, truth generator, posterior fitter and known cells."""

    name: str
    mdp: TabularMDP
    draw_truth: Callable[[np.random.Generator], TransitionModel]
    fit_posterior: Callable
    known_mask: Optional[np.ndarray] = None
    label: str = ""

    def known(self, truth):
        return None if self.known_mask is None else KnownCells(self.known_mask, truth)


def _take(params, defaults, problem):
    unknown = set(params) - set(defaults)
    if unknown:
        raise InvalidInputError(f"unknown parameters for {problem}: {sorted(unknown)}")
    return {**defaults, **params}


SINGLE_STATE_DEFAULTS = {
    "terminals": 10, "discount": 0.9, "reward": 0.0, "value_low": 0.0, "value_high": 10.0,
    "resample_truth": True, "concentration": 1.0, "prior_logit_mean": 0.0,
    "prior_logit_sd": 1.0, "chain_length": None, "rsvf_max_iters": 20,
    "fresh_verification": False, "lp_solver": "simplex",
}


def single_state_problem(kind, params, seed):
    """One decision state whose single action leads to terminal states.

    Terminal ``t`` is absorbing with reward ``(1 - discount) * w_t`` so its
    value is exactly ``w_t``. The true successor distribution is drawn from
    the prior (per replication when ``resample_truth``).
    """
    p = _take(params, SINGLE_STATE_DEFAULTS, kind)
    T, gamma = int(p["terminals"]), float(p["discount"])
    S = T + 1
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    w = rng.uniform(p["value_low"], p["value_high"], size=T)
    rewards = np.concatenate([[p["reward"]], (1.0 - gamma) * w])[:, None]
    p0 = np.zeros(S)
    p0[0] = 1.0
    mdp = TabularMDP(rewards, gamma, p0)
    known = np.ones((S, 1), dtype=bool)
    known[0, 0] = False
    logit_mean = np.broadcast_to(np.asarray(p["prior_logit_mean"], dtype=float), (T,))

    def truth_from(row):
        P = np.zeros((S, 1, S))
        P[0, 0, 1:] = row
        P[np.arange(1, S), 0, np.arange(1, S)] = 1.0
        return TransitionModel(P)

    def draw_row(g):
        if kind == "single-state-dirichlet":
            return g.dirichlet(np.full(T, p["concentration"]))
        z = logit_mean + p["prior_logit_sd"] * g.standard_normal(T)
        e = np.exp(z - z.max())
        return e / e.sum()

    fixed = truth_from(draw_row(np.random.default_rng(np.random.SeedSequence([int(seed), 12]))))

    def draw_truth(g):
        return truth_from(draw_row(g)) if p["resample_truth"] else fixed

    if kind == "single-state-dirichlet":
        alpha = np.zeros((S, 1, S))
        alpha[0, 0, 1:] = p["concentration"]
        alpha[np.arange(1, S), 0, np.arange(1, S)] = 1.0
        prior = DirichletPrior(alpha)

        def fit(data, m, s, known):
            return dirichlet_posterior(prior, data, m, s, known)
        label = "Dirichlet prior, conjugate posterior"
    else:
        mean = np.full((S, 1, S), -np.inf)
        mean[0, 0, 1:] = logit_mean
        mean[np.arange(1, S), 0, np.arange(1, S)] = 0.0
        chain = p["chain_length"]

        def fit(data, m, s, known):
            return gaussian_logit_posterior(mean, p["prior_logit_sd"], data, m,
                                            chain or 20 * m, s, known)
        label = ("Gaussian prior on softmax logits with random-walk Metropolis "
                 "(stand-in for an unspecified Gaussian model)")
    return Problem(kind, mdp, draw_truth, fit, known, label), p


SPECIES_DEFAULTS = {
    "population": {}, "prior_sd": [0.05, 0.0005, 0.00001], "bins": 50, "c_n": 1.0,
    "c_a": 100.0, "discount": 0.9, "initial_fraction": 0.3, "draws": 100_000,
    "grid_points": 96, "chain_length": None, "rsvf_max_iters": 20,
    "fresh_verification": False, "lp_solver": "highs",
}


def species_problem(params, seed):
    p = _take(params, SPECIES_DEFAULTS, "species-mdp")
    pop = PopulationModelParams.from_dict(p["population"])
    model = SpeciesModel(pop, int(p["bins"]), int(p["draws"]), seed, int(p["grid_points"]))
    mdp = _species_mdp(model, (p["c_n"], p["c_a"]), p["discount"], p["initial_fraction"])
    truth = model.transition_model()
    prior = PopulationPrior(pop, tuple(p["prior_sd"]))

    def fit(data, m, s, known):
        return species_posterior(model, prior, data, m, s, p["chain_length"])
    label = "population model, Gaussian parameter prior, tabulated Monte Carlo dynamics"
    return Problem("species-mdp", mdp, lambda g: truth, fit, None, label), p


def make_problem(config):
    if config.problem == "species-mdp":
        return species_problem(config.problem_params, config.seed)
    return single_state_problem(config.problem, config.problem_params, config.seed)


# running ----------------------------------------------------------------

def _solve_method(method, problem, data, posterior, truth, budget, settings, verify):
    mdp = problem.mdp
    if method == "hoeffding":
        return solve_robust(build_hoeffding(mdp, data, budget, problem.known(truth))), None
    if method == "bci":
        return solve_robust(build_bci(mdp, posterior, budget)), None
    if method == "rsvf":
        return build_rsvf(mdp, posterior, budget, int(settings["rsvf_max_iters"]), verify,
                          settings["lp_solver"])
    return build_mean(mdp, posterior), None


def replication_seeds(seed, n, rep):
    ss = np.random.SeedSequence([int(seed), int(n), int(rep)])
    return [int(c.generate_state(1)[0]) for c in ss.spawn(4)]


def posterior_sample_count(config, mdp):
    """``config.posterior_samples`` raised to the BCI minimum when BCI or RSVF run."""
    m = config.posterior_samples
    if {"bci", "rsvf"} & set(config.methods):
        needed = ConfidenceBudget.for_mdp(config.delta, mdp).min_samples()
        if m < needed:
            log.warning("posterior_samples=%d is too few for delta=%g; using %d", m,
                        config.delta, needed)
            m = needed
    return m


def run_replication(problem, settings, config, n, rep, traces=None, solutions=None):
    """All methods on one simulated dataset; returns records keyed by method.

    ``traces`` collects ``(n, rep, RsvfTrace)``; ``solutions`` (a dict)
    collects each method's ``RobustSolution``.
    """
    truth_seed, data_seed, post_seed, verify_seed = replication_seeds(config.seed, n, rep)
    mdp = problem.mdp
    truth = problem.draw_truth(np.random.default_rng(truth_seed))
    known = problem.known(truth)
    _, v_star = solve_nominal(mdp, truth)
    true_opt = return_of(mdp, v_star)
    data = generate_dataset(truth, n, data_seed)
    budget = ConfidenceBudget.for_mdp(config.delta, mdp)
    m = posterior_sample_count(config, mdp)
    needs_posterior = any(meth != "hoeffding" for meth in config.methods)
    posterior = problem.fit_posterior(data, m, post_seed, known) if needs_posterior else None
    verify = None
    if settings.get("fresh_verification") and "rsvf" in config.methods:
        verify = problem.fit_posterior(data, m, verify_seed, known)
    records = {}
    for method in config.methods:
        try:
            sol, trace = _solve_method(method, problem, data, posterior, truth, budget,
                                       settings, verify)
        except Exception as exc:  # a failing builder must not stop the run
            log.warning("%s failed at n=%d rep=%d: %s", method, n, rep, exc)
            nan = float("nan")
            records[method] = ExperimentRecord(method, n, rep, nan, true_opt, nan, nan, FAILED)
            continue
        if solutions is not None:
            solutions[method] = sol
        realized = return_of(mdp, evaluate_policy(mdp, sol.policy, truth))
        records[method] = ExperimentRecord.make(method, n, rep, sol.safe_return, true_opt,
                                                realized)
        if trace is not None and traces is not None:
            traces.append((n, rep, trace))
    return records


def run_experiment(config, traces=None, progress=None, problem=None):
    """Every ``(n, replication, method)`` cell, ordered by method, n, replication.

    ``problem`` may be a prebuilt ``(Problem, settings)`` pair from ``make_problem``.
    """
    problem, settings = problem or make_problem(config)
    by_method = {m: [] for m in config.methods}
    for n in config.n_grid:
        for rep in range(config.replications):
            recs = run_replication(problem, settings, config, n, rep, traces)
            for method in config.methods:
                by_method[method].append(recs[method])
            if progress:
                progress(n, rep)
    return [r for m in config.methods for r in by_method[m]]


def experiment_metadata(config, traces, problem=None):
    """Config, problem label and RSVF termination/radius details for a run."""
    if problem is None:
        problem, _ = make_problem(config)
    rsvf = [{
        "n_per_cell": n, "replication": rep, "terminated_by": tr.terminated_by,
        "safe_returns": tr.safe_returns, "bci_safe_return": tr.bci_safe_return,
        "radius_first_cell": [float(it.radius.flat[0]) for it in tr.iterations],
    } for n, rep, tr in traces]
    return {"config": config.to_dict(), "problem_label": problem.label,
            "posterior_samples_used": posterior_sample_count(config, problem.mdp),
            "rsvf_traces": rsvf}


def summarize(records):
    """Mean regret, its standard error and the violation rate per (method, n)."""
    records = list(records)
    if not records:
        raise InvalidInputError("no records to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.n_per_cell), []).append(r)
    rows = []
    for (method, n), group in groups.items():
        ok = [r for r in group if not r.failed]
        regret = np.array([r.regret for r in ok], dtype=float)
        k = len(ok)
        mean = float(regret.mean()) if k else float("nan")
        stderr = float(regret.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0
        rate = float(np.mean([r.violation for r in ok])) if k else float("nan")
        rows.append({"method": method, "n_per_cell": n, "mean_regret": mean,
                     "stderr_regret": stderr, "violation_rate": rate, "replications": k})
    return rows


# I/O ------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for r in records:
        w.writerow([_fmt(getattr(r, name)) for name in RECORD_HEADER])
    return buf.getvalue()


def summary_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for row in rows:
        w.writerow([_fmt(row[name]) for name in SUMMARY_HEADER])
    return buf.getvalue()


def read_records(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise InvalidInputError(f"unexpected records header: {reader.fieldnames}")
        out = []
        for row in reader:
            violation = row["violation"]
            out.append(ExperimentRecord(
                row["method"], int(row["n_per_cell"]), int(row["replication"]),
                float(row["safe_estimate"]), float(row["true_optimal"]),
                float(row["realized_return"]), float(row["regret"]),
                violation if violation == FAILED else int(violation)))
        return out
