"""Robust MDPs with data-driven L1 ambiguity sets.

Builds Hoeffding, Bayesian credible (BCI) and RSVF ambiguity sets from
transition data and solves the resulting robust MDPs for policies with
safe (lower-bound) return estimates.
"""
from .errors import InfeasibleTargetError, InvalidInputError, NumericalFailureError
from .geometry import (HyperplaneTarget, L1AmbiguitySet, l1_distance, min_radius_center,
                       worst_case_l1)
from .mdp import (TabularMDP, TransitionModel, evaluate_policy, return_of, solve_nominal)
from .posterior import (DirichletPrior, KnownCells, PosteriorSampleSet, TransitionDataset,
                        dirichlet_posterior, gaussian_logit_posterior)
from .robust import AmbiguousMDP, RobustSolution, robust_bellman, robust_evaluate, solve_robust
from .sets import (ConfidenceBudget, RsvfTrace, build_bci, build_hoeffding, build_mean,
                   build_rsvf, hyperplane_level)
from .species import (PopulationModelParams, PopulationPrior, SpeciesModel, build_species_mdp,
                      species_posterior)

__version__ = "0.1.0"
