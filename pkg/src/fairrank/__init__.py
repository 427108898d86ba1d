"""Fairness-constrained, distributionally robust learning-to-rank.

A minimax game between a doubly-stochastic ranker and a relevance
adversary, trained by alternating closed-form dual updates and ADMM
projections onto the Birkhoff polytope, with deterministic (assignment)
or stochastic (Birkhoff-von-Neumann) ranking extraction and an experiment
harness for exposure-fairness benchmarks.
"""

from .core import (AdversaryBelief, DoublyStochasticMatrix, ModelParams,
                   Permutation, PositionBias, RankingProblem, SolverSettings,
                   dcg, dp_violation, expected_utility, ndcg)
from .errors import (ConfigError, ConvergenceError, FairrankError,
                     InvalidInputError, SchemaError)
from .fairness import FairnessVector, build_fairness_vector, exposure
from .inference import (InferenceInput, InferenceResult, infer, infer_batch,
                        rank_deterministic, rank_stochastic, strip_relevance)
from .kernels import (BvnDecomposition, bvn_decompose, ds_project,
                      hungarian_max, sample_bvn, simplex_project)
from .trainer import (Hyperparams, TrainResult, cross_validate,
                      q_objective_grad, solve_p_star, theta_star, train)

__version__ = "0.1.0"
