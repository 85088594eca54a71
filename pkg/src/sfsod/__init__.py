"""Sparse robust regression: joint feature selection and outlier detection
by mixed-integer optimization with certified optimality gaps."""

from .core import (
    Dataset,
    OracleFit,
    SfsodProblem,
    Solution,
    Standardization,
    deletion_residuals,
    objective,
    optimal_phi_given_beta,
    robust_oracle_fit,
    standardize_robust,
    trimmed_loss,
)
from .estimator import FitConfig, FitResult, fit
from .heuristics import CandidateSet, EnsembleConfig, build_ensemble, concentration_steps, dfo_local_search, ensemble_bounds
from .solver import BnbNode, SolverConfig, branch, certify, node_relax_bound, solve

__version__ = "0.1.0"

__all__ = [
    "BnbNode", "CandidateSet", "Dataset", "EnsembleConfig", "FitConfig", "FitResult", "OracleFit",
    "SfsodProblem", "Solution", "SolverConfig", "Standardization", "branch", "build_ensemble",
    "certify", "concentration_steps", "deletion_residuals", "dfo_local_search", "ensemble_bounds",
    "fit", "node_relax_bound", "objective", "optimal_phi_given_beta", "robust_oracle_fit", "solve",
    "standardize_robust", "trimmed_loss",
]
