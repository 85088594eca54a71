"""End-to-end fit: robust standardization, heuristic ensemble, big-M
bounds, branch and bound, and back-transformation to the original scale."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, SfsodProblem, Solution, standardize_robust
from .heuristics import EnsembleConfig, build_ensemble, ensemble_bounds
from .solver import SolverConfig, solve


@dataclass(frozen=True)
class FitConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    c: float = 2.0
    standardize: bool = True


@dataclass(frozen=True)
class FitResult:
    """A solved problem together with its original-scale coefficients.

    ``solution`` and ``problem`` live on the standardized scale; ``beta`` is
    on the scale of the input data (slot 0 is the intercept when present)
    and predictions are ``offset + X @ beta``; ``offset`` is 0 for
    intercept models.
    The response is only centred, so ``phi`` is already in response units.
    """

    solution: Solution
    problem: SfsodProblem
    beta: np.ndarray
    offset: float
    timings: dict

    @property
    def phi(self) -> np.ndarray:
        return self.solution.phi

    @property
    def outliers(self) -> np.ndarray:
        return self.solution.support_phi

    @property
    def selected(self) -> np.ndarray:
        """Indices of active non-intercept features."""
        return self.solution.support_beta

    def predict(self, X) -> np.ndarray:
        return self.offset + np.asarray(X, dtype=float) @ self.beta


def fit(dataset: Dataset, k_p: int, k_n: int, lam: float = math.inf,
        config: Optional[FitConfig] = None, warm_starts: Sequence = ()) -> FitResult:
    """Fit the sparse robust regression with budgets ``(k_p, k_n)``.

    ``warm_starts`` are coefficient vectors (or solutions) on the
    standardized scale, e.g. the result of a neighbouring model size.
    """
    config = config or FitConfig()
    timings = {}
    t0 = time.perf_counter()
    fresh = config.standardize and not dataset.is_standardized
    data = standardize_robust(dataset) if fresh else dataset
    problem = SfsodProblem(data, k_p, k_n, lam)
    timings["standardize"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    boxed = config.solver.bound_mode == "bigm"
    ens = build_ensemble(problem, config.ensemble, extra=warm_starts)
    if boxed:
        mb, mp = ensemble_bounds(ens, c=config.c)
        problem = replace(problem, bigM_beta=mb, bigM_phi=mp)
    timings["ensemble"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    sol = solve(problem, config.solver, warm_starts=list(ens.solutions) + list(warm_starts))
    timings["solve"] = time.perf_counter() - t2

    if fresh:
        offset, beta = data.standardization.to_original(sol.beta)
    else:
        offset, beta = 0.0, np.array(sol.beta)
    timings["total"] = time.perf_counter() - t0
    return FitResult(sol, problem, beta, offset, timings)
