"""Data-driven choice of the feature budget ``k_p``, the trimming budget
``k_n`` and the ridge radius.

The protocol: fix the ridge radius, start ``k_n`` comfortably above the
expected contamination, choose ``k_p`` by trimmed cross-validation or by a
BIC elbow, then walk ``k_n`` downwards while monitoring the smallest
deletion residual among the trimmed cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .core import Dataset, SfsodProblem, deletion_residuals
from .estimator import FitConfig, fit
from .exceptions import FoldTooSmall, InvalidConfig, RankDeficient
from .heuristics import EnsembleConfig
from .solver import SolverConfig


def light_fit_config(seed: int = 0, threads: int = 1) -> FitConfig:
    """Fit settings sized for the many solves a tuning run performs.

    The search is capped by node count rather than wall time so that
    results do not depend on machine speed.
    """
    return FitConfig(
        solver=SolverConfig(node_limit=200, thread_count=threads, seed=seed),
        ensemble=EnsembleConfig(n_starts=60, n_keep=4, dfo_iter=300, seed=seed, threads=threads),
    )


@dataclass(frozen=True)
class TuningPlan:
    """Grids and settings for a tuning run.

    ``kp_grid`` defaults to ``1 .. 2 * expected_p0`` (capped at ``p``) and
    ``kn_start`` to 15% of the cases.  Budgets count the intercept.
    """

    lambda_grid: tuple = (math.inf,)
    kn_start: Optional[int] = None
    kp_grid: Optional[tuple] = None
    method: str = "trimmed_cv"
    folds: int = 10
    seed: int = 0
    alpha: float = 0.01
    expected_p0: int = 5
    fit_config: FitConfig = field(default_factory=light_fit_config)

    def __post_init__(self):
        if self.method not in ("trimmed_cv", "bic"):
            raise InvalidConfig("tuning.method", "must be 'trimmed_cv' or 'bic'")
        if not 1 <= len(self.lambda_grid) <= 3:
            raise InvalidConfig("tuning.lambda_grid", "between one and three values")
        if any(not lam >= 0 for lam in self.lambda_grid):
            raise InvalidConfig("tuning.lambda_grid", "values must be nonnegative")
        if self.folds < 2:
            raise InvalidConfig("tuning.folds", "at least two folds are needed")
        if not 0 < self.alpha < 1:
            raise InvalidConfig("tuning.alpha", "must lie in (0, 1)")
        if self.kp_grid is not None:
            grid = tuple(int(k) for k in self.kp_grid)
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
                raise InvalidConfig("tuning.kp_grid", "must be nonempty and increasing")
            object.__setattr__(self, "kp_grid", grid)
        if self.kn_start is not None and self.kn_start < 0:
            raise InvalidConfig("tuning.kn_start", "must be nonnegative")

    def grid_for(self, p: int) -> tuple:
        if self.kp_grid is not None:
            return tuple(k for k in self.kp_grid if k <= p)
        return tuple(range(1, min(2 * self.expected_p0, p) + 1))

    def kn_for(self, n: int) -> int:
        return self.kn_start if self.kn_start is not None else int(math.ceil(0.15 * n))


@dataclass(frozen=True)
class SelectionResult:
    selected: int
    scores: dict


def _trim_count(share_numerator: int, n: int, size: int) -> int:
    return int(math.ceil(share_numerator * size / n - 1e-12)) if share_numerator else 0


def trimmed_mean_sq(errors, n_trim: int) -> float:
    """Mean of the squared errors after dropping the ``n_trim`` largest."""
    sq = np.sort(np.asarray(errors, dtype=float) ** 2, kind="stable")
    kept = sq[: sq.size - n_trim] if n_trim else sq
    return float(np.mean(kept))


def fold_indices(n: int, folds: int, seed: int) -> list:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def trimmed_cv(problem: SfsodProblem, plan: TuningPlan) -> SelectionResult:
    """Choose ``k_p`` by cross-validation with trimmed training fits and
    trimmed test errors.

    The problem's ``k_n`` sets the trimming proportions: training fits
    trim ``ceil(2 k_n / n * n_train)`` cases and each test fold ignores its
    ``ceil(3 k_n / n * n_test)`` largest squared errors.

    Raises
    ------
    FoldTooSmall
        When a fold has fewer than two cases or a training fit would have
        no residual degrees of freedom.
    """
    data, n, k_n = problem.data, problem.n, problem.k_n
    parts = fold_indices(n, plan.folds, plan.seed)
    grid = plan.grid_for(problem.p)
    if min(len(f) for f in parts) < 2:
        raise FoldTooSmall(f"{plan.folds} folds leave fewer than two cases in a fold")
    scores = {}
    for k_p in grid:
        fold_scores = []
        for test in parts:
            train = np.setdiff1d(np.arange(n), test)
            tr_trim = _trim_count(2 * k_n, n, train.size)
            te_trim = _trim_count(3 * k_n, n, test.size)
            if train.size - tr_trim <= k_p or te_trim >= test.size:
                raise FoldTooSmall(f"fold of {test.size} cases is too small for k_p = {k_p}")
            res = fit(data.rows(train), k_p, tr_trim, problem.lam, plan.fit_config)
            err = data.y[test] - res.predict(data.X[test])
            fold_scores.append(trimmed_mean_sq(err, te_trim))
        scores[k_p] = float(np.mean(fold_scores))
    best = min(grid, key=lambda k: (scores[k], k))
    return SelectionResult(best, scores)


def bic_value(k_p: int, h: int, loss: float) -> float:
    return k_p * math.log(h) + h * math.log(loss)


def elbow(grid, values) -> int:
    """Model size with the largest drop from its predecessor; the first
    size when nothing decreases."""
    diffs = np.diff(np.asarray(values, dtype=float))
    if diffs.size == 0 or not (diffs < 0).any():
        return grid[0]
    return grid[int(np.argmin(diffs)) + 1]


@dataclass(frozen=True)
class BicPath(SelectionResult):
    losses: dict = field(default_factory=dict)
    h: int = 0


def bic_path(problem: SfsodProblem, plan: TuningPlan) -> BicPath:
    """Choose ``k_p`` by the elbow of the BIC path.

    Each model size is warm-started from the fit of the previous size.
    ``L`` is the mean squared residual over the ``h = n - k_n`` retained
    cases.
    """
    n, k_n = problem.n, problem.k_n
    h = n - k_n
    if h < 2:
        raise InvalidConfig("tuning.kn_start", "leaves fewer than two retained cases")
    grid = plan.grid_for(problem.p)
    losses, bics = {}, {}
    warm = ()
    for k_p in grid:
        res = fit(problem.data, k_p, k_n, problem.lam, plan.fit_config, warm_starts=warm)
        sol = res.solution
        r = res.problem.data.y - res.problem.data.X @ sol.beta
        kept = np.ones(n, dtype=bool)
        kept[sol.support_phi] = False
        loss = float(np.sum(r[kept] ** 2)) / h
        losses[k_p] = loss
        bics[k_p] = bic_value(k_p, h, max(loss, np.finfo(float).tiny))
        warm = (sol,)
    return BicPath(elbow(grid, [bics[k] for k in grid]), bics, losses, h)


@dataclass(frozen=True)
class KnTrace:
    selected: int
    statistic: dict
    threshold: dict


def deletion_threshold(n: int, k_p: int, k_n: int, alpha: float) -> float:
    """Cut-off for the smallest absolute deletion residual among trimmed
    cases: a two-sided Student-t quantile, Bonferroni-adjusted for the
    ``n - k_n + 1`` cases that compete for the last fitted position."""
    df = max(n - k_p - 1, 1)
    m = n - k_n + 1
    return float(stats.t.ppf(1 - alpha / (2 * m), df))


def refine_kn(problem: SfsodProblem, k_p: int, kn_start: int, plan: Optional[TuningPlan] = None) -> KnTrace:
    """Walk ``k_n`` down from ``kn_start`` and stop at the first budget whose
    trimmed cases all look like genuine outliers.

    At each budget the smallest absolute deletion residual among trimmed
    cases is compared with :func:`deletion_threshold`; the first budget
    where it is exceeded is returned, or 0 if that never happens.
    """
    plan = plan or TuningPlan()
    if kn_start < 1:
        return KnTrace(0, {}, {})
    data, n = problem.data, problem.n
    stat, thr = {}, {}
    warm = ()
    chosen = 0
    for k_n in range(kn_start, 0, -1):
        res = fit(data, k_p, k_n, problem.lam, plan.fit_config, warm_starts=warm)
        sol = res.solution
        warm = (sol,)
        cols = np.concatenate([[0] if problem.intercept else [], sol.support_beta]).astype(int)
        kept = np.setdiff1d(np.arange(n), sol.support_phi)
        y = res.problem.data.y
        try:
            if cols.size:
                t = deletion_residuals(Dataset(y, res.problem.data.X[:, cols]), kept)
            else:
                # empty model: residuals are y itself
                t = y / np.sqrt(np.mean(y[kept] ** 2))
            stat[k_n] = float(np.min(np.abs(t[sol.support_phi])))
        except (RankDeficient, FloatingPointError):
            stat[k_n] = 0.0
        thr[k_n] = deletion_threshold(n, k_p, k_n, plan.alpha)
        if stat[k_n] > thr[k_n]:
            chosen = k_n
            break
    return KnTrace(chosen, stat, thr)


@dataclass(frozen=True)
class TuningResult:
    k_p: int
    k_n: int
    lam: float
    kp_scores: dict
    kn_trace: KnTrace
    method: str
    per_lambda: dict = field(default_factory=dict)


def tune(dataset: Dataset, plan: Optional[TuningPlan] = None) -> TuningResult:
    """Run the whole protocol and return the selected budgets.

    With several ridge radii, the one with the best k_p-selection score
    wins (the smallest radius on ties).
    """
    plan = plan or TuningPlan()
    kn0 = plan.kn_for(dataset.n)
    best = None
    per_lambda = {}
    for lam in plan.lambda_grid:
        kp_max = max(plan.grid_for(dataset.p))
        kn0_eff = min(kn0, dataset.n - kp_max - 1)
        problem = SfsodProblem(dataset, min(kp_max, dataset.p), kn0_eff, lam)
        sel = trimmed_cv(problem, plan) if plan.method == "trimmed_cv" else bic_path(problem, plan)
        trace = refine_kn(problem, sel.selected, kn0_eff, plan)
        score = sel.scores[sel.selected]
        per_lambda[lam] = (sel.selected, trace.selected, score)
        if best is None or score < best[0]:
            best = (score, TuningResult(sel.selected, trace.selected, lam, sel.scores, trace, plan.method))
    return replace(best[1], per_lambda=per_lambda)
