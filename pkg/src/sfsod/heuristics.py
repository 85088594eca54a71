"""Warm starts and data-driven big-M bounds.

Two local-search heuristics produce feasible points quickly:

* :func:`dfo_local_search` alternates a projected gradient step on the
  coefficients (hard thresholding to the feature budget) with the exact
  update of the mean shifts, then polishes the final support.
* :func:`concentration_steps` alternates a sparse fit on a retained subset
  of cases with re-selection of the cases with the smallest residuals.

An ensemble of such fits gives coordinate-wise magnitudes from which
:func:`ensemble_bounds` derives big-M boxes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import SfsodProblem, Solution, best_phi, fit_support, make_solution, mad
from .exceptions import EmptyEnsemble, InvalidProblem

DEFAULT_C = 2.0
DEFAULT_FLOOR_RATIO = 1e-3


def lipschitz_constant(X, rtol=1e-6, max_iter=10_000) -> float:
    """Largest eigenvalue of ``X'X / n`` by power iteration."""
    n, p = X.shape
    G = X.T @ X / n
    v = np.ones(p) / np.sqrt(p)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
        new = float(v @ G @ v)
        if abs(new - lam) <= rtol * abs(new):
            lam = new
            break
        lam = new
    # the Rayleigh quotient approaches from below; pad so 1/L stays a safe step
    return lam * (1 + 10 * rtol)


def project_beta(problem: SfsodProblem, v, use_bounds=True) -> np.ndarray:
    """Projection of ``v`` onto ``{k_p-sparse} ∩ box``, then radial scaling
    into the ridge ball.

    The first part is the exact Euclidean projection; with a finite ridge
    radius the result stays feasible but is not an exact projection.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    start = 1 if problem.intercept else 0
    if problem.intercept:
        out[0] = v[0]
    budget = problem.k_p - start
    if budget <= 0:
        return out
    tail = v[start:]
    if use_bounds and problem.bigM_beta is not None:
        M = problem.bigM_beta[start:]
        clipped = np.clip(tail, -M, M)
    else:
        clipped = tail
    gain = tail * tail - (tail - clipped) ** 2
    keep = np.argsort(-gain, kind="stable")[:budget]
    out[start + keep] = clipped[keep]
    if np.isfinite(problem.lam):
        sq = float(np.sum(out[start:] ** 2))
        if sq > problem.lam:
            out[start:] *= np.sqrt(problem.lam / sq) if problem.lam > 0 else 0.0
    return out


def _phi_bounds(problem, use_bounds):
    return problem.bigM_phi if use_bounds and problem.bigM_phi is not None else None


def _support(problem, beta):
    s = set(np.flatnonzero(beta).tolist())
    if problem.intercept:
        s.add(0)
    return sorted(s)


def polish(problem: SfsodProblem, beta, phi, f, use_bounds=True, max_rounds=100):
    """Refit on the current supports and re-trim until nothing improves."""
    X, y = problem.data.X, problem.data.y
    bounds = _phi_bounds(problem, use_bounds)
    for _ in range(max_rounds):
        T = np.flatnonzero(phi)
        b, _ = fit_support(problem, _support(problem, beta), T, use_bounds)
        ph, _ = best_phi(problem, y - X @ b, bounds)
        r = y - X @ b - ph
        fn = float(np.sum(r * r)) / problem.n
        if not fn < f * (1 - 1e-13) - 1e-300:
            break
        beta, phi, f = b, ph, fn
    return beta, phi, f


def dfo_local_search(problem: SfsodProblem, init_beta=None, max_iter=1000, *, tol=1e-10,
                     use_bounds=True, do_polish=True, L=None) -> Solution:
    """Projected-gradient local search on the trimmed squared loss.

    Each iteration takes a gradient step of size ``1/L`` on the
    coefficients, hard-thresholds to the feature budget and resets the mean
    shifts optimally.  The returned :class:`Solution` records the objective
    sequence in ``history``; it is non-increasing.
    """
    if max_iter < 1:
        raise InvalidProblem("max_iter must be at least 1")
    if problem.intercept and problem.k_p < 1:
        raise InvalidProblem("k_p must leave room for the intercept")
    X, y, n = problem.data.X, problem.data.y, problem.n
    if L is None:
        L = lipschitz_constant(X)
    bounds = _phi_bounds(problem, use_bounds)
    beta = np.zeros(problem.p) if init_beta is None else np.asarray(init_beta, dtype=float)
    beta = project_beta(problem, beta, use_bounds)
    phi, _ = best_phi(problem, y - X @ beta, bounds)
    r = y - X @ beta - phi
    f = float(np.sum(r * r)) / n
    history = [f]
    if L > 0:
        for _ in range(max_iter):
            grad = -(X.T @ r) / n
            cand = project_beta(problem, beta - grad / L, use_bounds)
            ph, _ = best_phi(problem, y - X @ cand, bounds)
            rc = y - X @ cand - ph
            fc = float(np.sum(rc * rc)) / n
            if fc > f:
                break
            done = f - fc <= tol * max(f, 1e-300)
            beta, phi, r, f = cand, ph, rc, fc
            history.append(f)
            if done:
                break
    if do_polish:
        beta, phi, fp = polish(problem, beta, phi, f, use_bounds)
        if fp < f:
            f = fp
            history.append(f)
    return make_solution(problem, beta, phi, support_phi=np.flatnonzero(phi),
                         status="heuristic", history=tuple(history))


def _restrict(problem: SfsodProblem, rows) -> SfsodProblem:
    bm = problem.bigM_beta
    return SfsodProblem(problem.data.rows(rows), problem.k_p, 0, problem.lam, bm, None)


def _retain(problem, beta, use_bounds):
    """Indices of the ``n - k_n`` retained cases for ``beta``."""
    X, y = problem.data.X, problem.data.y
    phi, trimmed = best_phi(problem, y - X @ beta, _phi_bounds(problem, use_bounds))
    keep = np.ones(problem.n, dtype=bool)
    keep[trimmed] = False
    return np.flatnonzero(keep), phi


def concentration_steps(problem: SfsodProblem, init_subset, max_iter=100, *, init_beta=None,
                        dfo_iter=200, use_bounds=True) -> Solution:
    """Alternate sparse fits on a retained subset with subset re-selection.

    ``init_subset`` holds ``n - k_n`` case indices.  Iteration stops at a
    fixed point of the subset or after ``max_iter`` rounds; the objective
    never increases.
    """
    H = np.unique(np.asarray(init_subset, dtype=int))
    h = problem.n - problem.k_n
    if H.size != h:
        raise InvalidProblem(f"initial subset must hold n - k_n = {h} distinct cases")
    X, y, n = problem.data.X, problem.data.y, problem.n
    beta = np.zeros(problem.p) if init_beta is None else np.asarray(init_beta, dtype=float)
    history = []
    best = None
    for _ in range(max(1, max_iter)):
        fit = dfo_local_search(_restrict(problem, H), beta, dfo_iter, use_bounds=use_bounds)
        H_new, phi = _retain(problem, fit.beta, use_bounds)
        r = y - X @ fit.beta - phi
        f = float(np.sum(r * r)) / n
        if best is not None and f > best[2]:
            break
        best = (fit.beta, phi, f)
        history.append(f)
        if np.array_equal(H_new, H):
            break
        H, beta = H_new, fit.beta
    beta, phi, f = best
    return make_solution(problem, beta, phi, support_phi=np.flatnonzero(phi),
                         status="heuristic", history=tuple(history))


def multistart_concentration(problem: SfsodProblem, n_starts=1000, n_keep=20, *, seed=0,
                             initial_steps=2, max_iter=100, dfo_iter=200, start_iter=20,
                             use_bounds=True) -> list:
    """Random elemental starts refined by concentration steps.

    Every start fits the feature budget on ``k_p + 1`` random cases, then
    runs ``initial_steps`` concentration steps; the ``n_keep`` best starts
    are iterated to convergence.  Returns solutions sorted by objective.
    """
    rng = np.random.default_rng(seed)
    n, h = problem.n, problem.n - problem.k_n
    size = min(max(problem.k_p + 1, 2), h)
    scored = []
    for s in range(n_starts):
        rows = np.sort(rng.choice(n, size=size, replace=False))
        sub = SfsodProblem(problem.data.rows(rows), min(problem.k_p, size - 1), 0, problem.lam,
                           problem.bigM_beta, None)
        b0 = dfo_local_search(sub, None, start_iter, use_bounds=use_bounds).beta
        H, _ = _retain(problem, b0, use_bounds)
        sol = concentration_steps(problem, H, initial_steps, init_beta=b0, dfo_iter=start_iter,
                                  use_bounds=use_bounds)
        scored.append((sol.objective, s, sol))
    scored.sort(key=lambda t: (t[0], t[1]))
    finals = []
    for _, s, sol in scored[:n_keep]:
        H, _ = _retain(problem, sol.beta, use_bounds)
        fin = concentration_steps(problem, H, max_iter, init_beta=sol.beta, dfo_iter=dfo_iter,
                                  use_bounds=use_bounds)
        finals.append((fin.objective, s, fin))
    finals.sort(key=lambda t: (t[0], t[1]))
    return [sol for _, _, sol in finals]


def ridge_start(problem: SfsodProblem, strength=0.1) -> np.ndarray:
    X, y = problem.data.X, problem.data.y
    G = X.T @ X
    alpha = strength * np.trace(G) / problem.p
    D = np.diag(problem.penalized_mask().astype(float)) * alpha
    return np.linalg.solve(G + D + 1e-12 * np.eye(problem.p), X.T @ y)


@dataclass(frozen=True)
class Candidate:
    beta: np.ndarray
    residuals: np.ndarray
    provenance: str
    solution: Optional[Solution] = field(default=None, compare=False)


@dataclass(frozen=True)
class CandidateSet:
    """Preliminary fits whose magnitudes define big-M bounds."""

    candidates: tuple
    response_mad: float = 1.0

    def __len__(self):
        return len(self.candidates)

    @classmethod
    def from_betas(cls, problem: SfsodProblem, betas, provenance=None) -> "CandidateSet":
        X, y = problem.data.X, problem.data.y
        cands = []
        for t, b in enumerate(betas):
            b = np.asarray(b, dtype=float)
            tag = provenance[t] if provenance is not None else f"candidate-{t}"
            cands.append(Candidate(b, y - X @ b, tag))
        return cls(tuple(cands), float(mad(y)))

    @property
    def solutions(self) -> list:
        return [c.solution for c in self.candidates if c.solution is not None]


@dataclass(frozen=True)
class EnsembleConfig:
    """Which heuristic fits enter the ensemble and how big they are."""

    n_starts: int = 1000
    n_keep: int = 20
    dfo_iter: int = 1000
    ridge: bool = True
    concentration: bool = True
    seed: int = 0
    threads: int = 1


def build_ensemble(problem: SfsodProblem, config: EnsembleConfig = EnsembleConfig(),
                   extra=()) -> CandidateSet:
    """Run the default ensemble: DFO from zero, DFO from a ridge start and
    the best multistart concentration fits.

    Members are independent and may run on ``config.threads`` workers; the
    result is ordered by member, so it does not depend on scheduling.
    ``extra`` solutions (e.g. previous fits) are appended as-is.
    """
    base = problem.without_bounds()
    jobs = [("dfo-zero", lambda: [dfo_local_search(base, None, config.dfo_iter)])]
    if config.ridge:
        jobs.append(("dfo-ridge",
                     lambda: [dfo_local_search(base, ridge_start(base), config.dfo_iter)]))
    if config.concentration and config.n_starts > 0:
        jobs.append(("cstep", lambda: multistart_concentration(
            base, config.n_starts, config.n_keep, seed=config.seed)))
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(lambda job: job[1](), jobs))
    else:
        results = [job[1]() for job in jobs]
    X, y = problem.data.X, problem.data.y
    cands = []
    for (tag, _), sols in zip(jobs, results):
        for k, sol in enumerate(sols):
            name = tag if len(sols) == 1 else f"{tag}-{k}"
            cands.append(Candidate(sol.beta, y - X @ sol.beta, name, sol))
    for k, sol in enumerate(extra):
        b = np.asarray(getattr(sol, "beta", sol), dtype=float)
        cands.append(Candidate(b, y - X @ b, f"extra-{k}", sol if isinstance(sol, Solution) else None))
    return CandidateSet(tuple(cands), float(mad(y)))


def ensemble_bounds(candidate_set: CandidateSet, c=DEFAULT_C, floor=None):
    """Coordinate-wise big-M bounds from an ensemble of preliminary fits.

    ``bigM_beta[j] = c * max_t |beta_t[j]|`` and
    ``bigM_phi[i] = c * max_t |e_t[i]|``; coordinates whose maximum is zero
    get ``floor`` (default ``1e-3`` times the response MAD).
    """
    if len(candidate_set) == 0:
        raise EmptyEnsemble("at least one candidate is required")
    if c < 1:
        raise InvalidProblem("the multiplicative constant c must be >= 1")
    if floor is None:
        floor = DEFAULT_FLOOR_RATIO * candidate_set.response_mad
    floor = max(float(floor), 1e-8)
    B = np.abs(np.vstack([cand.beta for cand in candidate_set.candidates]))
    E = np.abs(np.vstack([cand.residuals for cand in candidate_set.candidates]))
    mb = B.max(axis=0) * c
    mp = E.max(axis=0) * c
    mb[mb == 0] = floor
    mp[mp == 0] = floor
    return mb, mp
