"""Certified branch and bound for L0-constrained regression with mean shifts.

Every node fixes some feature indicators and some case indicators.  A
feature fixed to 0 is dropped from the design; a case fixed to 0 is
*kept* in the fit (its mean shift is pinned at zero); indicators fixed to 1
consume budget.  Undecided indicators are relaxed.

Node lower bounds start from the least-squares fit of the kept cases on all
features that are still allowed, which can only underestimate the loss of
any completion, and add the cheapest possible increase caused by the
features that must still be dropped and by the cases that must still be
kept.  In big-M mode a convex relaxation with the big-M boxes is solved
approximately and turned into a valid bound through its linearization.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .core import GAP_EPS, SfsodProblem, Solution, best_phi, fit_support, make_solution, relative_gap
from .exceptions import Infeasible, InvalidProblem, NoUndecided
from .heuristics import dfo_local_search, project_beta

UNDECIDED = -1
BRANCHING_RULES = ("max-magnitude", "most-violated")
BOUND_MODES = ("bigm", "sos")


@dataclass(frozen=True)
class SolverConfig:
    """Search controls.

    ``bound_mode="bigm"`` enforces the problem's big-M boxes and adds the
    box relaxation bound; it falls back to ``"sos"`` behaviour when the
    problem carries no big-M vectors.  ``thread_count`` is accepted for
    interface compatibility; the tree search itself runs on one thread.
    """

    gap_tol: float = 1e-6
    time_limit: float = math.inf
    node_limit: Optional[int] = None
    branching_rule: str = "most-violated"
    bound_mode: str = "bigm"
    thread_count: int = 1
    seed: int = 0
    qp_iter: int = 60
    heuristic_every: int = 1

    def __post_init__(self):
        if not self.gap_tol >= 0:
            raise InvalidProblem("gap_tol must be nonnegative")
        if not self.time_limit > 0:
            raise InvalidProblem("time_limit must be positive")
        if self.node_limit is not None and self.node_limit <= 0:
            raise InvalidProblem("node_limit must be positive")
        if self.branching_rule not in BRANCHING_RULES:
            raise InvalidProblem(f"branching_rule must be one of {BRANCHING_RULES}")
        if isinstance(self.bound_mode, str) and self.bound_mode.lower() in BOUND_MODES:
            object.__setattr__(self, "bound_mode", self.bound_mode.lower())
        if self.bound_mode not in BOUND_MODES:
            raise InvalidProblem(f"bound_mode must be one of {BOUND_MODES}")
        if self.thread_count < 1:
            raise InvalidProblem("thread_count must be positive")


@dataclass
class BnbNode:
    """Branching state: ``-1`` undecided, ``0`` fixed out, ``1`` fixed in.

    For cases, "in" means the case is trimmed (its mean shift is free).
    """

    beta_state: np.ndarray
    phi_state: np.ndarray
    bound: float = 0.0
    depth: int = 0

    @classmethod
    def root(cls, problem: SfsodProblem) -> "BnbNode":
        bs = np.full(problem.p, UNDECIDED, dtype=np.int8)
        if problem.intercept:
            bs[0] = 1
        return cls(bs, np.full(problem.n, UNDECIDED, dtype=np.int8))

    @property
    def fixed_in_beta(self) -> frozenset:
        return frozenset(np.flatnonzero(self.beta_state == 1).tolist())

    @property
    def fixed_out_beta(self) -> frozenset:
        return frozenset(np.flatnonzero(self.beta_state == 0).tolist())

    @property
    def fixed_in_phi(self) -> frozenset:
        return frozenset(np.flatnonzero(self.phi_state == 1).tolist())

    @property
    def fixed_out_phi(self) -> frozenset:
        return frozenset(np.flatnonzero(self.phi_state == 0).tolist())

    @property
    def is_decided(self) -> bool:
        return not (self.beta_state == UNDECIDED).any() and not (self.phi_state == UNDECIDED).any()

    def feasible(self, problem) -> bool:
        return (int((self.beta_state == 1).sum()) <= problem.k_p
                and int((self.phi_state == 1).sum()) <= problem.k_n)


@dataclass
class Relaxation:
    """Relaxed point of a node plus the per-index costs used for branching.

    ``drop_cost[j]`` lower-bounds the loss increase (in RSS units) when an
    undecided feature is fixed out; ``keep_cost[i]`` does the same when an
    undecided case is fixed in the fit.
    """

    bound: float
    beta: np.ndarray
    residuals: np.ndarray
    drop_cost: np.ndarray
    keep_cost: np.ndarray
    leaf: Optional[tuple] = None
    qp_gain: float = 0.0


def propagate(problem: SfsodProblem, node: BnbNode) -> bool:
    """Resolve undecided indicators forced by the budgets.

    When a budget is exhausted the remaining indicators are fixed to 0;
    when every remaining indicator fits in the budget they are fixed to 1,
    which loses nothing since extra active variables never raise the loss.
    Returns ``False`` if the node is infeasible.
    """
    for state, budget in ((node.beta_state, problem.k_p), (node.phi_state, problem.k_n)):
        n_in = int((state == 1).sum())
        und = state == UNDECIDED
        if n_in > budget:
            return False
        if n_in == budget:
            state[und] = 0
        elif n_in + int(und.sum()) <= budget:
            state[und] = 1
    return True


def _kth_smallest(values, k):
    return float(np.partition(values, k - 1)[k - 1])


def _sum_smallest(values, k):
    return float(np.sum(np.partition(values, k - 1)[:k])) if k < values.size else float(np.sum(values))


def _sum_largest(values, k):
    return _sum_smallest(-values, k) * -1.0


def _cheap_relaxation(problem: SfsodProblem, node: BnbNode) -> Relaxation:
    X, y, n, p = problem.data.X, problem.data.y, problem.n, problem.p
    bs, ps = node.beta_state, node.phi_state
    F = np.flatnonzero(bs != 0)
    K = np.flatnonzero(ps == 0)
    Uf = np.flatnonzero(bs == UNDECIDED)
    Uc = np.flatnonzero(ps == UNDECIDED)
    beta = np.zeros(p)
    drop = np.zeros(p)
    keep = np.zeros(n)
    Xk, yk = X[np.ix_(K, F)], y[K]
    chol = None
    if F.size and K.size >= F.size:
        G = Xk.T @ Xk
        try:
            Lc = sla.cholesky(G, lower=True, check_finite=False)
            d = np.abs(np.diag(Lc))
            if d.min() > 1e-7 * d.max():
                chol = Lc
        except np.linalg.LinAlgError:
            chol = None
    if chol is not None:
        coef = sla.cho_solve((chol, True), Xk.T @ yk, check_finite=False)
    elif F.size:
        coef = np.linalg.lstsq(Xk, yk, rcond=None)[0] if K.size else np.zeros(F.size)
    else:
        coef = np.zeros(0)
    beta[F] = coef
    e = y - X[:, F] @ coef if F.size else y.copy()
    rss = float(np.sum(e[K] ** 2))
    bound = rss

    if chol is not None:
        pos = {j: k for k, j in enumerate(F)}
        if Uf.size:
            Linv = sla.solve_triangular(chol, np.eye(F.size), lower=True, check_finite=False)
            gdiag = np.sum(Linv * Linv, axis=0)
            iu = np.array([pos[j] for j in Uf])
            drop[Uf] = coef[iu] ** 2 / gdiag[iu]
            d_f = F.size - problem.k_p
            if d_f > 0:
                cost = drop[Uf]
                sq = coef[iu] ** 2
                lam_u = np.linalg.norm(Linv[:, iu], 2) ** 2
                lam_u = min(lam_u, _sum_largest(gdiag[iu], d_f))
                bound = max(bound,
                            rss + _kth_smallest(cost, d_f),
                            rss + _sum_smallest(sq, d_f) / lam_u)
        if Uc.size:
            W = sla.solve_triangular(chol, X[np.ix_(Uc, F)].T, lower=True, check_finite=False)
            lev = np.sum(W * W, axis=0)
            eu = e[Uc]
            keep[Uc] = eu * eu / (1.0 + lev)
            d_c = (n - problem.k_n) - K.size
            if d_c > 0:
                lam_c = np.linalg.norm(W, 2) ** 2
                lam_c = min(lam_c, _sum_largest(lev, d_c))
                bound = max(bound,
                            rss + _kth_smallest(keep[Uc], d_c),
                            rss + _sum_smallest(eu * eu, d_c) / (1.0 + lam_c))
    elif F.size == 0 and Uc.size:
        keep[Uc] = e[Uc] ** 2
        d_c = (n - problem.k_n) - K.size
        if d_c > 0:
            bound = rss + _sum_smallest(keep[Uc], d_c)
    return Relaxation(bound / n, beta, e, drop, keep)


def _project_capped_l1(a, budget):
    """Euclidean projection onto ``{|x| <= 1, sum |x| <= budget}``."""
    c = np.clip(a, -1.0, 1.0)
    if budget >= a.size or np.sum(np.abs(c)) <= budget:
        return c
    if budget <= 0:
        return np.zeros_like(a)
    m = np.abs(a)
    ms = np.sort(m)
    csum = np.concatenate([[0.0], np.cumsum(ms)])
    taus = np.unique(np.concatenate([m, m - 1.0, [0.0]]))
    taus = taus[taus >= 0]
    # sum_i clip(m_i - tau, 0, 1) from prefix sums of the sorted magnitudes
    lo = np.searchsorted(ms, taus, side="right")
    hi = np.searchsorted(ms, taus + 1.0, side="left")
    vals = (ms.size - hi) + (csum[hi] - csum[lo]) - taus * (hi - lo)
    # vals is non-increasing in tau; locate the segment containing the budget
    k = int(np.searchsorted(-vals, -budget, side="left"))
    if k == 0:
        tau = taus[0]
    elif k >= taus.size:
        tau = taus[-1]
    else:
        t0, t1, v0, v1 = taus[k - 1], taus[k], vals[k - 1], vals[k]
        tau = t0 if v0 == v1 else t0 + (v0 - budget) * (t1 - t0) / (v0 - v1)
    return np.sign(a) * np.clip(m - tau, 0.0, 1.0)


def _bigm_relaxation_bound(problem: SfsodProblem, node: BnbNode, iters: int, start_beta=None) -> float:
    """Valid lower bound of the continuous big-M relaxation at ``node``.

    Variables are scaled by their boxes so each lies in ``[-1, 1]``;
    undecided ones share the remaining budget as an L1 constraint.  An
    accelerated projected-gradient solve gives a feasible point whose
    linearization (a Frank-Wolfe dual bound) is a certified lower bound.
    """
    X, y, n = problem.data.X, problem.data.y, problem.n
    bs, ps = node.beta_state, node.phi_state
    start = 1 if problem.intercept else 0
    feats = np.flatnonzero(bs[start:] != 0) + start
    cases = np.flatnonzero(ps != 0)
    f_und = bs[feats] == UNDECIDED
    c_und = ps[cases] == UNDECIDED
    f_budget = problem.k_p - int((bs == 1).sum())
    c_budget = problem.k_n - int((ps == 1).sum())

    A = np.zeros((n, feats.size + cases.size))
    A[:, : feats.size] = X[:, feats] * problem.bigM_beta[feats]
    A[cases, feats.size + np.arange(cases.size)] = problem.bigM_phi[cases]
    b = y.copy()
    if problem.intercept:
        A = A - A.mean(axis=0)
        b = b - b.mean()
    if A.shape[1] == 0:
        return float(b @ b) / n

    nf = feats.size
    und_f = np.flatnonzero(f_und)
    fix_f = np.flatnonzero(~f_und)
    und_c = nf + np.flatnonzero(c_und)
    fix_c = nf + np.flatnonzero(~c_und)

    def project(w):
        out = np.clip(w, -1.0, 1.0)
        if und_f.size:
            out[und_f] = _project_capped_l1(w[und_f], f_budget)
        if und_c.size:
            out[und_c] = _project_capped_l1(w[und_c], c_budget)
        return out

    def lin_min(g):
        total = -np.sum(np.abs(g[fix_f])) - np.sum(np.abs(g[fix_c]))
        for idx, budget in ((und_f, f_budget), (und_c, c_budget)):
            if idx.size and budget > 0:
                total -= _sum_largest(np.abs(g[idx]), min(budget, idx.size))
        return total

    # Lipschitz constant of the gradient of (1/n)||b - A w||^2
    v = np.ones(A.shape[1])
    for _ in range(30):
        v = A.T @ (A @ v)
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        v /= nv
    lip = 2.0 * float(np.linalg.norm(A @ v) ** 2) / n * 1.05 + 1e-300
    if nv == 0:
        return float(b @ b) / n

    w = np.zeros(A.shape[1])
    if start_beta is not None:
        w[:nf] = start_beta[feats] / problem.bigM_beta[feats]
        w = project(w)
    z, t = w.copy(), 1.0
    best = -math.inf
    for it in range(iters):
        r = b - A @ z
        g = -2.0 / n * (A.T @ r)
        w_new = project(z - g / lip)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = w_new + ((t - 1) / t_new) * (w_new - w)
        w, t = w_new, t_new
        if it % 10 == 9 or it == iters - 1:
            r = b - A @ w
            g = -2.0 / n * (A.T @ r)
            f = float(r @ r) / n
            best = max(best, f - float(g @ w) + lin_min(g))
    return max(best, 0.0)


def relax(problem: SfsodProblem, node: BnbNode, config: Optional[SolverConfig] = None,
          use_qp: bool = True) -> Relaxation:
    """Relaxation of ``node``: a lower bound plus the relaxed point.

    Fully decided nodes are solved exactly and carry the leaf solution.
    ``use_qp=False`` skips the big-M box relaxation even in big-M mode.
    """
    config = config or SolverConfig()
    if not node.feasible(problem):
        return Relaxation(math.inf, np.zeros(problem.p), problem.data.y.copy(),
                          np.zeros(problem.p), np.zeros(problem.n))
    boxed = config.bound_mode == "bigm" and problem.has_bigM
    if node.is_decided:
        S = np.flatnonzero(node.beta_state == 1)
        T = np.flatnonzero(node.phi_state == 1)
        beta, phi = fit_support(problem, S, T, use_bounds=boxed)
        r = problem.data.y - problem.data.X @ beta - phi
        val = float(np.sum(r * r)) / problem.n
        return Relaxation(val, beta, r + phi, np.zeros(problem.p), np.zeros(problem.n),
                          leaf=(beta, phi, S, T))
    rel = _cheap_relaxation(problem, node)
    if boxed and use_qp and config.qp_iter > 0:
        qp = _bigm_relaxation_bound(problem, node, config.qp_iter, rel.beta)
        rel.qp_gain = qp - rel.bound
        rel.bound = max(rel.bound, qp)
    return rel


def node_relax_bound(problem: SfsodProblem, node: BnbNode, config: Optional[SolverConfig] = None) -> float:
    """Lower bound on the objective of every feasible completion of ``node``.

    The node's own ``bound`` (inherited from its parent by :func:`branch`)
    is also valid, so the larger of the two is returned and bounds never
    decrease down the tree.
    """
    return max(node.bound, relax(problem, node, config).bound)


def _pick(node: BnbNode, relaxation: Relaxation, rule: str):
    uf = np.flatnonzero(node.beta_state == UNDECIDED)
    uc = np.flatnonzero(node.phi_state == UNDECIDED)
    if not uf.size and not uc.size:
        raise NoUndecided("every indicator of the node is decided")
    if rule == "max-magnitude":
        sf = np.abs(relaxation.beta[uf])
        sc = np.abs(relaxation.residuals[uc])
    elif rule == "most-violated":
        sf = relaxation.drop_cost[uf]
        sc = relaxation.keep_cost[uc]
    else:
        raise InvalidProblem(f"unknown branching rule {rule!r}")
    best_f = (float(sf.max()), int(uf[np.argmax(sf)])) if uf.size else (-1.0, -1)
    best_c = (float(sc.max()), int(uc[np.argmax(sc)])) if uc.size else (-1.0, -1)
    if uf.size and (not uc.size or best_f[0] >= best_c[0]):
        return "beta", best_f[1]
    return "phi", best_c[1]


def branch(node: BnbNode, relaxation_point: Relaxation, rule: str = "most-violated"):
    """Split ``node`` on one undecided indicator.

    Returns ``(child_zero, child_one)``: the chosen feature is dropped or
    made active, or the chosen case is kept in the fit or trimmed.
    """
    kind, idx = _pick(node, relaxation_point, rule)
    children = []
    for value in (0, 1):
        bs, ps = node.beta_state.copy(), node.phi_state.copy()
        (bs if kind == "beta" else ps)[idx] = value
        children.append(BnbNode(bs, ps, node.bound, node.depth + 1))
    return children[0], children[1]


@dataclass(frozen=True)
class CertificateReport:
    checks: dict
    objective: float
    reported_objective: float

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list:
        return [k for k, ok in self.checks.items() if not ok]


def certify(problem: SfsodProblem, solution: Solution, bound_mode: Optional[str] = None,
            tol: float = 1e-9) -> CertificateReport:
    """Re-check every constraint of the problem for ``solution`` and
    recompute its objective from scratch."""
    if bound_mode is None:
        bound_mode = "bigm" if problem.has_bigM else "sos"
    checks = {}
    beta = np.asarray(solution.beta, dtype=float)
    phi = np.asarray(solution.phi, dtype=float)
    zb = np.asarray(solution.z_beta)
    zp = np.asarray(solution.z_phi)
    dims = beta.shape == (problem.p,) and phi.shape == (problem.n,) \
        and zb.shape == (problem.p,) and zp.shape == (problem.n,)
    checks["dimensions"] = bool(dims)
    if not dims:
        return CertificateReport(checks, math.nan, float(solution.objective))
    mask = problem.penalized_mask()
    checks["binary"] = bool(np.isin(zb, (0, 1)).all() and np.isin(zp, (0, 1)).all())
    if bound_mode == "bigm" and problem.has_bigM:
        Mb = np.where(mask, problem.bigM_beta, np.inf)
        checks["bigM_beta"] = bool(np.all(np.abs(beta[mask]) <= Mb[mask] * zb[mask] * (1 + tol)))
        checks["bigM_phi"] = bool(np.all(np.abs(phi) <= problem.bigM_phi * zp * (1 + tol)))
    else:
        checks["sos_beta"] = bool(np.all(beta[mask][zb[mask] == 0] == 0))
        checks["sos_phi"] = bool(np.all(phi[zp == 0] == 0))
    if math.isfinite(problem.lam):
        sq = float(np.sum(beta[mask] ** 2))
        checks["ridge"] = sq <= problem.lam * (1 + tol) + 1e-12
    else:
        checks["ridge"] = True
    active = int(zb[mask].sum()) + (1 if problem.intercept else 0)
    checks["card_beta"] = active <= problem.k_p
    checks["card_phi"] = int(zp.sum()) <= problem.k_n
    r = problem.data.y - problem.data.X @ beta - phi
    obj = float(np.sum(r * r)) / problem.n
    checks["objective"] = abs(obj - solution.objective) <= 1e-10 * max(1.0, abs(obj))
    checks["gap"] = bool(solution.gap >= 0 and solution.lower_bound <= solution.objective * (1 + 1e-9) + 1e-12)
    return CertificateReport(checks, obj, float(solution.objective))


class _Search:
    def __init__(self, problem: SfsodProblem, config: SolverConfig):
        self.problem = problem
        self.config = config
        self.boxed = config.bound_mode == "bigm" and problem.has_bigM
        self.best = None  # (objective, beta, phi, S, T)
        self.nodes = 0
        self.qp_misses = 0

    # incumbent handling ---------------------------------------------------
    def offer(self, val, beta, phi, S, T):
        if self.best is None or val < self.best[0]:
            self.best = (val, beta, phi, tuple(int(j) for j in S), tuple(int(i) for i in T))

    def leaf_value(self, S, T):
        beta, phi = fit_support(self.problem, S, T, use_bounds=self.boxed)
        r = self.problem.data.y - self.problem.data.X @ beta - phi
        return float(np.sum(r * r)) / self.problem.n, beta, phi

    def improve(self, beta, S_fixed=(), T_fixed=(), T_banned=(), rounds=5):
        """Alternate exact refits and re-trimming from ``beta``."""
        pb = self.problem
        X, y = pb.data.X, pb.data.y
        S = sorted(set(np.flatnonzero(beta).tolist()) | set(S_fixed) | ({0} if pb.intercept else set()))
        T_fixed = list(T_fixed)
        banned = np.zeros(pb.n, dtype=bool)
        banned[list(T_banned)] = True
        prev = None
        for _ in range(rounds):
            e = y - X @ beta
            free = pb.k_n - len(T_fixed)
            score = np.abs(e).copy()
            score[banned] = -1.0
            score[T_fixed] = -1.0
            order = np.argsort(-score, kind="stable")
            T = sorted(T_fixed + [int(i) for i in order[:free] if score[i] >= 0])
            if T == prev:
                break
            prev = T
            val, beta, phi = self.leaf_value(S, T)
            self.offer(val, beta, phi, S, T)

    def warm_start(self, ws):
        pb = self.problem
        if isinstance(ws, Solution):
            beta = np.asarray(ws.beta, dtype=float)
        else:
            beta = np.asarray(ws, dtype=float)
        if beta.shape != (pb.p,):
            raise InvalidProblem("warm start has the wrong length")
        beta = project_beta(pb, beta, use_bounds=self.boxed)
        self.improve(beta, rounds=20)

    # tree search -----------------------------------------------------------
    def node_heuristic(self, node, rel):
        pb = self.problem
        bs = node.beta_state
        fin = np.flatnonzero(bs == 1).tolist()
        und = np.flatnonzero(bs == UNDECIDED)
        free = pb.k_p - len(fin)
        if und.size and free > 0:
            score = rel.drop_cost[und] if rel.drop_cost[und].any() else np.abs(rel.beta[und])
            pick = und[np.argsort(-score, kind="stable")[:free]].tolist()
        else:
            pick = []
        S = sorted(fin + pick)
        beta = np.zeros(pb.p)
        beta[S] = rel.beta[S]
        T_fixed = np.flatnonzero(node.phi_state == 1).tolist()
        T_banned = np.flatnonzero(node.phi_state == 0).tolist()
        if not S:
            return
        self.improve(beta, S_fixed=S, T_fixed=T_fixed, T_banned=T_banned, rounds=3)

    def run(self, start_time):
        pb, cfg = self.problem, self.config
        counter = itertools.count()
        heap = []
        root = BnbNode.root(pb)
        status = "optimal"

        def prune_level():
            inc = self.best[0]
            return inc - cfg.gap_tol * max(inc, GAP_EPS)

        def evaluate(node):
            if not propagate(pb, node):
                return None
            # the box relaxation is costly: once it keeps failing to prune a
            # node the cheap bound could not, try it only on every 16th node
            use_qp = self.qp_misses < 20 or self.nodes % 16 == 0
            rel = relax(pb, node, cfg, use_qp=use_qp)
            if use_qp and rel.leaf is None:
                level = prune_level()
                cheap = max(node.bound, rel.bound - rel.qp_gain)
                useful = cheap < level <= rel.bound
                self.qp_misses = 0 if useful else self.qp_misses + 1
            self.nodes += 1
            node.bound = max(node.bound, rel.bound)
            if rel.leaf is not None:
                beta, phi, S, T = rel.leaf
                self.offer(rel.bound, beta, phi, S, T)
                return None
            if cfg.heuristic_every and self.nodes % cfg.heuristic_every == 0:
                self.node_heuristic(node, rel)
            return rel

        rel = evaluate(root)
        if rel is not None and root.bound < prune_level():
            heapq.heappush(heap, (root.bound, -root.depth, next(counter), root, _pick(root, rel, cfg.branching_rule)))
        while heap:
            if heap[0][0] >= prune_level():
                break
            if cfg.node_limit is not None and self.nodes >= cfg.node_limit:
                status = "node_limit"
                break
            if time.perf_counter() - start_time >= cfg.time_limit:
                status = "time_limit"
                break
            _, _, _, node, (kind, idx) = heapq.heappop(heap)
            for value in (1, 0):
                bs, ps = node.beta_state.copy(), node.phi_state.copy()
                (bs if kind == "beta" else ps)[idx] = value
                child = BnbNode(bs, ps, node.bound, node.depth + 1)
                crel = evaluate(child)
                if crel is None or child.bound >= prune_level():
                    continue
                heapq.heappush(heap, (child.bound, -child.depth, next(counter), child,
                                      _pick(child, crel, cfg.branching_rule)))
        inc = self.best[0]
        lower = min(heap[0][0], inc) if heap else inc
        return lower, status


def solve(problem: SfsodProblem, config: Optional[SolverConfig] = None,
          warm_starts: Sequence = ()) -> Solution:
    """Solve the problem by branch and bound.

    ``warm_starts`` are feasible points (solutions or coefficient vectors);
    the result is never worse than the best of them.  When a time or node
    limit stops the search the incumbent is returned with its honest gap
    and ``status`` set to ``"time_limit"`` or ``"node_limit"``.

    Raises
    ------
    Infeasible
        If the intercept is forced in but ``k_p`` is 0.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    if problem.intercept and problem.k_p < 1:
        raise Infeasible("the intercept is always active but k_p = 0")
    search = _Search(problem, config)
    for ws in warm_starts:
        search.warm_start(ws)
    if search.best is None:
        fallback = dfo_local_search(problem, None, 500, use_bounds=search.boxed)
        search.warm_start(fallback)
    lower, status = search.run(t0)
    val, beta, phi, S, T = search.best
    gap = relative_gap(val, lower)
    return make_solution(problem, beta, phi, support_beta=[j for j in S if not (problem.intercept and j == 0)],
                         support_phi=T, lower_bound=min(lower, val), gap=gap,
                         nodes_explored=search.nodes, wall_time=time.perf_counter() - t0,
                         status=status)
