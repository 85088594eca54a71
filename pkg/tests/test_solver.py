from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import lsq_linear
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_optimum, ls_rss
from sfsod.core import Dataset, SfsodProblem, make_solution
from sfsod.exceptions import Infeasible, InvalidProblem, NoUndecided
from sfsod.heuristics import EnsembleConfig, build_ensemble, ensemble_bounds
from sfsod.solver import (
    BnbNode,
    SolverConfig,
    branch,
    certify,
    node_relax_bound,
    propagate,
    relax,
    solve,
)


def instance(rng, n=None, p=None, intercept=None):
    n = int(rng.integers(6, 12)) if n is None else n
    p = int(rng.integers(2, 7)) if p is None else p
    intercept = bool(rng.integers(2)) if intercept is None else intercept
    X = rng.normal(size=(n, p))
    if intercept:
        X[:, 0] = 1.0
    y = rng.normal(size=n) + (rng.random(n) < 0.2) * 6.0
    k_p = int(rng.integers(1 if intercept else 0, min(3, p) + 1))
    k_n = int(rng.integers(0, min(2, n - k_p - 1) + 1))
    return SfsodProblem(Dataset(y, X, intercept=intercept), k_p, k_n)


def boxed(problem, seed=0):
    cs = build_ensemble(problem, EnsembleConfig(n_starts=5, n_keep=1, dfo_iter=50, seed=seed))
    mb, mp = ensemble_bounds(cs)
    return replace(problem, bigM_beta=mb, bigM_phi=mp)


def completions(problem, node):
    """Every (feature support, trimmed set) pair compatible with ``node``."""
    p, n = problem.p, problem.n
    bs, ps = node.beta_state, node.phi_state
    f_in = [j for j in range(p) if bs[j] == 1]
    f_und = [j for j in range(p) if bs[j] == -1]
    c_in = [i for i in range(n) if ps[i] == 1]
    c_und = [i for i in range(n) if ps[i] == -1]
    for a in range(len(f_und) + 1):
        for S in itertools.combinations(f_und, a):
            if len(f_in) + a > problem.k_p:
                continue
            for b in range(len(c_und) + 1):
                for T in itertools.combinations(c_und, b):
                    if len(c_in) + b > problem.k_n:
                        continue
                    yield tuple(sorted(f_in + list(S))), tuple(sorted(c_in + list(T)))


def best_completion(problem, node):
    """Exact optimum over the node's completions, boxes included."""
    y, X, n = problem.data.y, problem.data.X, problem.n
    best = math.inf
    for S, T in completions(problem, node):
        S, T = list(S), list(T)
        if problem.has_bigM:
            A = np.hstack([X[:, S], np.eye(n)[:, T]])
            ub = np.concatenate([problem.bigM_beta[S], problem.bigM_phi[T]])
            if A.shape[1] == 0:
                val = float(y @ y)
            else:
                r = y - A @ lsq_linear(A, y, bounds=(-ub, ub), method="bvls", tol=1e-14).x
                val = float(r @ r)
        else:
            keep = np.setdiff1d(np.arange(n), T)
            val = ls_rss(y[keep], X[np.ix_(keep, S)])
        best = min(best, val / n)
    return best


def random_node(problem, rng):
    node = BnbNode.root(problem)
    for arr in (node.beta_state, node.phi_state):
        for k in range(arr.size):
            if arr[k] == -1 and rng.random() < 0.4:
                arr[k] = rng.integers(2)
    return node


class TestSolve:
    def test_small_instance_matches_enumeration(self):
        rng = np.random.default_rng(0)
        X, y = rng.normal(size=(10, 4)), rng.normal(size=10)
        pb = SfsodProblem(Dataset(y, X), 2, 1)
        ref, cols, T = enumerate_optimum(y, X, 2, 1)
        for mode in ("sos", "bigm"):
            sol = solve(boxed(pb) if mode == "bigm" else pb, SolverConfig(gap_tol=0.0, bound_mode=mode))
            assert sol.objective == pytest.approx(ref, abs=1e-8)
            assert sol.status == "optimal" and sol.gap <= 1e-12
            if mode == "sos":
                assert tuple(sol.support_beta) == cols and tuple(sol.support_phi) == T

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20, 6))
        y = X @ [1.5, 0, 0, -2.0, 0, 0]
        y[[2, 7]] += 10.0
        sol = solve(SfsodProblem(Dataset(y, X), 2, 2), SolverConfig(gap_tol=0.0))
        assert sol.support_beta.tolist() == [0, 3]
        assert sol.support_phi.tolist() == [2, 7]
        assert sol.objective == pytest.approx(0.0, abs=1e-20)

    def test_intercept_needs_budget(self):
        pb = SfsodProblem(Dataset(np.arange(5.0), np.ones((5, 1)), intercept=True), 0, 1)
        with pytest.raises(Infeasible):
            solve(pb)

    def test_node_limit_status_and_gap(self):
        rng = np.random.default_rng(2)
        X, y = rng.normal(size=(40, 12)), rng.normal(size=40)
        sol = solve(SfsodProblem(Dataset(y, X), 4, 4), SolverConfig(gap_tol=0.0, node_limit=5))
        assert sol.status == "node_limit"
        assert 0 <= sol.lower_bound <= sol.objective
        assert sol.gap == pytest.approx((sol.objective - sol.lower_bound) / sol.objective)

    def test_warm_start_never_worse(self):
        rng = np.random.default_rng(3)
        X, y = rng.normal(size=(30, 8)), rng.normal(size=30)
        pb = SfsodProblem(Dataset(y, X), 3, 3)
        good = solve(pb, SolverConfig(gap_tol=0.0))
        again = solve(pb, SolverConfig(node_limit=1), warm_starts=[good])
        assert again.objective <= good.objective + 1e-15

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        X, y = rng.normal(size=(25, 8)), rng.normal(size=25)
        pb = boxed(SfsodProblem(Dataset(y, X), 3, 2))
        a = solve(pb, SolverConfig(node_limit=300))
        b = solve(pb, SolverConfig(node_limit=300))
        assert a.fingerprint() == b.fingerprint()

    def test_ridge_constraint_holds(self):
        rng = np.random.default_rng(5)
        X = np.column_stack([np.ones(15), rng.normal(size=(15, 4))])
        y = X @ [1, 3, -3, 0, 0] + rng.normal(size=15)
        pb = SfsodProblem(Dataset(y, X, intercept=True), 3, 1, lam=2.0)
        sol = solve(pb, SolverConfig(gap_tol=0.0, bound_mode="sos"))
        assert np.sum(sol.beta[1:] ** 2) <= 2.0 * (1 + 1e-9)
        assert certify(pb, sol).passed

    def test_config_validation(self):
        with pytest.raises(InvalidProblem):
            SolverConfig(bound_mode="cuts")
        with pytest.raises(InvalidProblem):
            SolverConfig(branching_rule="random")
        assert SolverConfig(bound_mode="bigM").bound_mode == "bigm"


class TestBounds:
    def test_leaf_bound_is_restricted_fit(self):
        rng = np.random.default_rng(6)
        pb = SfsodProblem(Dataset(rng.normal(size=8), rng.normal(size=(8, 3))), 2, 1)
        node = BnbNode(np.array([1, 0, 1], dtype=np.int8), np.array([0] * 7 + [1], dtype=np.int8))
        keep = np.arange(7)
        ref = ls_rss(pb.data.y[keep], pb.data.X[np.ix_(keep, [0, 2])]) / 8
        assert node_relax_bound(pb, node) == pytest.approx(ref, rel=1e-12)

    def test_root_bound_below_optimum(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            pb = instance(rng)
            opt = enumerate_optimum(pb.data.y, pb.data.X, pb.k_p, pb.k_n, pb.intercept)[0]
            for prob, mode in ((pb, "sos"), (boxed(pb), "bigm")):
                root = BnbNode.root(prob)
                assert node_relax_bound(prob, root, SolverConfig(bound_mode=mode)) <= opt + 1e-9

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["sos", "bigm"]))
    @settings(max_examples=150, deadline=None)
    def test_random_node_bound_is_valid(self, seed, mode):
        rng = np.random.default_rng(seed)
        pb = instance(rng, n=int(rng.integers(5, 9)), p=int(rng.integers(2, 5)))
        if mode == "bigm":
            pb = boxed(pb, seed % 1000)
            # shrink the boxes so that they bind
            pb = replace(pb, bigM_beta=pb.bigM_beta * rng.uniform(0.2, 1.0),
                         bigM_phi=pb.bigM_phi * rng.uniform(0.2, 1.0))
        node = random_node(pb, rng)
        best = best_completion(pb, node)
        bound = node_relax_bound(pb, node, SolverConfig(bound_mode=mode))
        assert bound <= best + 1e-9 * max(1.0, best)

    def test_children_bounds_never_decrease(self):
        rng = np.random.default_rng(8)
        pairs = 0
        while pairs < 10_000:
            pb = instance(rng)
            mode = "bigm" if pairs % 3 == 0 else "sos"
            prob = boxed(pb) if mode == "bigm" else pb
            cfg = SolverConfig(bound_mode=mode, qp_iter=20)
            node = BnbNode.root(prob)
            node.bound = node_relax_bound(prob, node, cfg)
            while not node.is_decided and math.isfinite(node.bound):
                rel = relax(prob, node, cfg)
                kids = branch(node, rel, rng.choice(["most-violated", "max-magnitude"]))
                for child in kids:
                    child.bound = node_relax_bound(prob, child, cfg)
                    assert child.bound >= node.bound
                    pairs += 1
                node = kids[int(rng.integers(2))]


class TestBranch:
    def test_single_undecided_feature(self):
        pb = SfsodProblem(Dataset(np.arange(4.0), np.ones((4, 2))), 1, 0)
        node = BnbNode(np.array([0, -1], dtype=np.int8), np.zeros(4, dtype=np.int8))
        zero, one = branch(node, relax(pb, node))
        assert zero.beta_state.tolist() == [0, 0] and one.beta_state.tolist() == [0, 1]
        assert zero.depth == one.depth == 1

    def test_no_undecided(self):
        pb = SfsodProblem(Dataset(np.arange(4.0), np.ones((4, 1))), 1, 0)
        node = BnbNode(np.array([1], dtype=np.int8), np.zeros(4, dtype=np.int8))
        with pytest.raises(NoUndecided):
            branch(node, relax(pb, node))

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["most-violated", "max-magnitude"]))
    @settings(max_examples=60, deadline=None)
    def test_children_partition_parent(self, seed, rule):
        rng = np.random.default_rng(seed)
        pb = instance(rng, n=int(rng.integers(4, 7)), p=int(rng.integers(2, 7)))
        node = random_node(pb, rng)
        if node.is_decided or not node.feasible(pb):
            return
        zero, one = branch(node, relax(pb, node), rule)
        parent = set(completions(pb, node))
        a, b = set(completions(pb, zero)), set(completions(pb, one))
        assert a | b == parent and not a & b

    def test_max_magnitude_rule(self):
        rng = np.random.default_rng(9)
        pb = SfsodProblem(Dataset(rng.normal(size=10), rng.normal(size=(10, 4))), 2, 0)
        node = BnbNode.root(pb)
        assert propagate(pb, node)  # k_n = 0 fixes every case
        rel = relax(pb, node)
        zero, _ = branch(node, rel, "max-magnitude")
        j = int(np.flatnonzero(zero.beta_state == 0)[0])
        assert j == int(np.argmax(np.abs(rel.beta)))

    def test_propagation(self):
        pb = SfsodProblem(Dataset(np.arange(6.0), np.ones((6, 3))), 2, 1)
        node = BnbNode(np.array([1, 1, -1], dtype=np.int8), np.array([-1, 1, -1, -1, -1, -1], dtype=np.int8))
        assert propagate(pb, node)
        assert node.beta_state.tolist() == [1, 1, 0]
        assert node.phi_state.tolist() == [0, 1, 0, 0, 0, 0]
        full = BnbNode(np.array([1, 1, 1], dtype=np.int8), np.full(6, -1, dtype=np.int8))
        assert not propagate(pb, full)


class TestCertify:
    def test_solver_output_passes_and_objective_matches(self):
        rng = np.random.default_rng(10)
        for k in range(100):
            pb = instance(rng)
            prob = boxed(pb, k) if k % 2 else pb
            sol = solve(prob, SolverConfig(gap_tol=0.0))
            rep = certify(prob, sol)
            assert rep.passed, rep.failures()
            assert abs(rep.objective - sol.objective) <= 1e-10 * max(1.0, sol.objective)

    def test_cardinality_violation(self):
        rng = np.random.default_rng(11)
        pb = SfsodProblem(Dataset(rng.normal(size=8), rng.normal(size=(8, 4))), 2, 1)
        sol = make_solution(pb, np.array([1.0, 1.0, 1.0, 0.0]), np.zeros(8))
        assert certify(pb, sol).failures() == ["card_beta"]

    def test_box_and_sos_violations(self):
        rng = np.random.default_rng(12)
        pb = SfsodProblem(Dataset(rng.normal(size=6), rng.normal(size=(6, 2))), 2, 1,
                          bigM_beta=np.ones(2), bigM_phi=np.ones(6))
        sol = make_solution(pb, np.array([3.0, 0.0]), np.zeros(6))
        assert "bigM_beta" in certify(pb, sol).failures()
        bad = replace(sol, z_phi=np.zeros(6, dtype=np.int8), phi=np.eye(6)[0])
        bad = replace(bad, objective=certify(pb, bad).objective)
        assert "sos_phi" in certify(pb, bad, bound_mode="sos").failures()

    def test_wrong_objective_flagged(self):
        rng = np.random.default_rng(13)
        pb = SfsodProblem(Dataset(rng.normal(size=6), rng.normal(size=(6, 2))), 1, 1)
        sol = make_solution(pb, np.array([0.5, 0.0]), np.zeros(6))
        assert certify(pb, replace(sol, objective=sol.objective * 1.01)).failures() == ["objective"]

    def test_dimension_mismatch(self):
        pb = SfsodProblem(Dataset(np.zeros(6), np.ones((6, 2))), 1, 1)
        other = SfsodProblem(Dataset(np.zeros(5), np.ones((5, 2))), 1, 1)
        sol = make_solution(other, np.zeros(2), np.zeros(5))
        assert certify(pb, sol).failures() == ["dimensions"]
