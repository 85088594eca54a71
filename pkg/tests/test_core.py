from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import loo_deletion_residual, naive_objective
from sfsod.core import (
    Dataset,
    SfsodProblem,
    deletion_residuals,
    fit_support,
    mad,
    objective,
    optimal_phi_given_beta,
    robust_oracle_fit,
    standardize_robust,
    trimmed_loss,
)
from sfsod.exceptions import DimensionMismatch, InvalidProblem, RankDeficient, ZeroMadColumn

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _problem(e, k_n):
    """A one-column problem whose residuals at beta = 0 are ``e``."""
    e = np.asarray(e, dtype=float)
    return SfsodProblem(Dataset(e, np.ones((e.size, 1))), 0, k_n)


class TestStandardize:
    def test_hand_example(self):
        d = Dataset.from_arrays(np.arange(5.0), np.array([1.0, 2, 3, 4, 100]))
        s = standardize_robust(d)
        np.testing.assert_array_equal(s.X[:, 1], [-2, -1, 0, 1, 97])
        np.testing.assert_array_equal(s.X[:, 0], 1.0)
        assert s.y.tolist() == [-2, -1, 0, 1, 2]

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        s = standardize_robust(Dataset.from_arrays(rng.normal(size=30), rng.normal(size=(30, 4))))
        again = standardize_robust(s)
        np.testing.assert_allclose(again.X, s.X, atol=1e-12)
        np.testing.assert_allclose(again.y, s.y, atol=1e-12)

    def test_constant_column(self):
        X = np.column_stack([np.arange(4.0), np.full(4, 5.0)])
        with pytest.raises(ZeroMadColumn) as err:
            standardize_robust(Dataset.from_arrays(np.zeros(4), X, names=("a", "b")))
        assert err.value.column == 2

    def test_back_transform_reproduces_predictions(self):
        rng = np.random.default_rng(1)
        X = rng.normal(3, 5, size=(25, 3))
        raw = Dataset.from_arrays(rng.normal(size=25), X)
        s = standardize_robust(raw)
        beta = rng.normal(size=4)
        offset, b = s.standardization.to_original(beta)
        np.testing.assert_allclose(offset + raw.X @ b, s.standardization.y_center + s.X @ beta, atol=1e-10)
        np.testing.assert_allclose(s.standardization.to_standardized(b), beta, atol=1e-12)

    def test_mad_is_raw(self):
        assert mad([1, 2, 3, 4, 100]) == 1.0


class TestDataset:
    def test_shape_errors(self):
        with pytest.raises(DimensionMismatch):
            Dataset(np.zeros(3), np.zeros((4, 2)))
        with pytest.raises(InvalidProblem):
            Dataset(np.zeros(3), np.zeros((3, 2)), intercept=True)

    def test_arrays_are_read_only(self):
        d = Dataset(np.zeros(3), np.ones((3, 1)))
        with pytest.raises(ValueError):
            d.y[0] = 1.0

    def test_budget_validation(self):
        d = Dataset(np.zeros(5), np.ones((5, 2)))
        with pytest.raises(InvalidProblem):
            SfsodProblem(d, 3, 0)
        with pytest.raises(InvalidProblem):
            SfsodProblem(d, 2, 3)
        with pytest.raises(InvalidProblem):
            SfsodProblem(d, 1, 1, lam=-1.0)


class TestObjective:
    def test_perfect_fit_is_zero(self):
        rng = np.random.default_rng(2)
        X, beta = rng.normal(size=(6, 3)), rng.normal(size=3)
        y = rng.normal(size=6)
        pb = SfsodProblem(Dataset(y, X), 2, 1)
        assert objective(pb, beta, y - X @ beta) == 0.0

    def test_zero_coefficients(self):
        y = np.array([1.0, -2.0, 3.0])
        pb = SfsodProblem(Dataset(y, np.eye(3)[:, :1]), 1, 1)
        assert objective(pb, np.zeros(1), np.zeros(3)) == pytest.approx(14 / 3)

    @given(st.integers(2, 9), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_matches_naive_loop(self, n, p, seed):
        rng = np.random.default_rng(seed)
        X, y = rng.normal(size=(n, p)), rng.normal(size=n)
        beta, phi = rng.normal(size=p), rng.normal(size=n)
        pb = SfsodProblem(Dataset(y, X), 0, 0)
        assert objective(pb, beta, phi) == pytest.approx(naive_objective(y, X, beta, phi), rel=1e-12)

    def test_length_check(self):
        pb = SfsodProblem(Dataset(np.zeros(4), np.ones((4, 2))), 1, 1)
        with pytest.raises(DimensionMismatch):
            objective(pb, np.zeros(3), np.zeros(4))


class TestTrimming:
    def test_hand_example(self):
        pb = _problem([3.0, -7.0, 1.0, 5.0], 2)
        phi = optimal_phi_given_beta(pb, np.zeros(1))
        assert phi.tolist() == [0, -7, 0, 5]
        assert trimmed_loss(pb, np.zeros(1)) == 2.5

    def test_no_trimming(self):
        pb = _problem([3.0, -7.0, 1.0, 5.0], 0)
        assert not optimal_phi_given_beta(pb, np.zeros(1)).any()
        assert trimmed_loss(pb, np.zeros(1)) == objective(pb, np.zeros(1), np.zeros(4))

    def test_ties_break_by_smallest_index(self):
        pb = _problem([2.0, -2.0, 2.0, 1.0], 1)
        assert np.flatnonzero(optimal_phi_given_beta(pb, np.zeros(1))).tolist() == [0]

    @given(arrays(float, st.integers(2, 8), elements=finite), st.data())
    @settings(max_examples=60, deadline=None)
    def test_phi_beats_every_sparse_alternative(self, e, data):
        k_n = data.draw(st.integers(0, e.size - 1))
        pb = _problem(e, k_n)
        best = objective(pb, np.zeros(1), optimal_phi_given_beta(pb, np.zeros(1)))
        for size in range(k_n + 1):
            for T in itertools.combinations(range(e.size), size):
                phi = np.zeros(e.size)
                phi[list(T)] = e[list(T)]  # the best phi on a fixed support
                assert best <= objective(pb, np.zeros(1), phi)

    @given(arrays(float, st.integers(2, 40), elements=finite), st.data())
    @settings(max_examples=100, deadline=None)
    def test_identity_is_exact(self, e, data):
        pb = _problem(e, data.draw(st.integers(0, e.size - 1)))
        beta = np.array([data.draw(finite)])
        assert objective(pb, beta, optimal_phi_given_beta(pb, beta)) == trimmed_loss(pb, beta)


class TestDeletionResiduals:
    def test_matches_literal_refit(self):
        rng = np.random.default_rng(3)
        X = np.ones((6, 1))
        y = rng.normal(size=6)
        t = deletion_residuals(Dataset(y, X), np.arange(6))
        for i in range(6):
            assert t[i] == pytest.approx(loo_deletion_residual(y, X, i), abs=1e-9)

    def test_matches_literal_refit_with_covariates(self):
        rng = np.random.default_rng(4)
        X = np.column_stack([np.ones(15), rng.normal(size=(15, 2))])
        y = rng.normal(size=15)
        t = deletion_residuals(Dataset(y, X, intercept=True), np.arange(15))
        ref = [loo_deletion_residual(y, X, i) for i in range(15)]
        np.testing.assert_allclose(t, ref, atol=1e-9)

    def test_duplicate_zero_residual(self):
        X = np.column_stack([np.ones(6), [0.0, 1, 2, 3, 4, 2]])
        y = 1 + 2 * X[:, 1]
        y[:5] += np.array([0.3, -0.2, 0.0, 0.1, -0.2])
        y[5] = y[2]
        X2 = np.vstack([X, X[2]])
        y2 = np.append(y, y[2])
        t = deletion_residuals(Dataset(y2, X2, intercept=True), np.arange(7))
        e = y2 - X2 @ np.linalg.lstsq(X2, y2, rcond=None)[0]
        assert np.all((t == 0) == (np.abs(e) < 1e-15))

    def test_outside_subset_uses_prediction_residual(self):
        rng = np.random.default_rng(5)
        X = np.column_stack([np.ones(12), rng.normal(size=12)])
        y = X @ [1.0, 1.0] + 0.1 * rng.normal(size=12)
        y[11] += 5
        t = deletion_residuals(Dataset(y, X, intercept=True), np.arange(11))
        # same number as a literal refit on the subset plus the case
        ref = loo_deletion_residual(y, X, 11)
        assert t[11] == pytest.approx(ref, rel=1e-9)

    def test_small_subset(self):
        with pytest.raises(RankDeficient):
            deletion_residuals(Dataset(np.zeros(5), np.ones((5, 2))), [0, 1, 2])


class TestOracleFit:
    def test_no_outliers_is_ols(self):
        rng = np.random.default_rng(6)
        X, y = rng.normal(size=(20, 4)), rng.normal(size=20)
        of = robust_oracle_fit(Dataset(y, X), [0, 2], [])
        np.testing.assert_allclose(of.theta, np.linalg.lstsq(X[:, [0, 2]], y, rcond=None)[0], atol=1e-12)

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(15, 5))
        beta = np.array([1.5, 0, -2, 0, 0])
        y = X @ beta
        y[[3, 8]] += [10.0, -10.0]
        of = robust_oracle_fit(Dataset(y, X), [0, 2], [3, 8])
        np.testing.assert_allclose(of.beta, beta, atol=1e-10)
        np.testing.assert_allclose(of.phi[[3, 8]], [10, -10], atol=1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_two_step_formula(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 21))
        X = rng.normal(size=(n, 3))
        y = rng.normal(size=n)
        M = np.sort(rng.choice(n, size=int(rng.integers(1, 4)), replace=False))
        of = robust_oracle_fit(Dataset(y, X), [0, 1, 2], M)
        keep = np.setdiff1d(np.arange(n), M)
        b_del = np.linalg.lstsq(X[keep], y[keep], rcond=None)[0]
        np.testing.assert_allclose(of.phi[M], y[M] - X[M] @ b_del, atol=1e-9)
        H = X @ np.linalg.solve(X.T @ X, X.T)
        e = y - H @ y
        two_step = np.linalg.solve(np.eye(M.size) - H[np.ix_(M, M)], e[M])
        np.testing.assert_allclose(of.phi[M], two_step, atol=1e-8)

    def test_too_many_active(self):
        with pytest.raises(RankDeficient):
            robust_oracle_fit(Dataset(np.zeros(4), np.ones((4, 1))), [0], [0, 1, 2])


class TestFitSupport:
    def test_unboxed_is_least_squares_on_kept_rows(self):
        rng = np.random.default_rng(8)
        X, y = rng.normal(size=(12, 4)), rng.normal(size=12)
        pb = SfsodProblem(Dataset(y, X), 2, 2)
        beta, phi = fit_support(pb, [1, 3], [0, 5])
        keep = np.setdiff1d(np.arange(12), [0, 5])
        np.testing.assert_allclose(beta[[1, 3]], np.linalg.lstsq(X[keep][:, [1, 3]], y[keep], rcond=None)[0])
        np.testing.assert_allclose(phi[[0, 5]], y[[0, 5]] - X[[0, 5]] @ beta)

    def test_boxes_are_respected(self):
        rng = np.random.default_rng(9)
        X, y = rng.normal(size=(12, 3)), 5 * rng.normal(size=12)
        pb = SfsodProblem(Dataset(y, X), 2, 1, bigM_beta=np.full(3, 0.1), bigM_phi=np.full(12, 0.5))
        beta, phi = fit_support(pb, [0, 1], [4])
        assert np.all(np.abs(beta) <= 0.1 + 1e-12) and np.all(np.abs(phi) <= 0.5 + 1e-12)

    def test_ridge_radius_is_respected(self):
        rng = np.random.default_rng(10)
        X = np.column_stack([np.ones(20), rng.normal(size=(20, 2))])
        y = X @ [0.0, 3.0, -3.0] + rng.normal(size=20)
        pb = SfsodProblem(Dataset(y, X, intercept=True), 3, 0, lam=1.0)
        beta, _ = fit_support(pb, [0, 1, 2], [])
        assert np.sum(beta[1:] ** 2) == pytest.approx(1.0, rel=1e-8)
