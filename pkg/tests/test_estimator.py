from __future__ import annotations

import numpy as np
import pytest

from sfsod.core import Dataset
from sfsod.estimator import FitConfig, fit
from sfsod.heuristics import EnsembleConfig
from sfsod.solver import SolverConfig


def contaminated(seed=0, n=30, p=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(loc=3.0, scale=[1, 5, 0.2, 2, 1], size=(n, p))
    y = 4.0 + 1.5 * X[:, 1] - 3.0 * X[:, 2] + 0.1 * rng.normal(size=n)
    y[[5, 17]] += 30.0
    return Dataset.from_arrays(y, X), y, X


def test_recovers_support_and_outliers_on_original_scale():
    data, y, X = contaminated()
    res = fit(data, 3, 2, config=FitConfig(solver=SolverConfig(gap_tol=0.0)))
    assert res.outliers.tolist() == [5, 17]
    assert res.selected.tolist() == [2, 3]  # columns of the design, intercept is 0
    keep = np.setdiff1d(np.arange(30), [5, 17])
    A = np.column_stack([np.ones(30), X[:, 1], X[:, 2]])
    ref = np.linalg.lstsq(A[keep], y[keep], rcond=None)[0]
    np.testing.assert_allclose(res.beta[[0, 2, 3]], ref, atol=1e-7)
    assert res.offset == 0.0
    np.testing.assert_allclose(res.predict(data.X)[keep], A[keep] @ ref, atol=1e-6)
    assert set(res.timings) == {"standardize", "ensemble", "solve", "total"}


def test_shifts_are_in_response_units():
    data, y, _ = contaminated(1)
    res = fit(data, 3, 2)
    fitted = res.predict(data.X)
    for i in (5, 17):
        assert res.phi[i] == pytest.approx(y[i] - fitted[i], abs=1e-6)


def test_sos_and_bigm_agree():
    data, _, _ = contaminated(2)
    a = fit(data, 3, 2, config=FitConfig(solver=SolverConfig(bound_mode="sos", gap_tol=0.0)))
    b = fit(data, 3, 2, config=FitConfig(solver=SolverConfig(bound_mode="bigm", gap_tol=0.0)))
    assert a.solution.objective == pytest.approx(b.solution.objective, rel=1e-9)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-7)
    assert not a.problem.has_bigM and b.problem.has_bigM


def test_unstandardized_fit_keeps_scale():
    data, _, _ = contaminated(3)
    cfg = FitConfig(standardize=False, ensemble=EnsembleConfig(n_starts=20, n_keep=2))
    res = fit(data, 3, 2, config=cfg)
    np.testing.assert_array_equal(res.beta, res.solution.beta)
    assert res.problem.data is data


def test_warm_start_is_accepted():
    data, _, _ = contaminated(4)
    first = fit(data, 3, 2)
    again = fit(data, 3, 2, warm_starts=(first.solution,))
    assert again.solution.objective <= first.solution.objective + 1e-12
