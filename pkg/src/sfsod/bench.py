"""Simulation scenarios, evaluation metrics and the experiment runner.

Data follow a contaminated Gaussian design: an intercept column plus
``p - 1`` Gaussian predictors, ``p0`` active coefficients (intercept
included) equal to ``beta_value``, Gaussian errors whose variance is set by
the signal-to-noise ratio, and the first ``n0`` training cases shifted in
their errors and in every active predictor.  Test data are clean.

Every random draw comes from a counter-based generator keyed by
``(seed, replication, stream)``, so replications can run in any order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, SfsodProblem, mad, robust_oracle_fit, standardize_robust
from .estimator import FitConfig, fit
from .exceptions import DegenerateScaleWarning, InvalidConfig
from .heuristics import EnsembleConfig, dfo_local_search, multistart_concentration
from .solver import SolverConfig

METHODS = ("mip", "dfo-heuristic", "concentration-heuristic", "oracle")
STREAM_TRAIN_X, STREAM_TRAIN_EPS, STREAM_TEST_X, STREAM_TEST_EPS = range(4)
SPE_THRESHOLD = 1.345


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``sigma_x`` is ``"identity"`` or ``"ar"`` (correlation ``rho ** |i-j|``
    between predictors).  ``replications`` is ``q``.
    """

    n: int = 100
    p: int = 50
    p0: int = 5
    beta_value: float = 2.0
    sigma_x: str = "identity"
    rho: float = 0.0
    snr: float = 5.0
    contamination_rate: float = 0.1
    shift_eps: float = -10.0
    shift_x: float = 10.0
    seed: int = 0
    replications: int = 20
    n_test: Optional[int] = None

    def __post_init__(self):
        def bad(name, msg):
            raise InvalidConfig(f"scenario.{name}", msg)

        if self.n < 2:
            bad("n", "must be at least 2")
        if self.p < 1:
            bad("p", "must be at least 1")
        if not 1 <= self.p0 <= self.p:
            bad("p0", f"must lie in [1, p = {self.p}]")
        if not 0 <= self.contamination_rate < 0.5:
            bad("contamination_rate", "must lie in [0, 0.5)")
        if not self.snr > 0:
            bad("snr", "must be positive")
        if self.sigma_x not in ("identity", "ar"):
            bad("sigma_x", "must be 'identity' or 'ar'")
        if not -1 < self.rho < 1:
            bad("rho", "must lie in (-1, 1)")
        if self.replications < 1:
            bad("replications", "must be at least 1")
        if self.n_test is not None and self.n_test < 1:
            bad("n_test", "must be positive")

    @property
    def n0(self) -> int:
        return int(round(self.contamination_rate * self.n))

    def covariance(self) -> np.ndarray:
        d = self.p - 1
        if self.sigma_x == "identity" or d == 0:
            return np.eye(d)
        idx = np.arange(d)
        return self.rho ** np.abs(idx[:, None] - idx[None, :])

    def beta(self) -> np.ndarray:
        b = np.zeros(self.p)
        b[: self.p0] = self.beta_value
        return b

    def noise_variance(self) -> float:
        """``var(X beta) / SNR`` with the variance taken from the covariance."""
        b = self.beta()[1:]
        signal = float(b @ self.covariance() @ b)
        return signal / self.snr if signal > 0 else 1.0 / self.snr


@dataclass(frozen=True)
class Truth:
    beta: np.ndarray
    outliers: np.ndarray
    sigma2: float
    n_train: int

    @property
    def support_beta(self) -> np.ndarray:
        return np.flatnonzero(self.beta[1:] != 0) + 1


def _stream(seed: int, replication: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(replication, stream))
    return np.random.Generator(np.random.Philox(ss))


def _design(config: ScenarioConfig, rng, rows):
    d = config.p - 1
    X = np.ones((rows, config.p))
    if d:
        Z = rng.standard_normal((rows, d))
        if config.sigma_x == "ar":
            Z = Z @ np.linalg.cholesky(config.covariance()).T
        X[:, 1:] = Z
    return X


def generate_scenario(config: ScenarioConfig, replication_index: int):
    """Training data, ground truth and clean test data for one replication.

    The response is generated from the uncontaminated predictors; the
    predictor shift is then applied to the observed design, so outlying
    cases are also leverage points.
    """
    n, n0 = config.n, config.n0
    beta = config.beta()
    sigma = math.sqrt(config.noise_variance())
    X = _design(config, _stream(config.seed, replication_index, STREAM_TRAIN_X), n)
    eps = sigma * _stream(config.seed, replication_index, STREAM_TRAIN_EPS).standard_normal(n)
    eps[:n0] += config.shift_eps
    y = X @ beta + eps
    X[:n0, 1: config.p0] += config.shift_x
    m = config.n_test or n
    Xt = _design(config, _stream(config.seed, replication_index, STREAM_TEST_X), m)
    yt = Xt @ beta + sigma * _stream(config.seed, replication_index, STREAM_TEST_EPS).standard_normal(m)
    train = Dataset(y, X, intercept=True)
    test = Dataset(yt, Xt, intercept=True)
    return train, Truth(beta, np.arange(n0), sigma ** 2, n), test


@dataclass(frozen=True)
class Estimate:
    """A fitted model on the original scale, as seen by the metrics."""

    beta: np.ndarray
    support_phi: np.ndarray
    wall_time: float = 0.0
    objective: float = math.nan
    gap: float = math.nan
    status: str = ""


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    median: float
    mad: float

    @classmethod
    def of(cls, values) -> "Summary":
        v = np.asarray(values, dtype=float)
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return cls(float(np.mean(v)), sd, float(np.median(v)), float(mad(v)))


@dataclass(frozen=True)
class MetricsReport:
    """Per-replication metrics and their summaries.

    ``bias2`` and ``variance`` are per coordinate (variance with divisor
    ``q``), so ``mse == bias2 + variance`` holds exactly up to rounding.
    """

    per_replication: dict
    summaries: dict
    bias2: np.ndarray
    variance: np.ndarray
    mse: np.ndarray

    @property
    def bias2_beta(self) -> float:
        return float(np.mean(self.bias2))

    @property
    def var_beta(self) -> float:
        return float(np.mean(self.variance))

    @property
    def mse_beta(self) -> float:
        return float(np.mean(self.mse))


def selection_rates(estimated, truth, size):
    """False positive and false negative rates of an estimated index set."""
    est = np.zeros(size, dtype=bool)
    est[np.asarray(estimated, dtype=int)] = True
    tru = np.zeros(size, dtype=bool)
    tru[np.asarray(truth, dtype=int)] = True
    neg, pos = int((~tru).sum()), int(tru.sum())
    fpr = float((est & ~tru).sum()) / neg if neg else 0.0
    fnr = float((~est & tru).sum()) / pos if pos else 0.0
    return fpr, fnr


def replication_metrics(est: Estimate, truth: Truth, test: Dataset) -> dict:
    r = test.y - test.X @ est.beta
    fpr_b, fnr_b = selection_rates(np.flatnonzero(est.beta != 0), np.flatnonzero(truth.beta != 0), truth.beta.size)
    fpr_p, fnr_p = selection_rates(est.support_phi, truth.outliers, truth.n_train)
    return {
        "rmspe": float(np.sqrt(np.mean(r * r))),
        "fpr_beta": fpr_b,
        "fnr_beta": fnr_b,
        "fpr_phi": fpr_p,
        "fnr_phi": fnr_p,
        "wall_time": float(est.wall_time),
    }


def compute_metrics(fits: Sequence[Estimate], truths: Sequence[Truth], test_sets: Sequence[Dataset]) -> MetricsReport:
    if not (len(fits) == len(truths) == len(test_sets)) or not fits:
        raise ValueError("need one fit, truth and test set per replication")
    rows = [replication_metrics(f, t, s) for f, t, s in zip(fits, truths, test_sets)]
    per = {k: [r[k] for r in rows] for k in rows[0]}
    B = np.vstack([f.beta for f in fits])
    true = truths[0].beta
    mean = B.mean(axis=0)
    bias2 = (mean - true) ** 2
    variance = np.mean((B - mean) ** 2, axis=0)
    mse = np.mean((B - true) ** 2, axis=0)
    summaries = {k: Summary.of(v) for k, v in per.items()}
    return MetricsReport(per, summaries, bias2, variance, mse)


@dataclass(frozen=True)
class SpeResult:
    spe: float
    retained: int
    dropped: np.ndarray
    s_train: float
    s_test: float


def scaled_prediction_error(train_fit, train: Dataset, test: Dataset) -> SpeResult:
    """Robustly scaled prediction error on a test set that may hold outliers.

    Test residuals are scaled by the training residual scale; cases whose
    scaled residual exceeds 1.345 times the MAD of the scaled residuals are
    dropped and the SPE is the mean absolute scaled residual over the rest.
    ``train_fit`` needs ``beta`` and ``phi`` on the scale of ``train``
    (e.g. an :class:`~sfsod.estimator.FitResult` or an :class:`Estimate`
    with ``phi``).  When the MAD is zero nothing is dropped; when the
    training fit is perfect a :class:`DegenerateScaleWarning` is issued and
    the unscaled mean absolute residual is returned.
    """
    beta = np.asarray(train_fit.beta, dtype=float)
    offset = float(getattr(train_fit, "offset", 0.0))
    phi = np.asarray(getattr(train_fit, "phi", np.zeros(train.n)), dtype=float)
    e_tr = train.y - offset - train.X @ beta - phi
    s_tr = float(np.sqrt(np.sum(e_tr * e_tr) / train.n))
    e_te = test.y - offset - test.X @ beta
    if s_tr == 0:
        warnings.warn("training residuals are all zero; SPE falls back to mean |e|",
                      DegenerateScaleWarning, stacklevel=2)
        r = e_te
    else:
        r = e_te / s_tr
    s_te = float(mad(r))
    drop = np.abs(r) > SPE_THRESHOLD * s_te if s_te > 0 else np.zeros(r.size, dtype=bool)
    kept = np.abs(r[~drop])
    return SpeResult(float(kept.mean()) if kept.size else math.nan, int(kept.size),
                     np.flatnonzero(drop), s_tr, s_te)


# ---------------------------------------------------------------------------
# experiment runner


@dataclass(frozen=True)
class RunnerConfig:
    """How each method is fitted during an experiment.

    ``mip`` and the heuristics use the true budgets ``k_p = p0`` and
    ``k_n = n0``.  Solves stop at ``node_limit`` nodes or ``time_limit``
    seconds; reports are byte-reproducible whenever the node limit or the
    gap tolerance ends the search first.
    """

    methods: tuple = ("mip", "oracle")
    time_limit: float = 60.0
    node_limit: Optional[int] = 2000
    gap_tol: float = 1e-6
    bound_mode: str = "bigm"
    n_starts: int = 200
    n_keep: int = 10
    threads: int = 1

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise InvalidConfig("runner.methods", f"unknown method {m!r}; choose from {METHODS}")
        if not self.methods:
            raise InvalidConfig("runner.methods", "at least one method is required")

    def fit_config(self, seed: int) -> FitConfig:
        return FitConfig(
            solver=SolverConfig(gap_tol=self.gap_tol, time_limit=self.time_limit,
                                node_limit=self.node_limit, bound_mode=self.bound_mode,
                                thread_count=self.threads, seed=seed),
            ensemble=EnsembleConfig(n_starts=self.n_starts, n_keep=self.n_keep, seed=seed,
                                    threads=self.threads),
        )


def fit_method(method: str, train: Dataset, truth: Truth, scenario: ScenarioConfig,
               runner: RunnerConfig, replication: int) -> Estimate:
    """Fit one method on one replication and return it on the original scale."""
    t0 = time.perf_counter()
    k_p, k_n = scenario.p0, scenario.n0
    seed = int(np.random.SeedSequence(scenario.seed, spawn_key=(replication, 99)).generate_state(1)[0])
    if method == "oracle":
        of = robust_oracle_fit(train, [0] + truth.support_beta.tolist(), truth.outliers)
        return Estimate(of.beta, np.asarray(truth.outliers), time.perf_counter() - t0)
    if method == "mip":
        res = fit(train, k_p, k_n, config=runner.fit_config(seed))
        s = res.solution
        return Estimate(res.beta, s.support_phi, time.perf_counter() - t0, s.objective, s.gap, s.status)
    std = standardize_robust(train)
    prob = SfsodProblem(std, k_p, k_n)
    if method == "dfo-heuristic":
        s = dfo_local_search(prob, None, 1000)
    else:
        s = multistart_concentration(prob, runner.n_starts, runner.n_keep, seed=seed)[0]
    _, beta = std.standardization.to_original(s.beta)
    return Estimate(beta, s.support_phi, time.perf_counter() - t0, s.objective, math.nan, s.status)


SCENARIO_FIELDS = ("n", "p", "p0", "beta_value", "sigma_x", "rho", "snr", "contamination_rate",
                   "shift_eps", "shift_x", "seed")
METRIC_FIELDS = ("rmspe", "fpr_beta", "fnr_beta", "fpr_phi", "fnr_phi", "objective", "gap", "status", "error")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".6g")


def _key(scenario: ScenarioConfig, method: str, rep: int) -> tuple:
    return tuple(_fmt(getattr(scenario, f)) for f in SCENARIO_FIELDS) + (method, str(rep))


def _read_rows(path):
    if not os.path.exists(path):
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for r in rows:
        k = tuple(r[f] for f in SCENARIO_FIELDS) + (r["method"], r["replication"])
        out[k] = r
    return out


@dataclass
class ExperimentReport:
    rows: list
    cells: list
    failures: int
    paths: dict = field(default_factory=dict)


def run_experiment(scenarios: Sequence[ScenarioConfig], methods: Optional[Sequence[str]] = None,
                   runner: Optional[RunnerConfig] = None, out_dir=None, resume: bool = True,
                   config_echo: Optional[dict] = None) -> ExperimentReport:
    """Run every method on every replication of every scenario.

    Writes ``results.csv`` (one row per replication and method),
    ``estimates.csv`` (fitted coefficients at full precision, used for
    bias/variance and for resuming), ``report.json`` (rows, per-cell
    summaries and the configuration) and ``timings.json``.  Wall times live
    only in the last file so the other three are reproducible.  Failures
    are recorded in the ``error`` column and do not stop other cells.
    """
    runner = runner or RunnerConfig()
    if methods is not None:
        runner = replace(runner, methods=tuple(methods))
    done = {}
    done_est = {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if resume:
            done = _read_rows(os.path.join(out_dir, "results.csv"))
            done_est = _read_estimates(os.path.join(out_dir, "estimates.csv"))
    rows, est_rows, timings, cells = [], [], [], []
    failures = 0
    for sc in scenarios:
        for method in runner.methods:
            fits, truths, tests = [], [], []
            for rep in range(sc.replications):
                key = _key(sc, method, rep)
                train, truth, test = generate_scenario(sc, rep)
                if key in done and done[key]["error"] == "" and key in done_est:
                    row = dict(done[key])
                    beta = done_est[key]
                    est = Estimate(beta, np.array([], dtype=int))
                    wall = math.nan
                else:
                    row = {f: _fmt(getattr(sc, f)) for f in SCENARIO_FIELDS}
                    row.update(method=method, replication=str(rep))
                    try:
                        est = fit_method(method, train, truth, sc, runner, rep)
                        m = replication_metrics(est, truth, test)
                        for f in ("rmspe", "fpr_beta", "fnr_beta", "fpr_phi", "fnr_phi"):
                            row[f] = _fmt(m[f])
                        row.update(objective=_fmt(est.objective), gap=_fmt(est.gap), status=est.status, error="")
                        beta = est.beta
                        wall = est.wall_time
                    except Exception as exc:  # recorded per cell, the run continues
                        failures += 1
                        for f in METRIC_FIELDS:
                            row[f] = ""
                        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
                        beta, wall = None, math.nan
                rows.append(row)
                timings.append({"key": list(key), "wall_time": wall})
                if beta is not None:
                    est_rows.append((key, beta))
                    fits.append(beta)
                    truths.append(truth)
                    tests.append(test)
            cells.append(_cell_summary(sc, method, rows[-sc.replications:], fits, truths))
    report = ExperimentReport(rows, cells, failures)
    if out_dir is not None:
        report.paths = _write_reports(out_dir, rows, est_rows, cells, timings, scenarios, runner, config_echo)
    return report


def _cell_summary(sc, method, rows, fits, truths):
    cell = {"scenario": {f: getattr(sc, f) for f in SCENARIO_FIELDS}, "method": method,
            "replications": len(rows), "failures": sum(1 for r in rows if r["error"])}
    ok = [r for r in rows if not r["error"]]
    metrics = {}
    for f in ("rmspe", "fpr_beta", "fnr_beta", "fpr_phi", "fnr_phi"):
        vals = [float(r[f]) for r in ok]
        if vals:
            s = Summary.of(vals)
            metrics[f] = {k: float(_fmt(v)) for k, v in asdict(s).items()}
    if fits:
        B = np.vstack(fits)
        true = truths[0].beta
        mean = B.mean(axis=0)
        metrics["bias2_beta"] = float(_fmt(np.mean((mean - true) ** 2)))
        metrics["var_beta"] = float(_fmt(np.mean(np.mean((B - mean) ** 2, axis=0))))
        metrics["mse_beta"] = float(_fmt(np.mean((B - true) ** 2)))
    cell["metrics"] = metrics
    return cell


def _read_estimates(path):
    if not os.path.exists(path):
        return {}
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {}
        k = len(SCENARIO_FIELDS) + 2
        for r in reader:
            out[tuple(r[:k])] = np.array([float(v) for v in r[k:]])
    return out


def _write_reports(out_dir, rows, est_rows, cells, timings, scenarios, runner, echo):
    header = list(SCENARIO_FIELDS) + ["method", "replication"] + list(METRIC_FIELDS)
    paths = {}
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({h: r.get(h, "") for h in header})
    paths["results"] = _write(out_dir, "results.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    p = max((b.size for _, b in est_rows), default=0)
    w.writerow(list(SCENARIO_FIELDS) + ["method", "replication"] + [f"beta_{j}" for j in range(p)])
    for key, b in est_rows:
        w.writerow(list(key) + [format(float(v), ".17g") for v in b])
    paths["estimates"] = _write(out_dir, "estimates.csv", buf.getvalue())

    doc = {
        "config": echo if echo is not None else {
            "scenarios": [asdict(s) for s in scenarios],
            "runner": asdict(runner),
        },
        "rows": rows,
        "cells": cells,
    }
    paths["report"] = _write(out_dir, "report.json", json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n")
    paths["timings"] = _write(out_dir, "timings.json", json.dumps(jsonable(timings), indent=1) + "\n")
    return paths


def jsonable(o):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(o, dict):
        return {str(k): jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return [jsonable(v) for v in o.tolist()]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else str(o)
    return o


def _write(out_dir, name, text):
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
