"""Regression data model, robust standardization and residual-based losses.

Conventions used throughout the package:

* When a dataset carries an intercept, column 0 of ``X`` is a column of
  ones.  Its coefficient is never penalized, never boxed and has no
  indicator variable, but it is always active and it occupies one slot of
  the feature budget ``k_p``.
* The objective of a fit is ``(1/n) * ||y - X beta - phi||^2``.
* MAD is the raw median absolute deviation (no normal consistency factor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import lsq_linear

from .exceptions import DimensionMismatch, InvalidProblem, RankDeficient, ZeroMadColumn

GAP_EPS = 1e-12


def mad(x, axis=None):
    """Raw median absolute deviation about the median."""
    x = np.asarray(x, dtype=float)
    med = np.median(x, axis=axis, keepdims=True)
    return np.median(np.abs(x - med), axis=axis)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Standardization:
    """Record of the robust centering/scaling applied to a dataset.

    ``x_center`` and ``x_scale`` have one entry per design column; the
    intercept column (if any) is stored with center 0 and scale 1.
    """

    x_center: np.ndarray
    x_scale: np.ndarray
    y_center: float
    intercept: bool

    def to_original(self, beta):
        """Map standardized coefficients back to the original scale.

        Returns ``(offset, beta_raw)`` such that original-scale predictions
        are ``offset + X_raw @ beta_raw``.  With an intercept the offset is
        folded into ``beta_raw[0]`` and the returned offset is 0.
        """
        beta = np.asarray(beta, dtype=float)
        raw = beta / self.x_scale
        offset = self.y_center - float(np.dot(raw, self.x_center))
        if self.intercept:
            raw = raw.copy()
            raw[0] += offset
            offset = 0.0
        return offset, raw

    def to_standardized(self, beta_raw):
        """Inverse of :meth:`to_original` for intercept models."""
        beta_raw = np.asarray(beta_raw, dtype=float)
        std = beta_raw * self.x_scale
        if self.intercept:
            std = std.copy()
            std[0] = beta_raw[0] - self.y_center + float(np.dot(beta_raw[1:], self.x_center[1:]))
        return std


@dataclass(frozen=True)
class Dataset:
    """Response vector and design matrix, raw or robustly standardized."""

    y: np.ndarray
    X: np.ndarray
    intercept: bool = False
    standardization: Optional[Standardization] = None
    names: Optional[tuple] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if y.ndim != 1:
            raise DimensionMismatch("y must be one-dimensional")
        if X.ndim != 2:
            raise DimensionMismatch("X must be two-dimensional")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"y has {y.shape[0]} entries but X has {X.shape[0]} rows")
        if y.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatch("need at least one case and one column")
        if self.intercept and not np.all(X[:, 0] == 1.0):
            raise InvalidProblem("intercept datasets must have a column of ones in slot 0")
        if self.names is not None and len(self.names) != X.shape[1]:
            raise DimensionMismatch("one name per design column is required")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_arrays(cls, y, X, intercept=True, names=None):
        """Build a dataset, prepending a column of ones when ``intercept``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
            if names is not None:
                names = ("(intercept)",) + tuple(names)
        return cls(y=y, X=X, intercept=intercept, names=names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def is_standardized(self) -> bool:
        return self.standardization is not None

    def rows(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, y=self.y[idx], X=self.X[idx])


def standardize_robust(dataset: Dataset) -> Dataset:
    """Center ``y`` and every non-intercept column of ``X`` at its median and
    scale those columns to unit MAD.

    Raises
    ------
    ZeroMadColumn
        If some non-intercept column has zero MAD.
    """
    X = np.array(dataset.X, dtype=float)
    p = dataset.p
    start = 1 if dataset.intercept else 0
    center = np.zeros(p)
    scale = np.ones(p)
    for j in range(start, p):
        col = X[:, j]
        med = float(np.median(col))
        s = float(np.median(np.abs(col - med)))
        if not s > 0:
            name = dataset.names[j] if dataset.names is not None else None
            raise ZeroMadColumn(j, name)
        center[j] = med
        scale[j] = s
    Xs = (X - center) / scale
    y_center = float(np.median(dataset.y))
    ys = dataset.y - y_center
    if dataset.standardization is not None:
        # compose with the earlier transform so back-transforms stay exact
        prev = dataset.standardization
        center = prev.x_center + prev.x_scale * center
        scale = prev.x_scale * scale
        y_center = prev.y_center + y_center
    record = Standardization(_frozen(center), _frozen(scale), y_center, dataset.intercept)
    return Dataset(y=ys, X=Xs, intercept=dataset.intercept, standardization=record,
                   names=dataset.names)


@dataclass(frozen=True)
class SfsodProblem:
    """One instance of the L0-constrained mean-shift regression problem.

    ``k_p`` counts the intercept when the dataset has one.  ``lam`` is the
    radius of the ridge constraint on the non-intercept coefficients
    (``inf`` disables it).  Big-M vectors are optional; the intercept slot
    of ``bigM_beta`` is ignored.
    """

    data: Dataset
    k_p: int
    k_n: int
    lam: float = math.inf
    bigM_beta: Optional[np.ndarray] = None
    bigM_phi: Optional[np.ndarray] = None

    def __post_init__(self):
        n, p = self.data.n, self.data.p
        if int(self.k_p) != self.k_p or int(self.k_n) != self.k_n:
            raise InvalidProblem("k_p and k_n must be integers")
        object.__setattr__(self, "k_p", int(self.k_p))
        object.__setattr__(self, "k_n", int(self.k_n))
        if not 0 <= self.k_p <= p:
            raise InvalidProblem(f"k_p={self.k_p} outside [0, {p}]")
        if not 0 <= self.k_n <= n - self.k_p - 1:
            raise InvalidProblem(f"k_n={self.k_n} outside [0, n - k_p - 1 = {n - self.k_p - 1}]")
        if not self.lam >= 0:
            raise InvalidProblem("lam must be nonnegative")
        if self.bigM_beta is not None:
            m = np.array(self.bigM_beta, dtype=float)
            if m.shape != (p,):
                raise DimensionMismatch(f"bigM_beta must have length {p}")
            if self.data.intercept:
                m[0] = np.inf
            check = m[1:] if self.data.intercept else m
            if not (np.all(check > 0) and np.all(np.isfinite(check))):
                raise InvalidProblem("bigM_beta entries must be positive and finite")
            object.__setattr__(self, "bigM_beta", _frozen(m))
        if self.bigM_phi is not None:
            m = np.array(self.bigM_phi, dtype=float)
            if m.shape != (n,):
                raise DimensionMismatch(f"bigM_phi must have length {n}")
            if not (np.all(m > 0) and np.all(np.isfinite(m))):
                raise InvalidProblem("bigM_phi entries must be positive and finite")
            object.__setattr__(self, "bigM_phi", _frozen(m))

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def p(self) -> int:
        return self.data.p

    @property
    def intercept(self) -> bool:
        return self.data.intercept

    @property
    def has_bigM(self) -> bool:
        return self.bigM_beta is not None and self.bigM_phi is not None

    def penalized_mask(self) -> np.ndarray:
        mask = np.ones(self.p, dtype=bool)
        if self.intercept:
            mask[0] = False
        return mask

    def with_budgets(self, k_p=None, k_n=None, lam=None) -> "SfsodProblem":
        return replace(
            self,
            k_p=self.k_p if k_p is None else k_p,
            k_n=self.k_n if k_n is None else k_n,
            lam=self.lam if lam is None else lam,
        )

    def without_bounds(self) -> "SfsodProblem":
        return replace(self, bigM_beta=None, bigM_phi=None)


@dataclass(frozen=True)
class Solution:
    """A feasible point of the problem together with its certificate."""

    beta: np.ndarray
    phi: np.ndarray
    z_beta: np.ndarray
    z_phi: np.ndarray
    objective: float
    lower_bound: float = 0.0
    gap: float = 1.0
    nodes_explored: int = 0
    wall_time: float = 0.0
    status: str = "heuristic"
    history: tuple = field(default=(), compare=False)

    @property
    def support_beta(self) -> np.ndarray:
        return np.flatnonzero(self.z_beta)

    @property
    def support_phi(self) -> np.ndarray:
        return np.flatnonzero(self.z_phi)

    def to_dict(self, timing=True) -> dict:
        out = {
            "beta": [float(v) for v in self.beta],
            "phi": [float(v) for v in self.phi],
            "z_beta": [int(v) for v in self.z_beta],
            "z_phi": [int(v) for v in self.z_phi],
            "objective": float(self.objective),
            "lower_bound": float(self.lower_bound),
            "gap": float(self.gap),
            "nodes_explored": int(self.nodes_explored),
            "status": self.status,
        }
        if timing:
            out["wall_time"] = float(self.wall_time)
        return out

    def fingerprint(self) -> bytes:
        """Bytes identifying the solution, excluding wall-clock time."""
        parts = [
            np.ascontiguousarray(self.beta, dtype=np.float64).tobytes(),
            np.ascontiguousarray(self.phi, dtype=np.float64).tobytes(),
            np.ascontiguousarray(self.z_beta, dtype=np.int8).tobytes(),
            np.ascontiguousarray(self.z_phi, dtype=np.int8).tobytes(),
            np.array([self.objective, self.lower_bound, self.gap]).tobytes(),
            str(self.nodes_explored).encode(),
            self.status.encode(),
        ]
        return b"|".join(parts)


def relative_gap(objective, lower_bound) -> float:
    return max(0.0, (objective - lower_bound) / max(objective, GAP_EPS))


def make_solution(problem, beta, phi, *, support_beta=None, support_phi=None, **info) -> Solution:
    """Package ``(beta, phi)`` as a :class:`Solution`, computing indicators.

    Indicators default to the nonzero pattern; explicit supports let a
    coefficient that happens to be zero still count as active.
    """
    beta = np.asarray(beta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    zb = np.zeros(problem.p, dtype=np.int8)
    zp = np.zeros(problem.n, dtype=np.int8)
    if support_beta is None:
        zb[beta != 0] = 1
    else:
        zb[np.asarray(support_beta, dtype=int)] = 1
    if problem.intercept:
        zb[0] = 0
    if support_phi is None:
        zp[phi != 0] = 1
    else:
        zp[np.asarray(support_phi, dtype=int)] = 1
    obj = objective(problem, beta, phi)
    info.setdefault("lower_bound", 0.0)
    info.setdefault("gap", relative_gap(obj, info["lower_bound"]))
    return Solution(beta=_frozen(beta), phi=_frozen(phi), z_beta=_frozen(zb, np.int8),
                    z_phi=_frozen(zp, np.int8), objective=obj, **info)


def _check_lengths(problem, beta=None, phi=None):
    if beta is not None and np.shape(beta) != (problem.p,):
        raise DimensionMismatch(f"beta must have length {problem.p}, got {np.shape(beta)}")
    if phi is not None and np.shape(phi) != (problem.n,):
        raise DimensionMismatch(f"phi must have length {problem.n}, got {np.shape(phi)}")


def residuals(problem, beta) -> np.ndarray:
    _check_lengths(problem, beta=beta)
    return problem.data.y - problem.data.X @ np.asarray(beta, dtype=float)


def objective(problem, beta, phi) -> float:
    """``(1/n) * sum_i (y_i - x_i' beta - phi_i)^2``."""
    _check_lengths(problem, beta, phi)
    r = residuals(problem, beta) - np.asarray(phi, dtype=float)
    return float(np.sum(r * r)) / problem.n


def _trim_order(gain):
    # largest gain first; ties go to the smallest index
    return np.argsort(-gain, kind="stable")


def optimal_phi_given_beta(problem, beta) -> np.ndarray:
    """Mean shifts that absorb the ``k_n`` largest absolute residuals.

    This is the exact minimizer of the objective over ``phi`` for fixed
    ``beta`` when no big-M box is imposed on ``phi``.
    """
    e = residuals(problem, beta)
    phi = np.zeros(problem.n)
    if problem.k_n > 0:
        idx = _trim_order(np.abs(e))[: problem.k_n]
        phi[idx] = e[idx]
    return phi


def best_phi(problem, e, bounds=None):
    """Box-aware minimizer over ``phi`` given residuals ``e``.

    Returns ``(phi, support)``.  Without ``bounds`` this coincides with
    :func:`optimal_phi_given_beta`.
    """
    phi = np.zeros(problem.n)
    if problem.k_n == 0:
        return phi, np.empty(0, dtype=int)
    if bounds is None:
        idx = _trim_order(np.abs(e))[: problem.k_n]
        phi[idx] = e[idx]
    else:
        clipped = np.clip(e, -bounds, bounds)
        gain = e * e - (e - clipped) ** 2
        idx = _trim_order(gain)[: problem.k_n]
        phi[idx] = clipped[idx]
    return phi, np.sort(idx)


def trimmed_loss(problem, beta) -> float:
    """``(1/n)`` times the sum of the ``n - k_n`` smallest squared residuals."""
    e = residuals(problem, beta)
    sq = e * e
    if problem.k_n > 0:
        sq[_trim_order(np.abs(e))[: problem.k_n]] = 0.0
    return float(np.sum(sq)) / problem.n


def _solve_qr(A, b, what="design"):
    """Least squares through an economic QR with an explicit rank check."""
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diag(R))
    if A.shape[1] > A.shape[0] or d.size and d.min() <= 1e-10 * max(d.max(), 1e-300):
        raise RankDeficient(f"{what} matrix is rank deficient")
    coef = sla.solve_triangular(R, Q.T @ b)
    return coef, Q, R


def deletion_residuals(dataset: Dataset, fitted_subset) -> np.ndarray:
    """Studentized deletion residuals relative to a fit on ``fitted_subset``.

    For a case inside the subset the residual is computed leaving that case
    out of the subset fit; for a case outside the subset it is the
    prediction residual of the subset fit, studentized accordingly.
    """
    sub = np.unique(np.asarray(fitted_subset, dtype=int))
    X, y = dataset.X, dataset.y
    n, p = X.shape
    m = sub.size
    if m < p + 2:
        raise RankDeficient(f"subset of {m} cases is too small for {p} columns")
    coef, Q, R = _solve_qr(X[sub], y[sub], "subset Gram")
    e = y - X @ coef
    rss = float(np.sum(e[sub] ** 2))
    t = np.empty(n)

    h = np.sum(Q * Q, axis=1)
    es = e[sub]
    one_minus_h = 1.0 - h
    s2_del = (rss - np.divide(es * es, one_minus_h, out=np.zeros_like(es), where=one_minus_h > 0)) / (m - p - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_in = es / np.sqrt(np.maximum(s2_del, 0.0) * one_minus_h)
    t_in[es == 0] = 0.0
    t[sub] = t_in

    outside = np.setdiff1d(np.arange(n), sub)
    if outside.size:
        W = sla.solve_triangular(R, X[outside].T, trans="T")
        g = np.sum(W * W, axis=0)
        s2 = rss / (m - p)
        eo = e[outside]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_out = eo / np.sqrt(s2 * (1.0 + g))
        t_out[eo == 0] = 0.0
        t[outside] = t_out
    return t


@dataclass(frozen=True)
class OracleFit:
    """Least squares on ``[X_S, I_T]`` for known feature and outlier supports."""

    theta: np.ndarray
    support_beta: tuple
    support_phi: tuple
    residuals: np.ndarray
    beta: np.ndarray
    phi: np.ndarray


def robust_oracle_fit(dataset: Dataset, support_beta, support_phi) -> OracleFit:
    """Joint least-squares fit of coefficients on ``support_beta`` and
    mean shifts on ``support_phi``.

    Raises
    ------
    RankDeficient
        When the augmented matrix does not have full column rank.
    """
    sb = np.unique(np.asarray(support_beta, dtype=int))
    sp = np.unique(np.asarray(support_phi, dtype=int))
    n, p = dataset.n, dataset.p
    if sb.size + sp.size >= n:
        raise RankDeficient("too many active coefficients for the number of cases")
    A = np.zeros((n, sb.size + sp.size))
    A[:, : sb.size] = dataset.X[:, sb]
    A[sp, sb.size + np.arange(sp.size)] = 1.0
    theta, _, _ = _solve_qr(A, dataset.y, "augmented oracle")
    beta = np.zeros(p)
    beta[sb] = theta[: sb.size]
    phi = np.zeros(n)
    phi[sp] = theta[sb.size:]
    return OracleFit(
        theta=_frozen(theta),
        support_beta=tuple(int(j) for j in sb),
        support_phi=tuple(int(i) for i in sp),
        residuals=_frozen(dataset.y - A @ theta),
        beta=_frozen(beta),
        phi=_frozen(phi),
    )


def _bounded_lstsq(A, b, lb, ub):
    """Box-constrained least squares; exact active-set solve."""
    if np.all(np.isinf(lb)) and np.all(np.isinf(ub)):
        return np.linalg.lstsq(A, b, rcond=None)[0]
    res = lsq_linear(A, b, bounds=(lb, ub), method="bvls", tol=1e-12, lsmr_tol=None)
    return res.x


def fit_support(problem: SfsodProblem, support_beta, trimmed, use_bounds=True):
    """Best ``(beta, phi)`` for fixed feature support and trimmed cases.

    Solves the continuous part of the problem exactly: least squares with
    optional big-M boxes (when ``use_bounds`` and the problem has them) and
    the ridge constraint on the non-intercept coefficients.
    """
    X, y = problem.data.X, problem.data.y
    n, p = problem.n, problem.p
    S = np.asarray(sorted(int(j) for j in support_beta), dtype=int)
    T = np.asarray(sorted(int(i) for i in trimmed), dtype=int)
    boxed = use_bounds and problem.has_bigM
    beta = np.zeros(p)
    phi = np.zeros(n)
    kept = np.ones(n, dtype=bool)
    kept[T] = False
    pen = problem.penalized_mask()[S]
    lam = problem.lam

    if S.size == 0:
        phi[T] = y[T]
        if boxed:
            phi[T] = np.clip(phi[T], -problem.bigM_phi[T], problem.bigM_phi[T])
        return beta, phi

    def unboxed(mu):
        Xk, yk = X[kept][:, S], y[kept]
        if mu > 0:
            D = np.diag(np.sqrt(mu) * pen.astype(float))[pen]
            Xk = np.vstack([Xk, D])
            yk = np.concatenate([yk, np.zeros(D.shape[0])])
        return np.linalg.lstsq(Xk, yk, rcond=None)[0]

    def boxed_fit(mu):
        A = np.zeros((n, S.size + T.size))
        A[:, : S.size] = X[:, S]
        A[T, S.size + np.arange(T.size)] = 1.0
        mb = problem.bigM_beta[S]
        mp = problem.bigM_phi[T]
        lb = np.concatenate([-mb, -mp])
        ub = np.concatenate([mb, mp])
        b = y
        if mu > 0:
            D = np.zeros((int(pen.sum()), A.shape[1]))
            D[np.arange(D.shape[0]), np.flatnonzero(pen)] = np.sqrt(mu)
            A = np.vstack([A, D])
            b = np.concatenate([y, np.zeros(D.shape[0])])
        theta = _bounded_lstsq(A, b, lb, ub)
        return theta[: S.size], theta[S.size:]

    def solve(mu):
        if not boxed:
            c = unboxed(mu)
            return c, y[T] - X[T][:, S] @ c
        c = unboxed(mu)
        f = y[T] - X[T][:, S] @ c
        if np.all(np.abs(c) <= problem.bigM_beta[S]) and np.all(np.abs(f) <= problem.bigM_phi[T]):
            return c, f
        return boxed_fit(mu)

    coef, shifts = solve(0.0)
    if math.isfinite(lam) and float(np.sum(coef[pen] ** 2)) > lam:
        if lam == 0:
            # every penalized coefficient is pinned at zero
            return fit_support(replace(problem, lam=math.inf), S[~pen], T, use_bounds)
        else:
            lo, hi = 0.0, 1.0
            while True:
                c_hi, _ = solve(hi)
                if float(np.sum(c_hi[pen] ** 2)) <= lam:
                    break
                lo, hi = hi, hi * 4.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                c_mid, _ = solve(mid)
                if float(np.sum(c_mid[pen] ** 2)) <= lam:
                    hi = mid
                else:
                    lo = mid
                if hi - lo <= 1e-14 * max(hi, 1e-300):
                    break
            coef, shifts = solve(hi)
    beta[S] = coef
    phi[T] = shifts
    return beta, phi
