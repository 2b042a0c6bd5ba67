"""Poisson point processes with q-exponential intensity on a finite support.

The intensity is ``lambda(dx) = exp_q(alpha + beta'x) F(dx)`` where ``F`` is a
known discrete distribution.  The additive-smoothing estimator maximises

    -Lambda_q(alpha, beta) + sum_i log exp_q(alpha + beta'x_i)
        + kappa * sum_j p_j log exp_q(alpha + beta'xi_j)

over the open convex set where every ``1 + (1-q)(alpha + beta'xi_j) > 0``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from imbreg._optim import newton_ascent
from imbreg.deformed import exp_q, exp_q_derivatives, ln_exp_q, ln_exp_q_derivatives
from imbreg.io import DataError, read_numeric_csv

__all__ = [
    "CovariateDistribution",
    "DivergenceDetected",
    "EventSample",
    "HyperplaneSupportError",
    "PointProcessFit",
    "PointProcessModel",
    "fit_additive_smoothing",
    "has_recession_direction",
    "penalized_objective",
    "penalized_objective_derivatives",
    "point_process_log_likelihood",
    "q_exponential_density",
    "region_intensity",
    "theta_contains",
    "total_intensity",
]

MATCH_TOL = 1e-9
DIVERGENCE_NORM = 1e8
BOUNDARY_MARGIN = 1e-10
BOUNDARY_PATIENCE = 25
# relative intensity below which an unpenalised optimum sits on the boundary
DEGENERATE_RATIO = 1e-8
# unpenalised fits this far out get the exact recession check
SUSPICIOUS_NORM = 1e3
SUSPICIOUS_RATIO = 1e-3


class DivergenceDetected(RuntimeError):
    """The unpenalised maximum likelihood estimate does not exist."""


class HyperplaneSupportError(DataError):
    """The covariate support lies in an affine hyperplane."""


@dataclass(frozen=True, eq=False)
class CovariateDistribution:
    """Finite base measure: distinct support rows ``xi_j`` with weights ``p_j``."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        S = np.array(self.support, dtype=float)
        if S.ndim == 1:
            S = S[:, None]
        w = np.array(self.weights, dtype=float).ravel()
        if S.ndim != 2 or S.shape[0] != w.shape[0] or S.shape[0] == 0:
            raise DataError("support must be J x p with J matching the weight vector")
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(w))):
            raise DataError("support and weights must be finite")
        if np.any(w <= 0):
            raise DataError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DataError(f"weights must sum to 1 (got {w.sum()!r})")
        if np.unique(S, axis=0).shape[0] != S.shape[0]:
            raise DataError("support points must be distinct")
        centered = S - S.mean(axis=0)
        if S.shape[0] < S.shape[1] + 1 or np.linalg.matrix_rank(centered) < S.shape[1]:
            raise HyperplaneSupportError("support of F is contained in an affine hyperplane")
        S.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "support", S)
        object.__setattr__(self, "weights", w)

    @property
    def J(self) -> int:
        return self.support.shape[0]

    @property
    def p(self) -> int:
        return self.support.shape[1]

    @classmethod
    def empirical(cls, X) -> "CovariateDistribution":
        """Empirical distribution of the rows of ``X`` (ties merged)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        support, counts = np.unique(X, axis=0, return_counts=True)
        return cls(support, counts / counts.sum())

    @classmethod
    def from_csv(cls, path) -> "CovariateDistribution":
        """Covariate columns followed by a ``weight`` column; weights are rescaled to sum to 1."""
        header, data = read_numeric_csv(path)
        if not header or header[-1] != "weight":
            raise DataError(f"{path}: last column must be 'weight', got {header}")
        w = data[:, -1]
        if np.any(w <= 0):
            raise DataError(f"{path}: weights must be positive")
        return cls(data[:, :-1], w / w.sum())

    def locate(self, points, tol: float = MATCH_TOL) -> np.ndarray:
        """Support index of each row of ``points``; raises if a row is off-support."""
        P = np.asarray(points, dtype=float).reshape(-1, self.p)
        idx = np.empty(P.shape[0], dtype=np.int64)
        for i, row in enumerate(P):
            dist = np.max(np.abs(self.support - row), axis=1)
            j = int(np.argmin(dist))
            if dist[j] > tol:
                raise DataError(f"event point {row.tolist()} is not in the support of F")
            idx[i] = j
        return idx


@dataclass(frozen=True, eq=False)
class EventSample:
    """Observed event locations, one row per point (``n`` may be 0)."""

    points: np.ndarray

    def __post_init__(self):
        P = np.array(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None] if P.size else P.reshape(0, 0)
        P.setflags(write=False)
        object.__setattr__(self, "points", P)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_csv(cls, path, p: int | None = None) -> "EventSample":
        header, data = read_numeric_csv(path)
        if p is not None and data.shape[1] != p:
            raise DataError(f"{path}: expected {p} covariate columns, got {data.shape[1]}")
        return cls(data)

    @classmethod
    def from_counts(cls, F: CovariateDistribution, counts) -> "EventSample":
        counts = np.asarray(counts, dtype=int)
        return cls(np.repeat(F.support, counts, axis=0).reshape(-1, F.p))

    def counts(self, F: CovariateDistribution) -> np.ndarray:
        """Number of events at each support point of ``F``."""
        if self.n == 0:
            return np.zeros(F.J)
        return np.bincount(F.locate(self.points), minlength=F.J).astype(float)


def _linear(F: CovariateDistribution, alpha, beta) -> np.ndarray:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape[0] != F.p:
        raise ValueError(f"beta has length {beta.shape[0]}, support has dimension {F.p}")
    return float(alpha) + F.support @ beta


def theta_contains(q: float, F: CovariateDistribution, alpha, beta) -> tuple[bool, float]:
    """Whether ``(alpha, beta)`` lies in the open parameter set, and the margin.

    The margin is ``min_j 1 + (1-q)(alpha + beta'xi_j)``; membership is
    ``margin > 0``.
    """
    margin = float(np.min(1.0 + (1.0 - q) * _linear(F, alpha, beta)))
    return margin > 0.0, margin


@dataclass(frozen=True, eq=False)
class PointProcessModel:
    q: float
    F: CovariateDistribution
    alpha: float
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        inside, margin = theta_contains(self.q, self.F, self.alpha, self.beta)
        if not inside:
            raise ValueError(f"(alpha, beta) outside the parameter space (margin {margin:g})")

    def point_intensities(self) -> np.ndarray:
        """``p_j exp_q(alpha + beta'xi_j)`` for every support point."""
        return self.F.weights * exp_q(_linear(self.F, self.alpha, self.beta), self.q)


def total_intensity(model: PointProcessModel) -> float:
    return float(np.sum(model.point_intensities()))


def region_intensity(model: PointProcessModel, region) -> float:
    """Intensity mass of a set of support indices."""
    idx = np.asarray(sorted(set(int(j) for j in region)), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= model.F.J):
        raise IndexError("region index outside the support")
    return float(np.sum(model.point_intensities()[idx]))


def q_exponential_density(model: PointProcessModel, j=None):
    """Probability of support point ``j`` under the normalised intensity.

    With ``j=None`` the whole vector is returned.
    """
    lam = model.point_intensities()
    dens = lam / lam.sum()
    return dens if j is None else float(dens[j])


# --------------------------------------------------------------------------
# likelihood
# --------------------------------------------------------------------------


class _Problem:
    """Objective pieces: intensity over ``F`` and log terms over weighted points.

    Normally the log terms sit on the support of ``F`` with weights
    ``n_j + kappa p_j``; events off the support get rows of their own.
    """

    def __init__(self, q, F, log_points, log_weights):
        self.q = float(q)
        self.Zf = np.column_stack([np.ones(F.J), F.support])
        self.pf = F.weights
        self.Zl = np.column_stack([np.ones(log_points.shape[0]), log_points])
        self.wl = np.asarray(log_weights, dtype=float)

    @classmethod
    def build(cls, q, F, sample, kappa, allow_off_support=False):
        if sample.n and sample.points.shape[1] != F.p:
            raise DataError(f"event points have dimension {sample.points.shape[1]}, F has {F.p}")
        if not allow_off_support:
            return cls(q, F, F.support, sample.counts(F) + kappa * F.weights)
        extra, counts = (np.unique(sample.points, axis=0, return_counts=True)
                         if sample.n else (np.zeros((0, F.p)), np.zeros(0)))
        pts = np.vstack([F.support, extra])
        return cls(q, F, pts, np.concatenate([kappa * F.weights, counts]))

    def margin(self, theta):
        if self.q == 1.0:
            return 1.0
        return min(np.min(1.0 + (1.0 - self.q) * (self.Zf @ theta)),
                   np.min(1.0 + (1.0 - self.q) * (self.Zl @ theta), initial=np.inf))

    def feasible(self, theta):
        return self.margin(theta) > 0.0

    def __call__(self, theta, order):
        q = self.q
        if not self.feasible(theta):
            return -np.inf if order == 0 else (-np.inf, None, None)
        ef = self.Zf @ theta
        el = self.Zl @ theta
        wl = self.wl
        with np.errstate(invalid="ignore", over="ignore"):
            val = -float(self.pf @ exp_q(ef, q)) + float(np.sum(np.where(wl > 0, wl * ln_exp_q(el, q), 0.0)))
        if not np.isfinite(val):
            val = -np.inf
        if order == 0:
            return val
        dE, d2E = exp_q_derivatives(ef, q)
        dl, d2l = ln_exp_q_derivatives(el, q)
        grad = self.Zf.T @ (-self.pf * dE) + self.Zl.T @ (wl * dl)
        hess = (self.Zf * (-self.pf * d2E)[:, None]).T @ self.Zf + (self.Zl * (wl * d2l)[:, None]).T @ self.Zl
        return val, grad, hess


def _theta(alpha, beta):
    return np.concatenate([[float(alpha)], np.atleast_1d(np.asarray(beta, dtype=float))])


def penalized_objective(q, F: CovariateDistribution, sample: EventSample, kappa, alpha, beta) -> float:
    """Penalised log-likelihood at ``(alpha, beta)``; ``-inf`` outside the parameter set."""
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    return _Problem.build(q, F, sample, kappa)(_theta(alpha, beta), 0)


def penalized_objective_derivatives(q, F, sample, kappa, alpha, beta):
    """``(value, gradient, Hessian)`` of :func:`penalized_objective` in ``(alpha, beta)``."""
    return _Problem.build(q, F, sample, kappa)(_theta(alpha, beta), 2)


def point_process_log_likelihood(model: PointProcessModel, sample: EventSample) -> float:
    """Log-density of the observed configuration, ``-Lambda - log n! + sum log exp_q``."""
    eta = model.alpha + sample.points.reshape(-1, model.F.p) @ model.beta
    terms = ln_exp_q(eta, model.q) if sample.n else np.zeros(0)
    return -total_intensity(model) - math.lgamma(sample.n + 1) + float(np.sum(terms))


# --------------------------------------------------------------------------
# estimation
# --------------------------------------------------------------------------


@dataclass
class PointProcessFit:
    model: PointProcessModel
    kappa: float
    penalized_objective: float
    total_intensity: float
    converged: bool
    iterations: int = 0
    gradient_norm: float = 0.0
    margin: float = 1.0
    notes: list[str] = field(default_factory=list)

    @property
    def alpha(self) -> float:
        return self.model.alpha

    @property
    def beta(self) -> np.ndarray:
        return self.model.beta

    def to_dict(self) -> dict:
        return {
            "q": self.model.q,
            "kappa": self.kappa,
            "alpha": self.model.alpha,
            "beta": self.model.beta.tolist(),
            "total_intensity": self.total_intensity,
            "objective": self.penalized_objective,
            "converged": self.converged,
        }


def has_recession_direction(q, F: CovariateDistribution, sample: EventSample, allow_off_support: bool = False) -> bool:
    """Whether the unpenalised likelihood increases forever along some ray.

    Looks for ``d`` with ``z_i'd = 0`` at every observed point,
    ``z_j'd <= 0`` on the whole support and some strict inequality, by a
    linear program.  Along such a ray no observed term changes while the
    total intensity strictly decreases, so no maximiser exists.
    """
    prob = _Problem.build(q, F, sample, 0.0, allow_off_support)
    obs = prob.Zl[prob.wl > 0]
    scale = np.max(np.abs(prob.Zf), axis=0)
    scale[scale == 0] = 1.0
    Zf = prob.Zf / scale
    res = optimize.linprog(
        Zf.sum(axis=0), A_ub=Zf, b_ub=np.zeros(Zf.shape[0]),
        A_eq=obs / scale if obs.size else None, b_eq=np.zeros(obs.shape[0]) if obs.size else None,
        bounds=[(-1.0, 1.0)] * Zf.shape[1], method="highs",
    )
    return bool(res.status == 0 and -res.fun > 1e-9 * Zf.shape[0])


def fit_additive_smoothing(
    q: float,
    F: CovariateDistribution,
    sample: EventSample,
    kappa: float = 1.0,
    *,
    start=None,
    gtol: float = 1e-10,
    max_iter: int = 500,
    multistart: bool | None = None,
    allow_off_support: bool = False,
) -> PointProcessFit:
    """Maximise the penalised point-process likelihood over the parameter set.

    ``kappa = 0`` gives the plain maximum likelihood estimate, which may not
    exist; that case raises :class:`DivergenceDetected` when the iterates
    run to the boundary or to infinity.  For ``q`` outside ``[0, 1]`` the
    objective need not be concave and the fit is repeated from
    deterministic feasible perturbations of the start.

    Event points must lie on the support of ``F`` unless
    ``allow_off_support`` is set, in which case their log terms are
    evaluated where they fall.
    """
    q = float(q)
    kappa = float(kappa)
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    fun = _Problem.build(q, F, sample, kappa, allow_off_support)
    if not np.any(fun.wl > 0):
        raise DivergenceDetected("no events and kappa = 0: the intensity estimate is identically zero")
    feasible = fun.feasible

    def make_monitor():
        state = {"near": 0, "last": -np.inf}

        def monitor(theta, f, it):
            if np.max(np.abs(theta)) > DIVERGENCE_NORM:
                raise DivergenceDetected(
                    f"|(alpha, beta)| exceeded {DIVERGENCE_NORM:g} at iteration {it}; "
                    "the maximum likelihood estimate does not exist"
                )
            if q != 1.0:
                margin = fun.margin(theta)
                if margin < BOUNDARY_MARGIN and f >= state["last"]:
                    state["near"] += 1
                else:
                    state["near"] = 0
                if state["near"] >= BOUNDARY_PATIENCE:
                    raise DivergenceDetected(
                        f"iterates approach the boundary of the parameter set (margin {margin:.3g}); "
                        "the maximum likelihood estimate does not exist"
                    )
            state["last"] = f

        return monitor

    base = np.zeros(F.p + 1) if start is None else np.asarray(start, dtype=float)
    if not feasible(base) or not np.isfinite(fun(base, 0)):
        raise ValueError("starting point is outside the parameter set")
    starts = [base]
    if multistart is None:
        multistart = not (0.0 <= q <= 1.0)
    if multistart:
        for signs in itertools.islice(itertools.product((-1.0, 1.0), repeat=base.size), 8):
            cand = base + 0.5 * np.array(signs)
            if feasible(cand) and np.isfinite(fun(cand, 0)):
                starts.append(cand)

    best = None
    for x0 in starts:
        res = newton_ascent(
            fun, x0, gtol=gtol, max_iter=max_iter, feasible=feasible,
            monitor=make_monitor() if kappa == 0.0 else None,
        )
        if best is None or (res.converged, res.fun) > (best.converged, best.fun):
            best = res

    theta = best.x
    margin = fun.margin(theta)
    notes = []
    if kappa == 0.0:
        E = exp_q(theta[0] + F.support @ theta[1:], q)
        ratio = np.min(E) / np.max(E) if np.max(E) > 0 else 0.0
        if margin < BOUNDARY_MARGIN or ratio < DEGENERATE_RATIO:
            raise DivergenceDetected(
                "the unpenalised optimum lies on the boundary (relative intensity "
                f"{ratio:.3g}, margin {margin:.3g}); the maximum likelihood estimate does not exist"
            )
        if (not best.converged or np.max(np.abs(theta)) > SUSPICIOUS_NORM or ratio < SUSPICIOUS_RATIO) and \
                has_recession_direction(q, F, sample, allow_off_support):
            raise DivergenceDetected(
                "the likelihood keeps increasing along a ray on which the observed points are "
                f"fixed (relative intensity {ratio:.3g}); the maximum likelihood estimate does not exist"
            )
        notes.append("kappa = 0: maximum likelihood estimate, which may not exist in general")
    model = PointProcessModel(q, F, theta[0], theta[1:])
    return PointProcessFit(
        model=model,
        kappa=kappa,
        penalized_objective=best.fun,
        total_intensity=total_intensity(model),
        converged=best.converged,
        iterations=best.iterations,
        gradient_norm=best.grad_norm,
        margin=margin,
        notes=notes,
    )

