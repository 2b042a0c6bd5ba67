"""Binomial regression ``P(Y=1 | x) = G(a + b'x)`` under any link family.

The fitted objective is the log-likelihood plus, optionally, the smoothing
term ``(kappa/m) * sum_i log(m G(a + b'x_i))`` that mirrors the point-process
penalty after the ``(alpha, beta)`` rescaling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from imbreg._optim import newton_ascent
from imbreg.deformed import LinkFamily, NormalizingTriple
from imbreg.io import DataError, format_csv, read_numeric_csv

__all__ = [
    "BinaryDataset",
    "GlmFit",
    "MissingClassError",
    "NonSeparableViolation",
    "NormalizedCoefficients",
    "RawCoefficients",
    "denormalize_coefficients",
    "fit_glm",
    "glm_derivatives",
    "glm_log_likelihood",
    "is_separated",
    "normalize_coefficients",
]

SEPARATION_NORM = 1e8
# fits this large (or this close to zero loss) trigger the exact separation check
SUSPICIOUS_NORM = 1e3
SUSPICIOUS_LOSS = 1e-3


class NonSeparableViolation(RuntimeError):
    """The likelihood is unbounded: the classes are (quasi-)perfectly separated."""


class MissingClassError(DataError):
    """Only one label value occurs in the data."""


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """Covariate rows ``X`` (m x p) with 0/1 labels ``y``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("X must be a non-empty m x p matrix")
        if y.shape[0] != X.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not np.all(np.isfinite(X)):
            raise DataError("X has missing or non-finite values")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataError("labels must be 0 or 1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    @classmethod
    def from_csv(cls, path) -> "BinaryDataset":
        """Load a CSV with a ``y`` column; other columns are covariates in order."""
        header, data = read_numeric_csv(path)
        if "y" not in header:
            raise DataError(f"{path}: no 'y' label column in header {header}")
        iy = header.index("y")
        cols = [i for i in range(len(header)) if i != iy]
        if not cols:
            raise DataError(f"{path}: no covariate columns")
        return cls(data[:, cols], data[:, iy])

    def to_csv(self, names=None) -> str:
        names = list(names) if names is not None else [f"x{j + 1}" for j in range(self.p)]
        rows = [[*self.X[i], str(int(self.y[i]))] for i in range(self.m)]
        return format_csv(names + ["y"], rows)


@dataclass(frozen=True)
class RawCoefficients:
    a: float
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([[self.a], self.b])


@dataclass(frozen=True)
class NormalizedCoefficients:
    alpha: float
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))


def normalize_coefficients(coef: RawCoefficients, triple: NormalizingTriple) -> NormalizedCoefficients:
    """Map ``(a, b)`` to ``(alpha, beta)`` with ``a = c + d alpha``, ``b = d beta``."""
    return NormalizedCoefficients((coef.a - triple.c) / triple.d, coef.b / triple.d)


def denormalize_coefficients(coef: NormalizedCoefficients, triple: NormalizingTriple) -> RawCoefficients:
    return RawCoefficients(triple.c + triple.d * coef.alpha, triple.d * coef.beta)


# --------------------------------------------------------------------------
# objective
# --------------------------------------------------------------------------


def _design(data: BinaryDataset) -> np.ndarray:
    return np.column_stack([np.ones(data.m), data.X])


def _objective(theta, Z, y, family: LinkFamily, kappa: float, order: int):
    m = Z.shape[0]
    eta = Z @ theta
    w1 = y + kappa / m
    w0 = 1.0 - y
    if order == 0:
        lc, ls = family.log_cdf_sf(eta)
    else:
        lc, ls, d1c, d2c, d1s, d2s = family.log_derivatives(eta)
    with np.errstate(invalid="ignore"):
        terms = np.where(w1 > 0, w1 * lc, 0.0) + np.where(w0 > 0, w0 * ls, 0.0)
    val = float(np.sum(terms))
    if kappa > 0:
        val += kappa * np.log(m)
    if np.isnan(val):
        val = -np.inf
    if order == 0:
        return val
    s1 = w1 * d1c + w0 * d1s
    s2 = w1 * d2c + w0 * d2s
    grad = Z.T @ s1
    hess = (Z * s2[:, None]).T @ Z
    return val, grad, hess


def glm_log_likelihood(data: BinaryDataset, family: LinkFamily, coef: RawCoefficients, kappa: float = 0.0) -> float:
    """Binomial log-likelihood at ``(a, b)``, plus the smoothing term if ``kappa > 0``.

    Returns ``-inf`` when some observed label has probability zero.
    """
    return _objective(coef.vector, _design(data), data.y, family, float(kappa), 0)


def glm_derivatives(data: BinaryDataset, family: LinkFamily, coef: RawCoefficients, kappa: float = 0.0):
    """``(value, gradient, Hessian)`` of :func:`glm_log_likelihood` in ``(a, b)``."""
    return _objective(coef.vector, _design(data), data.y, family, float(kappa), 2)


def is_separated(data: BinaryDataset) -> bool:
    """Whether some ``(a, b) != 0`` puts every row weakly on its own side.

    Solves the linear program ``max sum_i s_i z_i'theta`` subject to
    ``s_i z_i'theta >= 0`` and ``|theta| <= 1`` with ``s_i = 2 y_i - 1``;
    a positive optimum is a (quasi-)separating direction along which the
    likelihood of any full-support link increases without bound.
    """
    Z = _design(data)
    scale = np.max(np.abs(Z), axis=0)
    scale[scale == 0] = 1.0
    A = -((2.0 * data.y - 1.0)[:, None] * (Z / scale))
    res = optimize.linprog(A.sum(axis=0), A_ub=A, b_ub=np.zeros(data.m),
                           bounds=[(-1.0, 1.0)] * Z.shape[1], method="highs")
    return bool(res.status == 0 and -res.fun > 1e-9 * data.m)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


@dataclass
class GlmFit:
    coefficients: RawCoefficients
    log_likelihood: float
    objective: float
    converged: bool
    iterations: int
    gradient_norm: float
    family: LinkFamily
    kappa: float = 0.0
    starts_tried: int = 1
    notes: list[str] = field(default_factory=list)

    def normalized(self, triple: NormalizingTriple) -> NormalizedCoefficients:
        return normalize_coefficients(self.coefficients, triple)

    def to_dict(self) -> dict:
        return {
            "link": self.family.tag,
            "kappa": self.kappa,
            "a": self.coefficients.a,
            "b": self.coefficients.b.tolist(),
            "log_likelihood": self.log_likelihood,
            "objective": self.objective,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
        }


def _perturbed_starts(base: np.ndarray, limit: int = 8):
    for signs in itertools.islice(itertools.product((-1.0, 1.0), repeat=base.size), limit):
        yield base + 0.5 * np.array(signs)


def fit_glm(
    data: BinaryDataset,
    family: LinkFamily,
    kappa: float = 0.0,
    *,
    start=None,
    gtol: float = 1e-10,
    max_iter: int = 500,
    multistart: bool | None = None,
) -> GlmFit:
    """Maximise the (optionally smoothed) binomial log-likelihood.

    Starts from ``(G^{-1}(mean y), 0)``.  For families whose likelihood is
    not concave (cauchit, t-logistic with ``t > 1``) the fit is repeated
    from deterministic ``+-0.5`` perturbations of the start and the best
    finite optimum is kept.

    Raises :class:`NonSeparableViolation` when the coefficients run off to
    infinity with an increasing objective, or (without smoothing) when the
    likelihood reaches zero loss.
    """
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    n1 = data.n_positive
    if n1 == 0 or n1 == data.m:
        raise MissingClassError("both classes must be present to fit a binomial regression")
    Z = _design(data)
    y = data.y
    kappa = float(kappa)

    def fun(theta, order):
        return _objective(theta, Z, y, family, kappa, order)

    def monitor(theta, f, it):
        if np.max(np.abs(theta)) > SEPARATION_NORM:
            raise NonSeparableViolation(
                f"coefficients exceed {SEPARATION_NORM:g} with increasing objective "
                f"(iteration {it}); the data appear perfectly separated"
            )

    if start is None:
        base = np.zeros(data.p + 1)
        base[0] = float(family.ppf(np.mean(y)))
        # a base-level start can lie outside a bounded-support link's domain
        if not np.isfinite(fun(base, 0)):
            base[0] = float(family.ppf(0.5))
    else:
        base = np.asarray(start, dtype=float)
    starts = [base]
    if multistart is None:
        multistart = not family.concave
    if multistart:
        starts += list(_perturbed_starts(base))

    best = None
    tried = 0
    for x0 in starts:
        if not np.isfinite(fun(x0, 0)):
            continue
        tried += 1
        res = newton_ascent(fun, x0, gtol=gtol, max_iter=max_iter, monitor=monitor)
        if best is None or (res.converged, res.fun) > (best.converged, best.fun):
            best = res
    if best is None:
        raise DataError("no starting point with a finite objective")
    if kappa == 0.0 and best.fun > -1e-8:
        raise NonSeparableViolation("log-likelihood reached zero; the data are perfectly separated")
    suspicious = not best.converged or np.max(np.abs(best.x)) > SUSPICIOUS_NORM or best.fun > -SUSPICIOUS_LOSS
    if kappa == 0.0 and family.full_support and suspicious and is_separated(data):
        raise NonSeparableViolation(
            "the classes are separated by a hyperplane, so the likelihood has no finite maximiser"
        )
    coef = RawCoefficients(best.x[0], best.x[1:])
    ll = glm_log_likelihood(data, family, coef) if kappa > 0 else best.fun
    return GlmFit(
        coefficients=coef,
        log_likelihood=ll,
        objective=best.fun,
        converged=best.converged,
        iterations=best.iterations,
        gradient_norm=best.grad_norm,
        family=family,
        kappa=kappa,
        starts_tried=tried,
    )
