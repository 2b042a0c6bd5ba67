"""Deformed exponentials, binary-regression link laws, and their tail scalings.

The q-exponential is ``exp_q(z) = [1 + (1 - q) z]_+ ** (1 / (1 - q))`` with
``exp_1 = exp``.  A link law ``G`` belongs to the imbalanced regime with tail
index ``q`` when ``m * G(c_m + d_m z) -> exp_q(z)``; ``normalizing_sequence``
returns such a ``(q, c_m, d_m)`` for each supported family and
``verify_gev`` measures how far a finite ``m`` is from the limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from imbreg._backend import RootSolverError, tlogistic_eval

__all__ = [
    "LinkFamily",
    "NormalizingTriple",
    "RootSolverError",
    "exp_q",
    "exp_q_derivatives",
    "ln_exp_q",
    "ln_exp_q_derivatives",
    "normalizing_sequence",
    "t_logistic_cdf",
    "t_logistic_gamma",
    "verify_gev",
]

# below this |(1 - q) z| the q != 1 branch is evaluated by its Taylor series
SERIES_CUTOFF = 1e-4
LOG2 = math.log(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def ln_exp_q(z, q):
    """Logarithm of :func:`exp_q`, evaluated directly in log space.

    Returns ``-inf`` where ``exp_q`` vanishes (``q < 1`` past the support
    edge) and ``+inf`` where it blows up (``q > 1`` past the pole).
    """
    z = np.asarray(z, dtype=float)
    q = float(q)
    if q == 1.0:
        return _out(z + 0.0)
    u = (1.0 - q) * z
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log1p(u) / (1.0 - q)
    out = np.where(1.0 + u <= 0.0, -np.inf if q < 1.0 else np.inf, out)
    series = z * (1.0 + u * (-0.5 + u * (1.0 / 3.0 + u * (-0.25 + u * 0.2))))
    return _out(np.where(np.abs(u) < SERIES_CUTOFF, series, out))


# libm pow is slow for some bases; the usual tail indices have cheap exact forms
_FAST_POWERS = {1.0: lambda b: b, -1.0: lambda b: 1.0 / b, 2.0: lambda b: b * b,
                0.5: np.sqrt, -0.5: lambda b: 1.0 / np.sqrt(b)}


def _power(base, e):
    fast = _FAST_POWERS.get(e)
    return fast(base) if fast is not None else np.power(base, e)


def exp_q(z, q):
    """The q-exponential ``[1 + (1-q) z]_+^{1/(1-q)}`` (``e^z`` at ``q = 1``).

    >>> exp_q(0.5, 2.0)
    2.0
    >>> exp_q(-2.0, 0.0)
    0.0
    """
    z = np.asarray(z, dtype=float)
    q = float(q)
    if q == 1.0:
        with np.errstate(over="ignore"):
            return _out(np.exp(z))
    u = (1.0 - q) * z
    base = 1.0 + u
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = np.where(base > 0.0, _power(np.abs(base), 1.0 / (1.0 - q)), 0.0 if q < 1.0 else np.inf)
        series = np.exp(ln_exp_q(z, q))
    return _out(np.where(np.abs(u) < SERIES_CUTOFF, series, direct))


def exp_q_derivatives(z, q):
    """First and second derivative of ``exp_q`` in ``z`` (inside its domain)."""
    lz = np.asarray(ln_exp_q(z, q))
    q = float(q)
    with np.errstate(over="ignore", invalid="ignore"):
        d1 = np.exp(q * lz)
        d2 = q * np.exp((2.0 * q - 1.0) * lz)
    # exp_q vanishes identically below its support
    outside = lz == -np.inf
    d1 = np.where(outside, 0.0, d1)
    d2 = np.where(outside, 0.0, d2)
    return _out(d1), _out(d2)


def ln_exp_q_derivatives(z, q):
    """First and second derivative of ``ln exp_q`` in ``z`` (inside its domain)."""
    z = np.asarray(z, dtype=float)
    q = float(q)
    base = 1.0 + (1.0 - q) * z
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = 1.0 / base
        d2 = -(1.0 - q) * d1 * d1
    return _out(d1), _out(d2)


def t_logistic_gamma(t, z):
    """Solve ``exp_t(z - g) + exp_t(-g) = 1`` for ``g`` (vectorised)."""
    gam, _, _ = tlogistic_eval(float(t), np.asarray(z, dtype=float))
    return _out(gam)


def t_logistic_cdf(t, z):
    """CDF of the t-logistic law, ``exp_t(z - gamma_t(z))``."""
    _, lc, _ = tlogistic_eval(float(t), np.asarray(z, dtype=float))
    return _out(np.exp(lc))


# --------------------------------------------------------------------------
# link families
# --------------------------------------------------------------------------

_ALIASES = {
    "logistic": "logistic",
    "logit": "logistic",
    "gumbel-min": "gumbel-min",
    "gumbel": "gumbel-min",
    "cloglog": "gumbel-min",
    "probit": "probit",
    "normal": "probit",
    "standard-normal": "probit",
    "cauchit": "cauchit",
    "cauchy": "cauchit",
    "uniform": "uniform",
    "t-logistic": "t-logistic",
}

_LINK_NAMES = {
    "logistic": "logit",
    "gumbel-min": "cloglog",
    "probit": "probit",
    "cauchit": "cauchit",
    "uniform": "uniform",
}


@dataclass(frozen=True)
class LinkFamily:
    """A one-dimensional CDF ``G`` used as inverse link ``P(Y=1|x) = G(a + b'x)``.

    ``kind`` is one of ``logistic``, ``gumbel-min``, ``probit``, ``cauchit``,
    ``uniform`` (on ``[-1, 1]``) or ``t-logistic``; the latter needs ``t``.
    All evaluation methods are vectorised over ``z``.
    """

    kind: str
    t: float | None = None

    def __post_init__(self):
        if self.kind not in _LINK_NAMES and self.kind != "t-logistic":
            raise ValueError(f"unknown link family {self.kind!r}")
        if self.kind == "t-logistic":
            if self.t is None or not math.isfinite(self.t):
                raise ValueError("t-logistic family needs a finite t")
            object.__setattr__(self, "t", float(self.t))
        elif self.t is not None:
            raise ValueError(f"{self.kind} takes no t parameter")

    @classmethod
    def parse(cls, tag: str) -> "LinkFamily":
        """Build a family from a tag such as ``"probit"`` or ``"t-logistic:1.5"``."""
        tag = tag.strip().lower()
        name, _, param = tag.partition(":")
        kind = _ALIASES.get(name)
        if kind is None:
            raise ValueError(f"unknown link tag {tag!r}")
        if kind == "t-logistic":
            if not param:
                raise ValueError("t-logistic tag needs a parameter, e.g. 't-logistic:2'")
            try:
                t = float(param)
            except ValueError:
                raise ValueError(f"bad t in link tag {tag!r}") from None
            return cls(kind, t)
        if param:
            raise ValueError(f"link {kind!r} takes no parameter")
        return cls(kind)

    @property
    def tag(self) -> str:
        if self.kind == "t-logistic":
            return f"t-logistic:{self.t:g}"
        return self.kind

    @property
    def link_name(self) -> str:
        """Conventional GLM name of the link (logit, probit, cloglog, ...)."""
        return _LINK_NAMES.get(self.kind, self.tag)

    @property
    def tail_index(self) -> float:
        if self.kind == "cauchit":
            return 2.0
        if self.kind == "uniform":
            return 0.0
        if self.kind == "t-logistic":
            return max(self.t, 0.0)
        return 1.0

    @property
    def concave(self) -> bool:
        """Whether the binomial log-likelihood is concave in the linear predictor."""
        if self.kind == "cauchit":
            return False
        if self.kind == "t-logistic":
            return self.t <= 1.0
        return True

    @property
    def full_support(self) -> bool:
        """Whether ``0 < G(z) < 1`` for every real ``z``."""
        if self.kind == "uniform":
            return False
        if self.kind == "t-logistic":
            return self.t >= 1.0
        return True

    def __str__(self):
        return self.tag

    # -- evaluation -------------------------------------------------------

    def log_cdf_sf(self, z):
        """``(log G(z), log(1 - G(z)))`` without forming ``G``."""
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.kind == "logistic":
                return -np.logaddexp(0.0, -z), -np.logaddexp(0.0, z)
            if self.kind == "gumbel-min":
                w = np.exp(z)
                small = w < 1e-3
                lc_small = z + np.log1p(-w / 2.0 + w * w / 6.0 - w**3 / 24.0)
                # log(1 - e^{-w}): expm1 form for small w, log1p form once e^{-w} < 1/2
                lc = np.where(w > LOG2, np.log1p(-np.exp(-w)), np.log(-np.expm1(-w)))
                lc = np.where(small, lc_small, lc)
                return lc, -w
            if self.kind == "probit":
                return special.log_ndtr(z), special.log_ndtr(-z)
            if self.kind == "cauchit":
                lo = np.arctan2(1.0, -z) / np.pi
                hi = np.arctan2(1.0, z) / np.pi
                # the larger of G, 1 - G is formed as 1 - (smaller) for accuracy
                lc = np.where(z > 0.0, np.log1p(-hi), np.log(lo))
                ls = np.where(z < 0.0, np.log1p(-lo), np.log(hi))
                return lc, ls
            if self.kind == "uniform":
                return (
                    np.log(np.clip(0.5 * (1.0 + z), 0.0, 1.0)),
                    np.log(np.clip(0.5 * (1.0 - z), 0.0, 1.0)),
                )
        _, lc, ls = tlogistic_eval(self.t, z)
        return lc, ls

    def log_cdf(self, z):
        return _out(self.log_cdf_sf(z)[0])

    def log_sf(self, z):
        return _out(self.log_cdf_sf(z)[1])

    def cdf(self, z):
        return _out(np.exp(self.log_cdf_sf(z)[0]))

    def sf(self, z):
        return _out(np.exp(self.log_cdf_sf(z)[1]))

    def log_pdf(self, z):
        z = np.asarray(z, dtype=float)
        return _out(self._log_pdf(z, *self.log_cdf_sf(z)))

    def pdf(self, z):
        return _out(np.exp(self.log_pdf(z)))

    def _log_pdf(self, z, lc, ls):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.kind == "logistic":
                return lc + ls
            if self.kind == "gumbel-min":
                return z - np.exp(z)
            if self.kind == "probit":
                return -0.5 * z * z - LOG_SQRT_2PI
            if self.kind == "cauchit":
                return -math.log(math.pi) - np.log1p(z * z)
            inside = np.isfinite(lc) & np.isfinite(ls)
            if self.kind == "uniform" or self.t == 0.0:
                return np.where(inside, -LOG2, -np.inf)
            t = self.t
            lp = -np.logaddexp(-t * lc, -t * ls)
            return np.where(inside, lp, -np.inf)

    def ppf(self, p):
        """Quantile function ``G^{-1}(p)``."""
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "logistic":
                out = special.logit(p)
            elif self.kind == "gumbel-min":
                out = np.log(-np.log1p(-p))
            elif self.kind == "probit":
                out = special.ndtri(p)
            elif self.kind == "cauchit":
                out = np.tan(np.pi * (p - 0.5))
            elif self.kind == "uniform":
                out = 2.0 * p - 1.0
            else:
                # G = exp_t(z - g) and 1 - G = exp_t(-g) invert in closed form
                out = _ln_t(p, self.t) - _ln_t(1.0 - p, self.t)
        return _out(out)

    def log_derivatives(self, z):
        """Values and first two z-derivatives of ``log G`` and ``log(1 - G)``.

        Returns ``(lc, ls, d1c, d2c, d1s, d2s)``.  Derivatives are set to 0
        where the corresponding log value is infinite, so that zero-weighted
        terms never produce NaN.
        """
        z = np.asarray(z, dtype=float)
        lc, ls = self.log_cdf_sf(z)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore", under="ignore"):
            if self.kind == "logistic":
                g = special.expit(z)
                s = special.expit(-z)
                d1c, d2c, d1s, d2s = s, -g * s, -g, -g * s
            elif self.kind == "gumbel-min":
                w = np.exp(z)
                h = np.where(w < 1e-300, 1.0, w / np.expm1(w))
                d1c, d2c, d1s, d2s = h, h * (1.0 - w - h), -w, -w
            elif self.kind == "probit":
                lp = -0.5 * z * z - LOG_SQRT_2PI
                r = np.exp(lp - lc)
                s = np.exp(lp - ls)
                d1c, d2c = r, -z * r - r * r
                d1s, d2s = -s, z * s - s * s
            elif self.kind == "cauchit":
                lp = -math.log(math.pi) - np.log1p(z * z)
                dlp = -2.0 * z / (1.0 + z * z)  # (log g)'
                d1c = np.exp(lp - lc)
                d1s = -np.exp(lp - ls)
                d2c = dlp * d1c - d1c * d1c
                d2s = dlp * d1s - d1s * d1s
            elif self.kind == "uniform" or self.t == 0.0:
                d1c = 1.0 / (1.0 + z)
                d1s = -1.0 / (1.0 - z)
                d2c, d2s = -d1c * d1c, -d1s * d1s
            else:
                t = self.t
                lp = -np.logaddexp(-t * lc, -t * ls)
                d1c = np.exp(lp - lc)
                d1s = -np.exp(lp - ls)
                # g' = t g^3 (G^{-t-1} - S^{-t-1}) from implicit differentiation
                d2c = t * (np.exp(3 * lp - (t + 2) * lc) - np.exp(3 * lp - lc - (t + 1) * ls)) - d1c * d1c
                d2s = -t * (np.exp(3 * lp - (t + 1) * lc - ls) - np.exp(3 * lp - (t + 2) * ls)) - d1s * d1s
            okc = np.isfinite(lc) & (lc < 0.0)
            oks = np.isfinite(ls) & (ls < 0.0)
            d1c = np.where(okc, d1c, 0.0)
            d2c = np.where(okc, d2c, 0.0)
            d1s = np.where(oks, d1s, 0.0)
            d2s = np.where(oks, d2s, 0.0)
        return lc, ls, d1c, d2c, d1s, d2s


def _ln_t(x, t):
    if t == 1.0:
        return np.log(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.expm1((1.0 - t) * np.log(x)) / (1.0 - t)


# --------------------------------------------------------------------------
# normalizing sequences
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizingTriple:
    """Tail index ``q`` with location ``c`` and scale ``d`` at sample size ``m``."""

    q: float
    c: float
    d: float
    m: int

    def __post_init__(self):
        if not self.d > 0.0:
            raise ValueError("scale d_m must be positive")


def normalizing_sequence(family: LinkFamily, m: int) -> NormalizingTriple:
    """Constants with ``m * G(c_m + d_m z) -> exp_q(z)`` as ``m -> inf``."""
    if int(m) != m or m < 2:
        raise ValueError(f"sample size m must be an integer >= 2, got {m!r}")
    m = int(m)
    logm = math.log(m)
    kind = family.kind
    if kind == "t-logistic":
        t = family.t
        if t == 1.0:
            kind = "logistic"
        elif t == 0.0:
            kind = "uniform"
    if kind in ("logistic", "gumbel-min"):
        return NormalizingTriple(1.0, -logm, 1.0, m)
    if kind == "probit":
        r = math.sqrt(2.0 * logm)
        c = -r + (math.log(logm) + math.log(4.0 * math.pi)) / (2.0 * r)
        return NormalizingTriple(1.0, c, 1.0 / r, m)
    if kind == "cauchit":
        return NormalizingTriple(2.0, -m / math.pi, m / math.pi, m)
    if kind == "uniform":
        # G(-1 + 2(1+z)/m) = (1+z)/m = exp_0(z)/m exactly
        return NormalizingTriple(0.0, -1.0 + 2.0 / m, 2.0 / m, m)
    t = family.t
    if t > 1.0:
        # G_t(z) ~ [(t-1)(-z)]^{-1/(t-1)} as z -> -inf
        s = m ** (t - 1.0)
        return NormalizingTriple(t, -s / (t - 1.0), s, m)
    z_low = -1.0 / (1.0 - t)
    if t > 0.0:
        # G_t(z) ~ [(1-t)(z - z_low)]^{1/(1-t)} as z -> z_low
        d = m ** (-(1.0 - t))
        return NormalizingTriple(t, z_low + d / (1.0 - t), d, m)
    # t < 0: G_t(z) ~ z - z_low, i.e. tail index 0
    return NormalizingTriple(0.0, z_low + 1.0 / m, 1.0 / m, m)


def verify_gev(family: LinkFamily, m: int, z_grid) -> np.ndarray:
    """Residuals ``m * G(c_m + d_m z) - exp_q(z)`` over ``z_grid``.

    Points where ``exp_q(z)`` is infinite have no finite residual and are
    reported as NaN.
    """
    trip = normalizing_sequence(family, m)
    z = np.atleast_1d(np.asarray(z_grid, dtype=float))
    target = np.asarray(exp_q(z, trip.q))
    lc = family.log_cdf(trip.c + trip.d * z)
    with np.errstate(invalid="ignore"):
        r = trip.m * np.exp(lc) - target
    return np.where(np.isfinite(target), r, np.nan)
