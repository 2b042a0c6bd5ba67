"""Deterministic design, Monte Carlo checks of the Poisson limit, and the
binomial-vs-point-process convergence tables.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from imbreg.deformed import LinkFamily, exp_q, normalizing_sequence
from imbreg.glm import BinaryDataset, NonSeparableViolation, fit_glm
from imbreg.io import format_csv
from imbreg.ppp import (
    CovariateDistribution,
    DivergenceDetected,
    EventSample,
    fit_additive_smoothing,
    theta_contains,
)

__all__ = [
    "ConvergenceReport",
    "PaperSampleSpec",
    "PoissonLimitReport",
    "RegionPartition",
    "generate_paper_sample",
    "make_rng",
    "poisson_pmf",
    "run_convergence_experiment",
    "simulate_imbalanced",
    "total_variation",
    "verify_poisson_limit",
]

POISSON_COLUMN = "Poisson process"
CHUNK_REPLICATIONS = 10_000


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a ``SeedSequence``."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class PaperSampleSpec:
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m:
            raise ValueError("n and m must be integers")
        if self.n < 2:
            raise ValueError(f"need n >= 2 positives, got {self.n}")
        if self.m < self.n + 2:
            raise ValueError(f"need m >= n + 2, got n={self.n}, m={self.m}")


def generate_paper_sample(spec: PaperSampleSpec) -> BinaryDataset:
    """Positives evenly spaced on [0.4, 0.8]; controls evenly spaced on [0, 1]."""
    n, m = int(spec.n), int(spec.m)
    pos = 0.4 + 0.4 * np.arange(n) / (n - 1)
    neg = np.arange(m - n) / (m - n - 1)
    y = np.concatenate([np.ones(n), np.zeros(m - n)])
    return BinaryDataset(np.concatenate([pos, neg]), y)


def _support_probabilities(family, F, alpha, beta, m):
    trip = normalizing_sequence(family, m)
    inside, _ = theta_contains(trip.q, F, alpha, beta) if trip.q > 1.0 else (True, 1.0)
    if not inside:
        raise ValueError("exp_q(alpha + beta'x) is infinite somewhere on the support")
    eta = float(alpha) + F.support @ np.atleast_1d(np.asarray(beta, dtype=float))
    return trip, np.asarray(family.cdf(trip.c + trip.d * eta))


def simulate_imbalanced(family: LinkFamily, F: CovariateDistribution, alpha, beta, m: int, rng_seed) -> BinaryDataset:
    """Draw ``m`` rows: ``X ~ F`` and ``Y ~ Bernoulli(G(c_m + d_m(alpha + beta'X)))``."""
    _, prob = _support_probabilities(family, F, alpha, beta, m)
    rng = make_rng(rng_seed)
    idx = rng.choice(F.J, size=int(m), p=F.weights)
    y = (rng.random(int(m)) < prob[idx]).astype(float)
    return BinaryDataset(F.support[idx], y)


@dataclass(frozen=True)
class RegionPartition:
    """Disjoint, non-empty sets of support indices."""

    regions: tuple

    def __post_init__(self):
        regs = tuple(tuple(sorted(int(j) for j in r)) for r in self.regions)
        seen = set()
        for r in regs:
            if not r:
                raise ValueError("regions must be non-empty")
            if len(set(r)) != len(r) or seen.intersection(r):
                raise ValueError("regions must be pairwise disjoint")
            seen.update(r)
        object.__setattr__(self, "regions", regs)

    @classmethod
    def halves(cls, J: int) -> "RegionPartition":
        """Lower and upper half of the support indices (one region if ``J == 1``)."""
        if J == 1:
            return cls(((0,),))
        k = J // 2
        return cls((tuple(range(k)), tuple(range(k, J))))

    def __len__(self):
        return len(self.regions)


def poisson_pmf(k, lam: float):
    k = np.asarray(k, dtype=float)
    if lam <= 0.0:
        return (k == 0).astype(float)
    return np.exp(k * math.log(lam) - lam - special.gammaln(k + 1.0))


def total_variation(counts, lam: float) -> float:
    """TV distance between the empirical law of ``counts`` and Poisson(``lam``)."""
    counts = np.asarray(counts, dtype=np.int64)
    kmax = int(max(counts.max(initial=0), math.ceil(lam + 12.0 * math.sqrt(lam) + 12.0)))
    emp = np.bincount(counts, minlength=kmax + 1)[: kmax + 1] / counts.size
    pois = poisson_pmf(np.arange(kmax + 1), lam)
    tail = max(0.0, 1.0 - pois.sum())
    return 0.5 * (float(np.abs(emp - pois).sum()) + tail)


@dataclass
class PoissonLimitReport:
    m: int
    replications: int
    seed: int
    intensities: list
    tv_distance: list
    empirical_pmf: list
    target_pmf: list
    mean_counts: list
    var_counts: list
    correlation: list
    method: str = "multinomial"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _chunk_counts(seed_seq, reps, cell_probs, m, method, prob_support, region_of, J, weights):
    rng = make_rng(seed_seq)
    if method == "multinomial":
        draws = rng.multinomial(m, cell_probs, size=reps)
        return draws[:, :-1].T
    # explicit rows: X_i ~ F, Y_i ~ Bernoulli, then count positives per region
    out = np.zeros((len(cell_probs) - 1, reps), dtype=np.int64)
    for r in range(reps):
        idx = rng.choice(J, size=m, p=weights)
        hit = idx[rng.random(m) < prob_support[idx]]
        reg = region_of[hit]
        out[:, r] = np.bincount(reg[reg >= 0], minlength=out.shape[0])
    return out


def verify_poisson_limit(
    family: LinkFamily,
    F: CovariateDistribution,
    alpha,
    beta,
    partition: RegionPartition | None = None,
    m: int = 100_000,
    replications: int = 100_000,
    rng_seed: int = 0,
    *,
    method: str = "multinomial",
    workers: int = 1,
) -> PoissonLimitReport:
    """Compare region counts of positives with independent Poisson laws.

    For ``m`` i.i.d. rows the vector of positive counts over disjoint
    regions (plus "everything else") is exactly multinomial with cell
    probabilities ``sum_{xi in A} p_xi G(c_m + d_m(alpha + beta'xi))``;
    ``method="multinomial"`` samples that vector directly, while
    ``method="rows"`` simulates every row and is only practical for small
    ``m``.  Replications are split into fixed chunks with spawned seeds, so
    results do not depend on ``workers``.
    """
    if method not in ("multinomial", "rows"):
        raise ValueError(f"unknown method {method!r}")
    partition = partition or RegionPartition.halves(F.J)
    trip, prob = _support_probabilities(family, F, alpha, beta, m)
    region_of = np.full(F.J, -1, dtype=np.int64)
    cells = []
    for k, reg in enumerate(partition.regions):
        if max(reg) >= F.J:
            raise IndexError("region index outside the support")
        region_of[list(reg)] = k
        cells.append(float(np.sum(F.weights[list(reg)] * prob[list(reg)])))
    cells.append(max(0.0, 1.0 - sum(cells)))
    cell_probs = np.array(cells)

    # only the regions need finite intensity, not the whole support
    eta = alpha + F.support @ np.atleast_1d(np.asarray(beta, dtype=float))
    point_lam = F.weights * exp_q(eta, trip.q)
    lam = [float(np.sum(point_lam[list(reg)])) for reg in partition.regions]
    if not all(math.isfinite(v) for v in lam):
        raise ValueError("intensity is infinite on one of the regions")

    n_chunks = max(1, math.ceil(replications / CHUNK_REPLICATIONS))
    sizes = [CHUNK_REPLICATIONS] * (n_chunks - 1) + [replications - CHUNK_REPLICATIONS * (n_chunks - 1)]
    seqs = np.random.SeedSequence(rng_seed).spawn(n_chunks)
    args = [(s, r, cell_probs, int(m), method, prob, region_of, F.J, F.weights) for s, r in zip(seqs, sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda a: _chunk_counts(*a), args))
    else:
        parts = [_chunk_counts(*a) for a in args]
    counts = np.concatenate(parts, axis=1)

    tv, emp, target = [], [], []
    for k, lam_k in enumerate(lam):
        c = counts[k]
        tv.append(total_variation(c, lam_k))
        kmax = int(c.max(initial=0))
        emp.append((np.bincount(c, minlength=kmax + 1) / c.size).tolist())
        target.append(poisson_pmf(np.arange(kmax + 1), lam_k).tolist())
    sd = counts.std(axis=1)
    corr = np.eye(len(lam))
    live = sd > 0
    if live.sum() > 1:
        corr[np.ix_(live, live)] = np.corrcoef(counts[live])
    return PoissonLimitReport(
        m=int(m),
        replications=int(replications),
        seed=int(rng_seed),
        intensities=lam,
        tv_distance=tv,
        empirical_pmf=emp,
        target_pmf=target,
        mean_counts=counts.mean(axis=1).tolist(),
        var_counts=counts.var(axis=1).tolist(),
        correlation=corr.tolist(),
        method=method,
    )


# --------------------------------------------------------------------------
# convergence tables
# --------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    """Normalised estimates ``(alpha, beta)`` per sample size and model.

    ``rows[i][col]`` is an ``(alpha, beta)`` pair, or a string describing why
    the fit failed.
    """

    q: float
    n: int
    m_values: list
    columns: list
    rows: list = field(default_factory=list)
    base_measure: str = "all"
    kappa: float = 0.0

    def cell(self, m, column):
        return self.rows[self.m_values.index(m)][column]

    def to_csv(self) -> str:
        header = ["m"]
        for col in self.columns:
            key = col.replace(" ", "_")
            header += [f"{key}_alpha", f"{key}_beta"]
        out = []
        for m, row in zip(self.m_values, self.rows):
            line = [str(m)]
            for col in self.columns:
                v = row[col]
                line += [f"{v[0]:.10f}", f"{v[1]:.10f}"] if isinstance(v, tuple) else [v, v]
            out.append(line)
        return format_csv(header, out)

    def to_text(self, digits: int = 4) -> str:
        width = digits + 4
        head1 = f"{'':>8} |" + "|".join(f"{c:^{2 * width + 1}}" for c in self.columns) + "|"
        head2 = f"{'m':>8} |" + "|".join(f"{'alpha':>{width}} {'beta':>{width}}" for _ in self.columns) + "|"
        rule = "-" * len(head1)
        lines = [rule, head1, head2, rule]
        for m, row in zip(self.m_values, self.rows):
            cells = []
            for col in self.columns:
                v = row[col]
                if isinstance(v, tuple):
                    cells.append(f"{v[0]:>{width}.{digits}f} {v[1]:>{width}.{digits}f}")
                else:
                    cells.append(f"{v[: 2 * width + 1]:^{2 * width + 1}}")
            exp = int(round(math.log10(m))) if m > 0 and 10 ** round(math.log10(m)) == m else None
            label = f"10^{exp}" if exp is not None else str(m)
            lines.append(f"{label:>8} |" + "|".join(cells) + "|")
        lines.append(rule)
        return "\n".join(lines) + "\n"


def _base_measure(data: BinaryDataset, which: str) -> CovariateDistribution:
    if which == "all":
        return CovariateDistribution.empirical(data.X)
    if which == "controls":
        return CovariateDistribution.empirical(data.X[data.y == 0])
    raise ValueError(f"base measure must be 'all' or 'controls', got {which!r}")


def _experiment_row(q, links, n, m, kappa, base_measure):
    data = generate_paper_sample(PaperSampleSpec(n, m))
    F = _base_measure(data, base_measure)
    events = EventSample(data.X[data.y == 1])
    row = {}
    try:
        fit = fit_additive_smoothing(q, F, events, kappa, allow_off_support=base_measure != "all")
        row[POISSON_COLUMN] = (fit.alpha, float(fit.beta[0]))
    except DivergenceDetected as exc:
        row[POISSON_COLUMN] = f"diverged: {exc}"
    for link in links:
        try:
            g = fit_glm(data, link, kappa)
            c = g.normalized(normalizing_sequence(link, m))
            row[link.link_name] = (c.alpha, float(c.beta[0]))
        except NonSeparableViolation as exc:
            row[link.link_name] = f"separated: {exc}"
    return row


def run_convergence_experiment(
    q: float,
    links,
    n: int = 10,
    m_values=(10**2, 10**3, 10**4, 10**5),
    kappa: float = 0.0,
    *,
    base_measure: str = "all",
    workers: int = 1,
) -> ConvergenceReport:
    """Fit the point process and each binomial link on the fixed design per ``m``.

    The point-process base measure is the empirical distribution of all
    ``m`` covariates (``base_measure="all"``) or of the controls only.
    """
    links = [LinkFamily.parse(lk) if isinstance(lk, str) else lk for lk in links]
    for link in links:
        if link.tail_index != q:
            raise ValueError(f"link {link.tag} has tail index {link.tail_index:g}, not q={q:g}")
    m_values = [int(m) for m in m_values]
    if any(b <= a for a, b in zip(m_values, m_values[1:])):
        raise ValueError("m values must be strictly increasing")
    jobs = [(q, links, n, m, kappa, base_measure) for m in m_values]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda a: _experiment_row(*a), jobs))
    else:
        rows = [_experiment_row(*a) for a in jobs]
    columns = [POISSON_COLUMN] + [lk.link_name for lk in links]
    return ConvergenceReport(q, n, m_values, columns, rows, base_measure, kappa)


def gev_table(family: LinkFamily, m_values, z_grid):
    """Residual table ``{m: [r(z) ...]}`` built from :func:`imbreg.deformed.verify_gev`."""
    from imbreg.deformed import verify_gev

    return {int(m): verify_gev(family, int(m), z_grid).tolist() for m in m_values}


def expected_positive_count(family: LinkFamily, F: CovariateDistribution, alpha, beta, m: int) -> float:
    """Exact Bernoulli mean of the number of positives among ``m`` rows."""
    _, prob = _support_probabilities(family, F, alpha, beta, m)
    return float(m * F.weights @ prob)


def limit_total_intensity(q, F, alpha, beta) -> float:
    eta = float(alpha) + F.support @ np.atleast_1d(np.asarray(beta, dtype=float))
    return float(F.weights @ exp_q(eta, q))
