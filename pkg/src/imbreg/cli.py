"""Command-line entry point: ``imbreg <command> [options]``.

Every option may also come from a YAML config file (``--config``); keys are
option names with dashes or underscores, optionally grouped under a section
named after the command (``table``, ``fit-glm``, ``fit-ppp``, ``verify-gev``,
``verify-poisson``, ``simulate``).  Flags on the command line win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from imbreg.deformed import LinkFamily, normalizing_sequence, verify_gev
from imbreg.glm import BinaryDataset, MissingClassError, NonSeparableViolation, fit_glm
from imbreg.io import DataError, atomic_write_text, dumps_json
from imbreg.ppp import (
    CovariateDistribution,
    DivergenceDetected,
    EventSample,
    HyperplaneSupportError,
    fit_additive_smoothing,
)
from imbreg.simlab import (
    PaperSampleSpec,
    RegionPartition,
    generate_paper_sample,
    run_convergence_experiment,
    simulate_imbalanced,
    verify_poisson_limit,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_MISSING_CLASS = 5
EXIT_HYPERPLANE = 6

PAPER_M = [10**2, 10**3, 10**4, 10**5]
PRESETS = {
    "table1": {"q": 1.0, "link": ["logit", "probit", "cloglog"], "n": 10, "m": PAPER_M, "kappa": 0.0},
    "table2": {"q": 2.0, "link": ["cauchit"], "n": 10, "m": PAPER_M, "kappa": 0.0},
}
DEFAULT_GEV_Z = [-1.0, -0.5, 0.0]


class ConfigError(ValueError):
    """Invalid command-line or config-file settings."""


# --------------------------------------------------------------------------
# option parsing helpers
# --------------------------------------------------------------------------


def _int_like(text) -> int:
    """Parse ``100``, ``1e5`` or ``10**5`` style sizes."""
    if isinstance(text, (int, np.integer)):
        return int(text)
    s = str(text).strip()
    try:
        if "**" in s:
            b, e = s.split("**")
            v = float(b) ** float(e)
        else:
            v = float(s)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None
    if not np.isfinite(v) or v != int(v):
        raise ConfigError(f"expected an integer, got {text!r}")
    return int(v)


def _listify(value) -> list:
    if value is None:
        return []
    items = value if isinstance(value, (list, tuple)) else [value]
    out = []
    for item in items:
        if isinstance(item, str):
            out += [s for s in (x.strip() for x in item.split(",")) if s]
        else:
            out.append(item)
    return out


def _floats(value) -> list[float]:
    try:
        return [float(v) for v in _listify(value)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _links(value) -> list[LinkFamily]:
    try:
        return [LinkFamily.parse(str(v)) for v in _listify(value)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_config(path, command: str) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    sections = {"table", "fit-glm", "fit-ppp", "verify-gev", "verify-poisson", "simulate"}
    norm = lambda d: {str(k).replace("-", "_"): v for k, v in d.items()}  # noqa: E731
    merged = norm({k: v for k, v in raw.items() if k not in sections and not isinstance(v, dict)})
    section = raw.get(command)
    if isinstance(section, dict):
        merged.update(norm(section))
    return merged


def _settings(args, command: str, defaults: dict) -> dict:
    """Layer built-in defaults, preset, config file and explicit flags."""
    cfg = _load_config(getattr(args, "config", None), command)
    out = dict(defaults)
    preset = getattr(args, "preset", None) or cfg.get("preset")
    if preset is not None:
        if command != "table" or preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (choices: {', '.join(PRESETS)})")
        out.update(PRESETS[preset])
    out.update(cfg)
    for key, val in vars(args).items():
        if val is not None and key not in ("func", "command", "config", "verify_command"):
            out[key] = val
    return out


def _existing(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"missing required {what}")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _emit(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _kappa(s) -> float:
    k = float(s["kappa"])
    if not k >= 0.0:
        raise ConfigError(f"kappa must be non-negative, got {k}")
    return k


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_table(args) -> int:
    s = _settings(args, "table", {"kappa": 0.0, "n": 10, "base_measure": "all", "workers": 1})
    links = _links(s.get("link"))
    if "q" not in s:
        if not links:
            raise ConfigError("give --preset, --q or at least one --link")
        s["q"] = links[0].tail_index
    m_values = [_int_like(v) for v in _listify(s.get("m"))] or PAPER_M
    if any(b <= a for a, b in zip(m_values, m_values[1:])):
        raise ConfigError(f"m values must be strictly increasing, got {m_values}")
    try:
        for m in m_values:
            PaperSampleSpec(_int_like(s["n"]), m)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        report = run_convergence_experiment(
            float(s["q"]), links, n=_int_like(s["n"]), m_values=m_values, kappa=_kappa(s),
            base_measure=s["base_measure"], workers=int(s["workers"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    text = report.to_text()
    out = s.get("out")
    if out is None:
        sys.stdout.write(text)
    else:
        out = Path(out)
        atomic_write_text(out / "table.csv", report.to_csv())
        atomic_write_text(out / "table.txt", text)
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fit_glm(args) -> int:
    s = _settings(args, "fit-glm", {"kappa": 0.0})
    path = _existing(s.get("data"), "--data CSV")
    links = _links(s.get("link"))
    if len(links) != 1:
        raise ConfigError("fit-glm needs exactly one --link")
    link = links[0]
    data = BinaryDataset.from_csv(path)
    try:
        fit = fit_glm(data, link, _kappa(s))
    except NonSeparableViolation as exc:
        print(f"imbreg: fit diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    result = fit.to_dict()
    if data.m >= 2:
        trip = normalizing_sequence(link, data.m)
        norm = fit.normalized(trip)
        result["normalized"] = {"q": trip.q, "c_m": trip.c, "d_m": trip.d,
                                "alpha": norm.alpha, "beta": norm.beta.tolist()}
    _emit(dumps_json(result), s.get("out"))
    return EXIT_OK


def cmd_fit_ppp(args) -> int:
    s = _settings(args, "fit-ppp", {"kappa": 1.0, "q": 1.0})
    kappa = _kappa(s)
    if s.get("data") is not None:
        data = BinaryDataset.from_csv(_existing(s["data"], "--data CSV"))
        F = CovariateDistribution.empirical(data.X)
        events = EventSample(data.X[data.y == 1])
    else:
        F = CovariateDistribution.from_csv(_existing(s.get("support"), "--support CSV"))
        events = EventSample.from_csv(_existing(s.get("events"), "--events CSV"), p=F.p)
    try:
        fit = fit_additive_smoothing(float(s["q"]), F, events, kappa)
    except DivergenceDetected as exc:
        print(f"imbreg: kappa = {kappa:g}, maximum likelihood estimate may not exist: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    result = fit.to_dict()
    result["intensities"] = fit.model.point_intensities().tolist()
    if fit.notes:
        result["notes"] = list(fit.notes)
    _emit(dumps_json(result), s.get("out"))
    return EXIT_OK


def cmd_verify_gev(args) -> int:
    s = _settings(args, "verify-gev", {"z": DEFAULT_GEV_Z})
    links = _links(s.get("link"))
    if not links:
        raise ConfigError("verify gev needs at least one --link")
    m_values = [_int_like(v) for v in _listify(s.get("m"))] or [10**3, 10**4, 10**5, 10**6]
    if any(m < 2 for m in m_values):
        raise ConfigError("m must be at least 2")
    z = _floats(s["z"])
    report = {"z": z, "links": {}}
    for link in links:
        rows = {}
        for m in m_values:
            trip = normalizing_sequence(link, m)
            r = verify_gev(link, m, z)
            rows[str(m)] = {"q": trip.q, "c_m": trip.c, "d_m": trip.d,
                            "residual": [None if not np.isfinite(v) else float(v) for v in r]}
        report["links"][link.tag] = rows
    _emit(dumps_json(report), s.get("out"))
    return EXIT_OK


def _support_or_grid(s) -> CovariateDistribution:
    if s.get("support") is not None:
        return CovariateDistribution.from_csv(_existing(s["support"], "--support CSV"))
    grid = np.linspace(0.0, 1.0, 11)[:, None]
    return CovariateDistribution(grid, np.full(11, 1.0 / 11))


def _regions(spec, J: int) -> RegionPartition:
    """``"0-4;5-10"`` or a list of index lists; ``None`` gives support halves."""
    if spec is None:
        return RegionPartition.halves(J)
    try:
        if isinstance(spec, str):
            regions = []
            for block in spec.split(";"):
                idx = []
                for part in block.split(","):
                    part = part.strip()
                    if "-" in part:
                        lo, hi = part.split("-")
                        idx += list(range(int(lo), int(hi) + 1))
                    elif part:
                        idx.append(int(part))
                regions.append(idx)
        else:
            regions = [[int(j) for j in r] for r in spec]
        part = RegionPartition(tuple(tuple(r) for r in regions))
    except ValueError as exc:
        raise ConfigError(f"bad region specification {spec!r}: {exc}") from None
    if max(max(r) for r in part.regions) >= J or min(min(r) for r in part.regions) < 0:
        raise ConfigError(f"region indices must lie in 0..{J - 1}")
    return part


def cmd_verify_poisson(args) -> int:
    s = _settings(args, "verify-poisson", {
        "link": "logistic", "alpha": 0.0, "beta": [0.0], "m": 10**5, "replications": 10**5,
        "seed": 0, "workers": 1, "method": "multinomial",
    })
    links = _links(s["link"])
    if len(links) != 1:
        raise ConfigError("verify poisson needs exactly one --link")
    F = _support_or_grid(s)
    beta = _floats(s["beta"])
    if len(beta) != F.p:
        raise ConfigError(f"beta has {len(beta)} entries but the support has dimension {F.p}")
    m_list = _listify(s["m"])
    if len(m_list) != 1:
        raise ConfigError("verify poisson takes a single --m")
    try:
        rep = verify_poisson_limit(
            links[0], F, float(s["alpha"]), np.array(beta), _regions(s.get("regions"), F.J),
            m=_int_like(m_list[0]), replications=_int_like(s["replications"]), rng_seed=int(s["seed"]),
            method=s["method"], workers=int(s["workers"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = rep.to_dict()
    out["link"] = links[0].tag
    _emit(dumps_json(out), s.get("out"))
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = _settings(args, "simulate", {"design": "random", "link": "logistic", "alpha": 0.0,
                                     "beta": [0.0], "m": 1000, "n": 10, "seed": 0})
    m_list = _listify(s["m"])
    if len(m_list) != 1:
        raise ConfigError("simulate takes a single --m")
    m = _int_like(m_list[0])
    if s["design"] == "paper":
        try:
            data = generate_paper_sample(PaperSampleSpec(_int_like(s["n"]), m))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif s["design"] == "random":
        links = _links(s["link"])
        if len(links) != 1:
            raise ConfigError("simulate needs exactly one --link")
        F = _support_or_grid(s)
        beta = _floats(s["beta"])
        if len(beta) != F.p:
            raise ConfigError(f"beta has {len(beta)} entries but the support has dimension {F.p}")
        if m < 2:
            raise ConfigError("m must be at least 2")
        try:
            data = simulate_imbalanced(links[0], F, float(s["alpha"]), np.array(beta), m, int(s["seed"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError(f"design must be 'paper' or 'random', got {s['design']!r}")
    _emit(data.to_csv(), s.get("out"))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, link=True, q=False, kappa=False, m=False, n=False, seed=False):
    p.add_argument("--config", help="YAML file with option values")
    p.add_argument("--out", help="output file (directory for 'table'); stdout if omitted")
    if link:
        p.add_argument("--link", "--links", dest="link", action="append", help="link tag, e.g. logit, probit, cauchit, t-logistic:2")
    if q:
        p.add_argument("--q", type=float, help="tail index of the point-process model")
    if kappa:
        p.add_argument("--kappa", type=float, help="additive-smoothing weight (>= 0)")
    if m:
        p.add_argument("--m", action="append", help="sample size(s); accepts 1e5 or comma lists")
    if n:
        p.add_argument("--n", help="number of positives in the fixed design")
    if seed:
        p.add_argument("--seed", type=int, help="random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imbreg", description="Imbalanced binary regression and its point-process limit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table", help="convergence table of normalised estimates")
    _common(p, q=True, kappa=True, m=True, n=True)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--base-measure", choices=["all", "controls"], help="covariates forming F (default all)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("fit-glm", help="fit a binomial regression to a CSV with a 'y' column")
    _common(p, kappa=True)
    p.add_argument("--data", help="CSV with covariate columns and a 0/1 'y' column")
    p.set_defaults(func=cmd_fit_glm)

    p = sub.add_parser("fit-ppp", help="additive-smoothing fit of the point-process model")
    _common(p, link=False, q=True, kappa=True)
    p.add_argument("--support", help="CSV of support points with a final 'weight' column")
    p.add_argument("--events", help="CSV of event points (rows of the support)")
    p.add_argument("--data", help="binary CSV instead of --support/--events (F = empirical covariates)")
    p.set_defaults(func=cmd_fit_ppp)

    p = sub.add_parser("verify", help="numerical checks of the limit theorems")
    vsub = p.add_subparsers(dest="verify_command", required=True)
    g = vsub.add_parser("gev", help="residuals m G(c_m + d_m z) - exp_q(z)")
    _common(g, m=True)
    g.add_argument("--z", action="append", help="evaluation points (comma lists allowed)")
    g.set_defaults(func=cmd_verify_gev)
    v = vsub.add_parser("poisson", help="Monte Carlo comparison of region counts with Poisson laws")
    _common(v, m=True, seed=True)
    v.add_argument("--alpha", type=float)
    v.add_argument("--beta", action="append")
    v.add_argument("--support", help="CSV of support points with a final 'weight' column")
    v.add_argument("--regions", help="support index sets, e.g. '0-4;5-10'")
    v.add_argument("--replications", help="number of Monte Carlo replications")
    v.add_argument("--workers", type=int)
    v.add_argument("--method", choices=["multinomial", "rows"])
    v.set_defaults(func=cmd_verify_poisson)

    p = sub.add_parser("simulate", help="write a simulated or fixed-design binary dataset")
    _common(p, m=True, n=True, seed=True)
    p.add_argument("--design", choices=["random", "paper"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", action="append")
    p.add_argument("--support", help="CSV of support points with a final 'weight' column")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"imbreg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingClassError as exc:
        print(f"imbreg: data error: {exc}", file=sys.stderr)
        return EXIT_MISSING_CLASS
    except HyperplaneSupportError as exc:
        print(f"imbreg: data error: {exc}", file=sys.stderr)
        return EXIT_HYPERPLANE
    except DataError as exc:
        print(f"imbreg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"imbreg: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
