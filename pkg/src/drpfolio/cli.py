"""Command-line interface.

Subcommands: ``solve`` (one robust selection), ``sensitivity`` (parameter
grid sweep), ``bench`` (exact vs tabu vs hybrid comparison across radius
scalings), ``backtest`` (rolling-window strategy comparison), and
``worstcase`` (adversarial distribution for fixed weights).

Every flag can also be supplied through a YAML file via ``--config``;
explicit flags win over the file, which wins over built-in defaults.
All outputs embed the fully resolved configuration (a ``config`` field in
JSON payloads, a ``# config: ...`` comment line in CSVs), so a result
file is reproducible from itself.  Reruns with identical inputs produce
byte-identical backtest outputs; timing fields appear only where noted.

Exit codes: 0 success, 2 configuration/validation error, 3 solver
failure, 4 data error.
"""
from __future__ import annotations

import csv
import functools
import json
import os
import sys
import time

import click
import numpy as np
import yaml

from . import datasets
from .backtest import BENCHMARK_NAME, metrics_table, run_backtest
from .core import AversionProfile, DrpInstance, dual_certificate
from .data import WindowPlan, load_returns, rolling_windows
from .estimators import (
    DistributionallyRobust,
    EqualWeight,
    MarketValueWeight,
    MeanVariance,
    RiskParity,
)
from .exceptions import (
    DataError,
    DrpfolioError,
    MissingFileError,
    SolverError,
    ValidationError,
)
from .search import TabuConfig, enumerate_exact, hybrid_search, tabu_search

ALGORITHMS = ("exact", "tabu", "hybrid")
STRATEGY_NAMES = ("equal", "market", "riskparity", "meanvariance", "drp")
DEFAULT_ITERS = {"tabu": 2000, "hybrid": 300, "exact": 0}


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SolverError as exc:
            _fail(str(exc), 3)
        except DataError as exc:
            _fail(str(exc), 4)
        except ValidationError as exc:
            _fail(str(exc), 2)
        except DrpfolioError as exc:
            _fail(str(exc), 2)
    return wrapper


def _load_config_file(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise MissingFileError(f"config file not found: {path}")
    with open(path) as fh:
        loaded = yaml.safe_load(fh) or {}
    if not isinstance(loaded, dict):
        raise ValidationError("config file must contain a mapping")
    return loaded


def _resolve(flags: dict, config: dict, defaults: dict) -> dict:
    """flags > config file > defaults, key by key."""
    out = {}
    for key, default in defaults.items():
        if flags.get(key) is not None:
            out[key] = flags[key]
        elif config.get(key) is not None:
            out[key] = config[key]
        else:
            out[key] = default
    return out


def _require(cond: bool, message: str):
    if not cond:
        raise ValidationError(message)


def _validate_profile_fields(cfg: dict):
    _require(float(cfg["phi"]) >= 0.0, "--phi must be non-negative")
    _require(float(cfg["risk_aversion"]) > 0.0,
             "--risk-aversion must be positive")
    _require(float(cfg["theta"]) >= 0.0, "--theta must be non-negative")
    _require(int(cfg["seed"]) >= 0, "--seed must be non-negative")
    _require(int(cfg["threads"]) >= 1, "--threads must be at least 1")
    _require(cfg["algo"] in ALGORITHMS,
             f"--algo must be one of {', '.join(ALGORITHMS)}")
    if cfg.get("iters") is not None:
        _require(int(cfg["iters"]) >= 1, "--iters must be at least 1")


def _parse_ref_point(value, allow_index: bool = False):
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    if text == "index":
        _require(allow_index,
                 "--ref-point 'index' is only meaningful for backtests")
        return "index"
    try:
        return float(text)
    except ValueError:
        raise ValidationError(
            f"--ref-point must be a number{' or index' if allow_index else ''},"
            f" got {value!r}"
        ) from None


def _load_scenarios(cfg):
    if cfg["data"] is None:
        return datasets.load_bundled()
    return load_returns(cfg["data"])


def _profile(cfg, ref_point=None) -> AversionProfile:
    ref = cfg["ref_point"] if ref_point is None else ref_point
    return AversionProfile(
        loss_aversion=float(cfg["phi"]),
        risk_aversion=float(cfg["risk_aversion"]),
        ambiguity_radius=float(cfg["theta"]),
        reference_point=float(ref),
    )


def _search(inst, cfg, theta_override=None):
    algo = cfg["algo"]
    iters = cfg.get("iters")
    iters = DEFAULT_ITERS[algo] if iters is None else int(iters)
    threads = int(cfg["threads"])
    if algo == "exact":
        return enumerate_exact(inst, threads=threads)
    swaps = inst.k * (inst.n_assets - inst.k)
    config = TabuConfig(
        neighborhood_size=min(4, max(swaps, 1)),
        max_iterations=max(iters, 1),
        seed=int(cfg["seed"]),
    )
    if algo == "tabu":
        return tabu_search(inst, config, threads=threads)
    return hybrid_search(inst, config, threads=threads)


def _config_echo(cfg: dict) -> dict:
    return {key: cfg[key] for key in sorted(cfg)}


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _out_dir(cfg) -> str:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    return out


def _instance(cfg, scenarios) -> DrpInstance:
    _require(cfg["k"] is not None, "--k is required")
    k = int(cfg["k"])
    _require(1 <= k <= scenarios.n_assets,
             f"--k must be in 1..{scenarios.n_assets}")
    return DrpInstance.from_scenarios(scenarios, _profile(cfg), k)


_COMMON_DEFAULTS = {
    "data": None,
    "k": None,
    "phi": 1.5,
    "risk_aversion": 1.5,
    "theta": 0.003,
    "ref_point": 0.001,
    "algo": "hybrid",
    "iters": None,
    "seed": 0,
    "threads": 1,
    "out": ".",
}


def _common_options(fn):
    decorators = [
        click.option("--config", "config_path", type=str, default=None,
                     help="YAML file with defaults for any flag."),
        click.option("--data", type=str, default=None,
                     help="Returns CSV (default: bundled synthetic data)."),
        click.option("--k", type=int, default=None,
                     help="Number of assets to hold."),
        click.option("--phi", type=float, default=None,
                     help="Loss-aversion kink steepness (default 1.5)."),
        click.option("--risk-aversion", type=float, default=None,
                     help="Variance penalty coefficient (default 1.5)."),
        click.option("--theta", type=float, default=None,
                     help="Wasserstein ambiguity radius (default 0.003)."),
        click.option("--ref-point", type=str, default=None,
                     help="Reference return (default 0.001; backtests also "
                          "accept 'index')."),
        click.option("--algo", type=str, default=None,
                     help="Search algorithm: exact, tabu, or hybrid."),
        click.option("--iters", type=int, default=None,
                     help="Search iterations (default: 2000 tabu, 300 "
                          "hybrid)."),
        click.option("--seed", type=int, default=None,
                     help="Root random seed (default 0)."),
        click.option("--threads", type=int, default=None,
                     help="Worker threads for neighbor evaluation "
                          "(default 1)."),
        click.option("--out", type=str, default=None,
                     help="Output directory (default: current)."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _gather(flags: dict, extra_defaults=None) -> dict:
    config = _load_config_file(flags.pop("config_path", None))
    defaults = dict(_COMMON_DEFAULTS)
    if extra_defaults:
        defaults.update(extra_defaults)
    return _resolve(flags, config, defaults)


@click.group()
def main():
    """Distributionally robust portfolio selection toolkit."""


# ---------------------------------------------------------------------------


@main.command()
@_common_options
@_guarded
def solve(**flags):
    """Solve one robust selection problem and write solve.json."""
    cfg = _gather(flags)
    cfg["ref_point"] = _parse_ref_point(cfg["ref_point"])
    _validate_profile_fields(cfg)
    _require(cfg["k"] is not None, "--k is required")
    scenarios = _load_scenarios(cfg)
    inst = _instance(cfg, scenarios)
    start = time.perf_counter()
    result = _search(inst, cfg)
    elapsed = time.perf_counter() - start
    cert = dual_certificate(inst, result.selection.weights)
    payload = {
        "weights": [float(v) for v in result.selection.weights],
        "support": list(result.selection.support),
        "support_assets": [scenarios.asset_ids[j]
                           for j in result.selection.support],
        "objective": result.objective,
        "dual": {
            "lam": cert.lam,
            "nu": [float(v) for v in cert.nu],
            "value": cert.value,
        },
        "evaluations": result.evaluations,
        "elapsed_seconds": elapsed,
        "config": _config_echo(cfg),
    }
    path = os.path.join(_out_dir(cfg), "solve.json")
    _write_json(path, payload)
    click.echo(json.dumps(payload, indent=2))


# ---------------------------------------------------------------------------


def _parse_grid(spec: str):
    try:
        name, rhs = spec.split("=", 1)
    except ValueError:
        raise ValidationError(
            f"grid spec {spec!r} must look like name=lo:hi:count or "
            "name=v1,v2,..."
        ) from None
    name = name.strip()
    mapping = {"phi": "phi", "risk_aversion": "risk_aversion",
               "theta": "theta", "ref_point": "ref_point"}
    if name not in mapping:
        raise ValidationError(
            f"grid parameter must be one of {', '.join(mapping)}, got "
            f"{name!r}"
        )
    rhs = rhs.strip()
    try:
        if ":" in rhs:
            lo, hi, count = rhs.split(":")
            values = np.linspace(float(lo), float(hi), int(count))
        else:
            values = np.array([float(v) for v in rhs.split(",")])
    except ValueError:
        raise ValidationError(f"could not parse grid values in {spec!r}") \
            from None
    if values.size < 1:
        raise ValidationError(f"grid {spec!r} is empty")
    return name, [float(v) for v in values]


@main.command()
@_common_options
@click.option("--grid", "grids", type=str, multiple=True,
              help="Parameter grid, e.g. 'theta=0.001:0.009:5' or "
                   "'phi=1,2,3'. Repeatable; grids combine as a cartesian "
                   "product.")
@_guarded
def sensitivity(grids, **flags):
    """Sweep profile parameters and record the objective per grid point."""
    cfg = _gather(flags)
    cfg["ref_point"] = _parse_ref_point(cfg["ref_point"])
    _validate_profile_fields(cfg)
    _require(cfg["k"] is not None, "--k is required")
    _require(len(grids) >= 1, "provide at least one --grid")
    parsed = [_parse_grid(g) for g in grids]
    scenarios = _load_scenarios(cfg)

    points = [{}]
    for name, values in parsed:
        points = [dict(p, **{name: v}) for p in points for v in values]

    rows = []
    for point in points:
        local = dict(cfg, **point)
        row = {
            "phi": float(local["phi"]),
            "risk_aversion": float(local["risk_aversion"]),
            "theta": float(local["theta"]),
            "ref_point": float(local["ref_point"]),
            "objective": "",
            "dual_value": "",
            "support": "",
            "error": "",
        }
        try:
            inst = _instance(local, scenarios)
            result = _search(inst, local)
            cert = dual_certificate(inst, result.selection.weights)
            row["objective"] = repr(result.objective)
            row["dual_value"] = repr(cert.value)
            row["support"] = " ".join(str(j)
                                      for j in result.selection.support)
        except (SolverError, ValidationError) as exc:
            row["error"] = str(exc)
        rows.append(row)

    path = os.path.join(_out_dir(cfg), "sensitivity.csv")
    fieldnames = ["phi", "risk_aversion", "theta", "ref_point", "objective",
                  "dual_value", "support", "error"]
    with open(path, "w", newline="") as fh:
        fh.write("# config: "
                 + json.dumps(_config_echo(cfg), sort_keys=True) + "\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} grid points to {path}")


# ---------------------------------------------------------------------------


@main.command()
@_common_options
@click.option("--theta-scales", type=str, default=None,
              help="Comma-separated multipliers applied to --theta "
                   "(default 1,2,3,4,5).")
@_guarded
def bench(theta_scales, **flags):
    """Compare exact, tabu, and hybrid across ambiguity-radius scalings."""
    cfg = _gather(flags, {"theta_scales": "1,2,3,4,5"})
    if theta_scales is not None:
        cfg["theta_scales"] = theta_scales
    cfg["ref_point"] = _parse_ref_point(cfg["ref_point"])
    _validate_profile_fields(cfg)
    _require(cfg["k"] is not None, "--k is required")
    try:
        scales = [float(v) for v in str(cfg["theta_scales"]).split(",")]
    except ValueError:
        raise ValidationError(
            f"could not parse --theta-scales {cfg['theta_scales']!r}"
        ) from None
    _require(all(v > 0 for v in scales), "scale factors must be positive")
    scenarios = _load_scenarios(cfg)

    rows = []
    for scale in scales:
        local = dict(cfg, theta=float(cfg["theta"]) * scale)
        inst = _instance(local, scenarios)
        exact_obj = None
        try:
            t0 = time.perf_counter()
            exact = enumerate_exact(inst, threads=int(cfg["threads"]))
            exact_elapsed = time.perf_counter() - t0
            exact_obj = exact.objective
            rows.append({"scale": scale, "theta": local["theta"],
                         "algo": "exact", "objective": repr(exact.objective),
                         "gap": repr(0.0),
                         "evaluations": exact.evaluations,
                         "elapsed_seconds": exact_elapsed})
        except DrpfolioError as exc:
            click.echo(f"note: exact enumeration skipped: {exc}", err=True)
        for algo in ("tabu", "hybrid"):
            t0 = time.perf_counter()
            result = _search(inst, dict(local, algo=algo))
            elapsed = time.perf_counter() - t0
            gap = "" if exact_obj is None else repr(exact_obj
                                                    - result.objective)
            rows.append({"scale": scale, "theta": local["theta"],
                         "algo": algo, "objective": repr(result.objective),
                         "gap": gap, "evaluations": result.evaluations,
                         "elapsed_seconds": elapsed})

    path = os.path.join(_out_dir(cfg), "bench.csv")
    fieldnames = ["scale", "theta", "algo", "objective", "gap",
                  "evaluations", "elapsed_seconds"]
    with open(path, "w", newline="") as fh:
        fh.write("# config: "
                 + json.dumps(_config_echo(cfg), sort_keys=True) + "\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        click.echo(f"theta x{row['scale']:g} {row['algo']:>7}: "
                   f"objective {row['objective']} "
                   f"({row['evaluations']} evaluations)")
    click.echo(f"wrote {path}")


# ---------------------------------------------------------------------------


def _load_caps(path, scenarios):
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    caps = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    for row in rows[1:]:
        if len(row) < 2:
            raise DataError(f"caps row {row!r} needs asset,value")
        try:
            caps[row[0].strip()] = float(row[1])
        except ValueError:
            raise DataError(f"cap value {row[1]!r} is not a number") from None
    missing = [a for a in scenarios.asset_ids if a not in caps]
    if missing:
        raise DataError(f"caps file lacks entries for {', '.join(missing)}")
    return np.array([caps[a] for a in scenarios.asset_ids])


@main.command()
@_common_options
@click.option("--caps", type=str, default=None,
              help="Market caps CSV (asset,value); required for the "
                   "market strategy. Defaults to bundled caps when using "
                   "bundled data.")
@click.option("--strategies", type=str, default=None,
              help=f"Comma list from: {', '.join(STRATEGY_NAMES)} "
                   "(default: all five).")
@click.option("--estimation", type=int, default=None,
              help="Estimation window length (default 24).")
@click.option("--holding", type=int, default=None,
              help="Holding window length (default 12).")
@click.option("--step", type=int, default=None,
              help="Window step (default 12).")
@click.option("--investor", type=str, default=None,
              help="Wealth dynamics: constant, loss, or gain "
                   "(default constant).")
@click.option("--rf", type=float, default=None,
              help="Annual risk-free rate (default 0).")
@click.option("--periods-per-year", type=float, default=None,
              help="Periods per year for annualization (default 12).")
@_guarded
def backtest(**flags):
    """Rolling-window comparison of allocation strategies."""
    cfg = _gather(flags, {
        "caps": None,
        "strategies": ",".join(STRATEGY_NAMES),
        "estimation": 24,
        "holding": 12,
        "step": 12,
        "investor": "constant",
        "rf": 0.0,
        "periods_per_year": 12.0,
        "k": 5,
    })
    cfg["ref_point"] = _parse_ref_point(cfg["ref_point"], allow_index=True)
    _validate_profile_fields(cfg)
    names = [s.strip() for s in str(cfg["strategies"]).split(",") if s.strip()]
    unknown = [s for s in names if s not in STRATEGY_NAMES]
    _require(not unknown,
             f"unknown strategies: {', '.join(unknown)}")
    _require(len(names) >= 1, "select at least one strategy")
    _require(cfg["investor"] in ("constant", "loss", "gain"),
             "--investor must be constant, loss, or gain")
    _require(int(cfg["estimation"]) >= 2, "--estimation must be >= 2")
    _require(int(cfg["holding"]) >= 1, "--holding must be >= 1")
    _require(int(cfg["step"]) >= 1, "--step must be >= 1")
    _require(float(cfg["periods_per_year"]) > 0,
             "--periods-per-year must be positive")

    scenarios = _load_scenarios(cfg)
    plan = WindowPlan(int(cfg["estimation"]), int(cfg["holding"]),
                      int(cfg["step"]))
    k = int(cfg["k"])
    _require(1 <= k <= scenarios.n_assets,
             f"--k must be in 1..{scenarios.n_assets}")

    caps_vector = None
    if "market" in names:
        if cfg["caps"] is not None:
            caps_vector = _load_caps(cfg["caps"], scenarios)
        elif cfg["data"] is None:
            bundled = datasets.load_bundled_caps()
            caps_vector = np.array([bundled[a] for a in scenarios.asset_ids])
        else:
            raise ValidationError(
                "the market strategy needs --caps for external data"
            )

    reference_mode = "constant"
    ref_value = cfg["ref_point"]
    if ref_value == "index":
        reference_mode = "index"
        ref_value = _COMMON_DEFAULTS["ref_point"]

    iters = cfg.get("iters")
    iters = DEFAULT_ITERS[cfg["algo"]] if iters is None else int(iters)
    builders = {
        "equal": lambda: EqualWeight(),
        "market": lambda: MarketValueWeight(market_caps=caps_vector),
        "riskparity": lambda: RiskParity(),
        "meanvariance": lambda: MeanVariance(
            risk_aversion=float(cfg["risk_aversion"])),
        "drp": lambda: DistributionallyRobust(
            k=k,
            loss_aversion=float(cfg["phi"]),
            risk_aversion=float(cfg["risk_aversion"]),
            ambiguity_radius=float(cfg["theta"]),
            reference_point=float(ref_value),
            algorithm=cfg["algo"],
            max_iterations=max(iters, 1),
            seed=int(cfg["seed"]),
            threads=int(cfg["threads"]),
        ),
    }
    strategies = {name: builders[name]() for name in names}
    investor = None if cfg["investor"] == "constant" else cfg["investor"]
    result = run_backtest(scenarios, plan, strategies,
                          investor_type=investor,
                          reference_mode=reference_mode)
    table = metrics_table(result.paths, rf=float(cfg["rf"]),
                          periods_per_year=float(cfg["periods_per_year"]))

    out = _out_dir(cfg)
    config_echo = _config_echo(cfg)
    payload = {
        "metrics": table,
        "audit": list(result.audit),
        "windows": len(rolling_windows(scenarios, plan)),
        "config": config_echo,
    }
    _write_json(os.path.join(out, "backtest_metrics.json"), payload)
    comment = "# config: " + json.dumps(config_echo, sort_keys=True) + "\n"
    for name, path in result.paths.items():
        fname = os.path.join(out, f"wealth_{name}.csv")
        with open(fname, "w", newline="") as fh:
            fh.write(comment)
            writer = csv.writer(fh)
            writer.writerow(["period", "return", "wealth"])
            for pid, rt, wt in zip(path.period_ids, path.returns,
                                   path.wealth[1:]):
                writer.writerow([pid, repr(float(rt)), repr(float(wt))])

    width = max(len(m) for m in table)
    header = ["strategy".ljust(width)] + list(result.paths)
    click.echo("  ".join(header))
    for metric, row in table.items():
        cells = [metric.ljust(width)]
        for name in result.paths:
            value = row[name]
            cells.append("--" if value is None else f"{value:.4f}")
        click.echo("  ".join(cells))
    click.echo(f"wrote {out}/backtest_metrics.json and wealth CSVs")


# ---------------------------------------------------------------------------


@main.command()
@_common_options
@click.option("--weights", type=str, default=None,
              help="Comma-separated weights to attack; defaults to solving "
                   "the instance first with --algo.")
@click.option("--d-cap", type=float, default=None,
              help="Per-point displacement cap (default: wide enough to "
                   "match the dual bound).")
@click.option("--split/--no-split", "split", default=True,
              help="Allow scenario atoms to split (exact) or move whole "
                   "atoms only.")
@_guarded
def worstcase(weights, d_cap, split, **flags):
    """Recover the adversarial distribution behind the robust objective."""
    from .worstcase import worst_case_distribution

    cfg = _gather(flags, {"weights": None, "d_cap": None})
    if weights is not None:
        cfg["weights"] = weights
    if d_cap is not None:
        cfg["d_cap"] = d_cap
    cfg["split"] = bool(split)
    cfg["ref_point"] = _parse_ref_point(cfg["ref_point"])
    _validate_profile_fields(cfg)
    scenarios = _load_scenarios(cfg)

    if cfg["weights"] is not None:
        try:
            w = np.array([float(v)
                          for v in str(cfg["weights"]).split(",")])
        except ValueError:
            raise ValidationError(
                f"could not parse --weights {cfg['weights']!r}"
            ) from None
        _require(cfg["k"] is None or int(np.count_nonzero(w)) <= int(cfg["k"]),
                 "--weights uses more assets than --k allows")
        profile = _profile(cfg)
        k = int(cfg["k"]) if cfg["k"] is not None else scenarios.n_assets
        inst = DrpInstance.from_scenarios(scenarios, profile, k)
        support = None
    else:
        inst = _instance(cfg, scenarios)
        result = _search(inst, cfg)
        w = result.selection.weights
        support = list(result.selection.support)

    dcv = cfg["d_cap"]
    wc = worst_case_distribution(inst, w, d_cap=None if dcv is None
                                 else float(dcv), split=cfg["split"])
    cert = dual_certificate(inst, w)
    payload = {
        "weights": [float(v) for v in w],
        "support": support,
        "points": [[float(v) for v in row] for row in wc.points],
        "masses": [float(v) for v in wc.masses],
        "source_scenarios": [int(v) for v in wc.source],
        "transport_cost": wc.transport_cost,
        "expected_utility": wc.expected_utility,
        "dual_value": cert.value,
        "gap": wc.expected_utility - cert.value,
        "config": _config_echo(cfg),
    }
    path = os.path.join(_out_dir(cfg), "worstcase.json")
    _write_json(path, payload)
    click.echo(json.dumps(payload, indent=2))


if __name__ == "__main__":
    main()
