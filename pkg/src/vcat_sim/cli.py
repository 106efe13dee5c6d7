"""Command line entry point.

Every subcommand reads a JSON config file, lets explicit flags override
single values, and writes its results plus a ``manifest.json`` into the
output directory. Nothing is written anywhere else. The manifest records the
merged effective config, its sha256, the resolved seed, and the versions in
play; it carries no timestamps, so rerunning a command with the same config
and seed reproduces every output byte for byte.

Exit codes: 0 success, 1 invalid config or data (message on stderr),
2 runtime failure, 3 external generator protocol violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dataset import (
    derive_binary_outcome,
    load_csv,
    load_schema,
    recode_categories,
    save_schema,
    write_csv,
)
from .errors import ConfigError, DataFormatError, ExternalGeneratorError, SchemaError, VcatError
from .experiments import (
    CategoricalCovariate,
    SimSpec,
    run_n_first,
    run_sensitivity,
    simulate_trial,
)
from .fidelity import general_score
from .generators import load_batch_csv
from .impute import impute_chained
from .tuning import multi_trainset_tune

SEED_ENV = "VCAT_SEED"

_COMMON_KEYS = {"data", "schema", "missing_values", "out", "seed"}
_ALLOWED_KEYS = {
    "simulate": {"sim", "out", "seed"},
    "n-first": _COMMON_KEYS | {"n", "l", "generator", "tune"},
    "sensitivity": _COMMON_KEYS | {"n", "k", "l", "generator", "tune", "jobs"},
    "score": {"data", "schema", "synthetic", "missing_values", "out"},
    "tune": _COMMON_KEYS | {"n", "num_sets", "folds", "generator", "grid"},
    "impute": _COMMON_KEYS | {"iterations", "derive_outcome", "recodes"},
}


# ============================================================================
# Config plumbing
# ============================================================================


def _read_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(payload) - _ALLOWED_KEYS[command])
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    return payload


def _override(cfg: dict, args: argparse.Namespace, names: list[str]) -> dict:
    merged = dict(cfg)
    for name in names:
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            merged[name] = value
    return merged


def _resolve_seed(cfg: dict) -> int:
    if "seed" in cfg:
        try:
            return int(cfg["seed"])
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {cfg['seed']!r}") from None
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _require(cfg: dict, key: str, command: str):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"{command} needs {key!r} (config key or flag)")
    return cfg[key]


def _out_dir(cfg: dict, command: str) -> Path:
    out = Path(_require(cfg, "out", command))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _canonical(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(_canonical(payload))


def _write_manifest(out: Path, command: str, effective: dict, seed: int | None) -> None:
    body = _canonical(effective)
    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "config": effective,
            "config_sha256": hashlib.sha256(body.encode()).hexdigest(),
            "seed": seed,
            "versions": {
                "vcat-sim": __version__,
                "python": ".".join(map(str, sys.version_info[:3])),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        },
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _load_dataset(cfg: dict, command: str):
    schema = load_schema(_require(cfg, "schema", command))
    missing = tuple(cfg.get("missing_values", ()))
    return load_csv(_require(cfg, "data", command), schema, missing_values=("",) + missing)


def _generator_config(cfg: dict, command: str, out: Path) -> dict:
    gen = _require(cfg, "generator", command)
    if not isinstance(gen, dict) or "kind" not in gen:
        raise ConfigError(f"{command}: generator must be an object with a 'kind'")
    gen = {"kind": gen["kind"], "hyperparams": dict(gen.get("hyperparams") or {})}
    if gen["kind"] == "external":
        gen["hyperparams"].setdefault("workdir", str(out / "external"))
    return gen


# ============================================================================
# Subcommand handlers
# ============================================================================


def _cmd_simulate(args: argparse.Namespace) -> None:
    cfg = _override(_read_config(args.config, "simulate"), args, ["out", "seed"])
    out = _out_dir(cfg, "simulate")
    seed = _resolve_seed(cfg)
    sim = _require(cfg, "sim", "simulate")
    if not isinstance(sim, dict):
        raise ConfigError("sim must be an object")
    covs = tuple(
        CategoricalCovariate(
            name=str(c["name"]),
            categories=tuple(c["categories"]),
            probs=tuple(c["probs"]) if c.get("probs") is not None else None,
        )
        for c in sim.get("categorical_covariates", ())
    )
    try:
        spec = SimSpec(
            m0=int(sim["m0"]),
            m1=int(sim["m1"]),
            p_treated=float(sim["p_treated"]),
            p_control_start=float(sim["p_control_start"]),
            drift=float(sim.get("drift", 0.0)),
            numeric_covariates=int(sim.get("numeric_covariates", 0)),
            categorical_covariates=covs,
        )
    except KeyError as exc:
        raise ConfigError(f"sim spec misses {exc}") from None
    ds = simulate_trial(spec, seed)
    write_csv(ds, out / "trial.csv")
    save_schema(ds.schema, out / "schema.json")
    _write_manifest(out, "simulate", cfg, seed)


def _estimate_row(name: str, est, label, rel) -> list:
    return [
        name,
        est.tau,
        est.sigma2_control,
        est.se,
        est.delta,
        est.ci_low,
        est.ci_high,
        est.replicates,
        est.delta_sd_scale,
        label.label if label else None,
        label.incompatible if label else None,
        rel,
    ]


def _cmd_n_first(args: argparse.Namespace) -> None:
    cfg = _override(_read_config(args.config, "n-first"), args, ["data", "schema", "out", "seed", "n", "l"])
    out = _out_dir(cfg, "n-first")
    seed = _resolve_seed(cfg)
    ds = _load_dataset(cfg, "n-first")
    report = run_n_first(
        ds,
        n=int(_require(cfg, "n", "n-first")),
        generator=_generator_config(cfg, "n-first", out),
        l=int(cfg.get("l", 999)),
        seed=seed,
        tune=cfg.get("tune"),
    )
    _write_json(out / "report.json", report.to_json())
    header = [
        "procedure", "tau", "sigma2_control", "se", "delta", "ci_low", "ci_high",
        "replicates", "delta_sd_scale", "label", "incompatible", "relative_difference_pct",
    ]
    rows = [
        _estimate_row("rct", report.rct, None, None),
        _estimate_row("one_shot", report.one_shot, report.labels["one_shot"],
                      report.relative_difference_pct["one_shot"]),
        _estimate_row("averaged", report.averaged, report.labels["averaged"],
                      report.relative_difference_pct["averaged"]),
    ]
    _write_rows_csv(out / "estimates.csv", header, rows)
    _write_manifest(out, "n-first", cfg, seed)


def _cmd_sensitivity(args: argparse.Namespace) -> None:
    cfg = _override(
        _read_config(args.config, "sensitivity"),
        args,
        ["data", "schema", "out", "seed", "n", "k", "l", "jobs"],
    )
    out = _out_dir(cfg, "sensitivity")
    seed = _resolve_seed(cfg)
    jobs = int(cfg.get("jobs", os.cpu_count() or 1))
    ds = _load_dataset(cfg, "sensitivity")
    report = run_sensitivity(
        ds,
        n=int(_require(cfg, "n", "sensitivity")),
        k=int(cfg.get("k", 1000)),
        generator=_generator_config(cfg, "sensitivity", out),
        l=int(cfg.get("l", 999)),
        seed=seed,
        jobs=jobs,
        tune=cfg.get("tune"),
    )
    _write_json(out / "report.json", report.to_json())
    set_header = [
        "index", "training_effect", "tau", "sigma2_control", "se", "delta",
        "ci_low", "ci_high", "delta_sd_scale", "label", "incompatible",
    ]
    set_rows = [
        [
            r.index, r.training_effect, r.estimate.tau, r.estimate.sigma2_control,
            r.estimate.se, r.estimate.delta, r.estimate.ci_low, r.estimate.ci_high,
            r.estimate.delta_sd_scale, r.label.label, r.label.incompatible,
        ]
        for r in report.sets
    ]
    _write_rows_csv(out / "training_sets.csv", set_header, set_rows)
    panel_header = [
        "sorted_position", "set_index", "training_effect", "tau_av",
        "ci_low", "ci_high", "label", "incompatible",
    ]
    panel_rows = [[row[h] for h in panel_header] for row in report.panel]
    _write_rows_csv(out / "panel.csv", panel_header, panel_rows)
    _write_manifest(out, "sensitivity", cfg, seed)


def _cmd_score(args: argparse.Namespace) -> None:
    cfg = _override(_read_config(args.config, "score"), args, ["data", "schema", "synthetic", "out"])
    out = _out_dir(cfg, "score")
    schema = load_schema(_require(cfg, "schema", "score"))
    missing = tuple(cfg.get("missing_values", ()))
    real = load_csv(_require(cfg, "data", "score"), schema, missing_values=("",) + missing)
    batch = load_batch_csv(_require(cfg, "synthetic", "score"), schema)
    report = general_score(real, batch)
    _write_json(out / "report.json", report.to_json())
    _write_manifest(out, "score", cfg, None)


def _cmd_tune(args: argparse.Namespace) -> None:
    cfg = _override(_read_config(args.config, "tune"), args, ["data", "schema", "out", "seed", "n"])
    out = _out_dir(cfg, "tune")
    seed = _resolve_seed(cfg)
    ds = _load_dataset(cfg, "tune")
    gen = _generator_config(cfg, "tune", out)
    grid = _require(cfg, "grid", "tune")
    if not isinstance(grid, dict):
        raise ConfigError("tune: grid must be an object of axis lists")
    result = multi_trainset_tune(
        gen["kind"],
        ds,
        n=int(_require(cfg, "n", "tune")),
        grid=grid,
        num_sets=int(cfg.get("num_sets", 3)),
        folds=int(cfg.get("folds", 5)),
        seed=seed,
    )
    _write_json(out / "report.json", result.to_json())
    _write_manifest(out, "tune", cfg, seed)


def _parse_rule(entries) -> dict:
    rule = {}
    for entry in entries:
        try:
            rule[(entry.get("a"), entry.get("b"))] = entry["outcome"]
        except (TypeError, KeyError):
            raise ConfigError(f"bad derivation rule entry {entry!r}") from None
    return rule


def _cmd_impute(args: argparse.Namespace) -> None:
    cfg = _override(_read_config(args.config, "impute"), args, ["data", "schema", "out", "seed", "iterations"])
    out = _out_dir(cfg, "impute")
    seed = _resolve_seed(cfg)
    ds = _load_dataset(cfg, "impute")
    if "derive_outcome" in cfg:
        d = cfg["derive_outcome"]
        ds = derive_binary_outcome(
            ds, d["a"], d["b"], _parse_rule(d["rule"]), name=d.get("name", "outcome")
        )
    for column, mapping in (cfg.get("recodes") or {}).items():
        ds = recode_categories(ds, column, dict(mapping))
    completed = impute_chained(ds, iterations=int(cfg.get("iterations", 5)), seed=seed)
    write_csv(completed, out / "imputed.csv")
    save_schema(completed.schema, out / "schema.json")
    _write_manifest(out, "impute", cfg, seed)


# ============================================================================
# Parser and entry point
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vcat-sim",
        description="Quantify the distortion from completing an RCT control arm with generated patients.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, data: bool = True) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        if data:
            p.add_argument("--data", help="trial CSV path")
            p.add_argument("--schema", help="schema JSON path")

    p = sub.add_parser("simulate", help="write a simulated trial CSV and schema")
    common(p, data=False)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("n-first", help="complete the n-first control arm and re-estimate")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="training set size (earliest enrolled controls)")
    p.add_argument("--l", type=int, help="averaged-procedure replicates")
    p.set_defaults(func=_cmd_n_first)

    p = sub.add_parser("sensitivity", help="redo the completion over k drawn training sets")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="training set size")
    p.add_argument("--k", type=int, help="number of training sets")
    p.add_argument("--l", type=int, help="averaged-procedure replicates")
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    p.set_defaults(func=_cmd_sensitivity)

    p = sub.add_parser("score", help="fidelity score of synthetic records against real ones")
    common(p)
    p.add_argument("--synthetic", help="synthetic CSV (modelled columns)")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("tune", help="hyperparameter grid search over drawn training sets")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="training set size")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("impute", help="complete missing cells by chained equations")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=_cmd_impute)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except ExternalGeneratorError as exc:
        print(f"external generator failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, SchemaError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VcatError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last resort
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
