"""Command line entry points.

Two commands mirror the host protocol:

    fit    --train t.csv --schema s.json --model-dir dir --seed N
    sample --model-dir dir --n N --seed N --out out.csv

`gen-sidecar-gan` and `gen-sidecar-vae` are single-string executables that
pin the architecture, for callers that pass one executable path and cannot
append extra flags. The plain `gen-sidecar` command additionally accepts
`--model {gan,vae}` and `--config <json>` on fit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import gan, vae
from .encoding import DiscreteJoint, NumericEncoder
from .store import load_model, save_model
from .tabular import SidecarError, load_schema, read_table, write_table

_INT_KEYS = ("epochs", "batch_size", "hidden", "window", "z_dim", "latent_dim")


def _resolve_hyper(model: str, config_path: str | None) -> dict:
    defaults = gan.DEFAULTS if model == "gan" else vae.DEFAULTS
    hyper = dict(defaults)
    if config_path is None:
        return hyper
    try:
        overrides = json.loads(Path(config_path).read_text())
    except FileNotFoundError:
        raise SidecarError(f"config file not found: {config_path}") from None
    except json.JSONDecodeError as exc:
        raise SidecarError(f"config file {config_path} is not valid JSON: {exc}") from None
    if not isinstance(overrides, dict):
        raise SidecarError("config file must hold a JSON object of hyperparameters")
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise SidecarError(f"unknown hyperparameters for {model}: {unknown};"
                           f" allowed: {sorted(defaults)}")
    hyper.update(overrides)
    for key in _INT_KEYS:
        if key in hyper and (not isinstance(hyper[key], int) or hyper[key] < 1):
            raise SidecarError(f"hyperparameter {key!r} must be a positive integer")
    if not (isinstance(hyper["lr"], (int, float)) and hyper["lr"] > 0):
        raise SidecarError("hyperparameter 'lr' must be a positive number")
    if not (isinstance(hyper["plateau_tol"], (int, float)) and hyper["plateau_tol"] >= 0):
        raise SidecarError("hyperparameter 'plateau_tol' must be >= 0")
    return hyper


def _do_fit(args, default_model: str) -> None:
    model = args.model or default_model
    hyper = _resolve_hyper(model, args.config)
    columns = load_schema(args.schema)
    table = read_table(args.train, columns)

    numeric_cols = [c for c in columns if not c.discrete]
    discrete_cols = [c for c in columns if c.discrete]
    m = len(table[columns[0].name])
    numeric = (np.column_stack([table[c.name] for c in numeric_cols])
               if numeric_cols else np.zeros((m, 0)))
    codes = (np.column_stack([table[c.name] for c in discrete_cols])
             if discrete_cols else np.zeros((m, 0)))

    encoder = NumericEncoder.fit([c.name for c in numeric_cols], numeric)
    joint = DiscreteJoint.from_codes([c.name for c in discrete_cols],
                                     [c.support for c in discrete_cols], codes)
    fit = gan.fit_gan if model == "gan" else vae.fit_vae
    state, epochs_run, stopped = fit(encoder.transform(numeric),
                                     joint.one_hot(codes), hyper, args.seed)
    save_model(args.model_dir, model=model, seed=args.seed, hyper=hyper,
               epochs_run=epochs_run, stopped_early=stopped, columns=columns,
               encoder=encoder, joint=joint, state=state)


def _do_sample(args) -> None:
    if args.n < 0:
        raise SidecarError(f"--n must be >= 0, got {args.n}")
    bundle = load_model(args.model_dir)
    rng = np.random.default_rng(args.seed)
    torch.manual_seed(args.seed)

    codes = bundle.joint.draw(args.n, rng)
    q = bundle.encoder.width
    if q > 0:
        if bundle.state is None:
            raise SidecarError(f"model directory {args.model_dir} has numeric"
                               " columns but holds no trained weights")
        sample = gan.sample_gan if bundle.model == "gan" else vae.sample_vae
        std = sample(bundle.state, q, bundle.joint.one_hot(codes), bundle.hyper)
        numeric = bundle.encoder.inverse(std)
    else:
        numeric = np.zeros((args.n, 0))

    arrays: dict[str, np.ndarray] = {}
    for j, name in enumerate(bundle.encoder.names):
        arrays[name] = numeric[:, j]
    for j, name in enumerate(bundle.joint.names):
        arrays[name] = codes[:, j].astype(np.float64)
    write_table(args.out, bundle.columns, arrays)


def main(argv: list[str] | None = None, default_model: str = "gan") -> int:
    parser = argparse.ArgumentParser(
        prog="gen-sidecar",
        description="Fit a tabular generator and sample synthetic rows from it.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="train a model from a CSV and schema")
    fit.add_argument("--train", required=True, help="training CSV")
    fit.add_argument("--schema", required=True, help="schema JSON")
    fit.add_argument("--model-dir", required=True, help="directory to write the model into")
    fit.add_argument("--seed", type=int, required=True)
    fit.add_argument("--model", choices=("gan", "vae"), default=None,
                     help=f"architecture (default: {default_model})")
    fit.add_argument("--config", default=None, help="JSON file of hyperparameter overrides")

    smp = sub.add_parser("sample", help="draw rows from a fitted model")
    smp.add_argument("--model-dir", required=True)
    smp.add_argument("--n", type=int, required=True)
    smp.add_argument("--seed", type=int, required=True)
    smp.add_argument("--out", required=True, help="output CSV path")

    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            _do_fit(args, default_model)
        else:
            _do_sample(args)
    except SidecarError as exc:
        print(f"gen-sidecar: {exc}", file=sys.stderr)
        return 1
    return 0


def main_gan(argv: list[str] | None = None) -> int:
    return main(argv, default_model="gan")


def main_vae(argv: list[str] | None = None) -> int:
    return main(argv, default_model="vae")


if __name__ == "__main__":
    sys.exit(main())
