"""Model directory persistence.

A fitted model directory is self-contained:

    manifest.json   model kind, seed, hyperparameters, epoch count
    schema.json     copy of the training schema
    encoder.json    numeric stats and the discrete joint law
    weights.pt      network weights; absent when no numeric column was trained

manifest.json and encoder.json are written with sorted keys so a refit with
the same inputs and seed reproduces them byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .encoding import DiscreteJoint, NumericEncoder
from .tabular import Column, SidecarError, columns_from_json, save_schema

MANIFEST = "manifest.json"
SCHEMA = "schema.json"
ENCODER = "encoder.json"
WEIGHTS = "weights.pt"


@dataclass
class Bundle:
    model: str
    seed: int
    hyper: dict
    epochs_run: int
    stopped_early: bool
    columns: list[Column]
    encoder: NumericEncoder
    joint: DiscreteJoint
    state: dict | None


def save_model(model_dir, *, model: str, seed: int, hyper: dict, epochs_run: int,
               stopped_early: bool, columns: list[Column], encoder: NumericEncoder,
               joint: DiscreteJoint, state: dict | None) -> None:
    root = Path(model_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "model": model,
        "seed": seed,
        "hyperparams": hyper,
        "epochs_run": epochs_run,
        "stopped_early": stopped_early,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    save_schema(columns, root / SCHEMA)
    payload = {"numeric": encoder.to_json(), "joint": joint.to_json()}
    (root / ENCODER).write_text(json.dumps(payload, sort_keys=True) + "\n")
    if state is not None:
        torch.save(state, root / WEIGHTS)


def load_model(model_dir) -> Bundle:
    root = Path(model_dir)
    if not (root / MANIFEST).is_file():
        raise SidecarError(f"{root} is not a fitted model directory (no {MANIFEST})")
    try:
        manifest = json.loads((root / MANIFEST).read_text())
        columns = columns_from_json(json.loads((root / SCHEMA).read_text()))
        enc = json.loads((root / ENCODER).read_text())
        encoder = NumericEncoder.from_json(enc["numeric"])
        joint = DiscreteJoint.from_json(enc["joint"])
        state = None
        if (root / WEIGHTS).is_file():
            state = torch.load(root / WEIGHTS, weights_only=True)
        return Bundle(model=manifest["model"], seed=manifest["seed"],
                      hyper=manifest["hyperparams"], epochs_run=manifest["epochs_run"],
                      stopped_early=manifest["stopped_early"], columns=columns,
                      encoder=encoder, joint=joint, state=state)
    except (OSError, json.JSONDecodeError, KeyError, RuntimeError) as exc:
        raise SidecarError(f"model directory {root} is incomplete or corrupt: {exc}") from exc
