"""Reusable checks for generator implementations.

External generator executables are developed out of tree, so the protocol
checks live in the package rather than in its test suite: an implementation
can depend on ``vcat_sim`` and run ``check_protocol_conformance`` against its
own binary. The same helpers back the built-in generators' tests.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .dataset import ColumnSpec, Schema, TrialDataset
from .generators import GeneratorModel, fit
from .seeding import rng_for


def toy_training_set(rows: int = 50, seed: int = 0, outcome_rate: float = 0.4) -> TrialDataset:
    """Small mixed-type control-arm dataset for exercising a generator."""
    if rows < 2:
        raise ValueError("toy training set needs at least 2 rows")
    schema = Schema(
        [
            ColumnSpec("age", "numeric"),
            ColumnSpec("severity", "numeric"),
            ColumnSpec("region", "categorical", categories=("north", "south", "east")),
            ColumnSpec("outcome", "outcome"),
            ColumnSpec("arm", "arm"),
        ]
    )
    rng = rng_for(seed, "toy_training_set")
    columns = {
        "age": np.round(rng.normal(60.0, 12.0, rows), 1),
        "severity": rng.exponential(2.0, rows),
        "region": rng.integers(0, 3, rows).astype(np.float64),
        "outcome": (rng.random(rows) < outcome_rate).astype(np.float64),
        "arm": np.zeros(rows),
    }
    return TrialDataset(schema, columns)


def check_protocol_conformance(executable: str | Path, workdir: str | Path, rows: int = 50) -> GeneratorModel:
    """Assert that an executable honors the fit/sample subprocess contract.

    Covers: fit exits 0 and leaves a usable model directory, sampling returns
    exactly the requested number of schema-valid rows, s = 0 yields an empty
    batch, and equal seeds reproduce equal batches within one environment.
    Raises AssertionError (or the generator error already raised by the
    protocol layer) on any violation. Returns the fitted model so callers can
    run further checks.
    """
    train = toy_training_set(rows=rows, seed=7)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    model = fit(
        "external",
        train,
        hyperparams={"executable": str(executable), "workdir": str(workdir)},
        seed=11,
    )

    empty = model.sample(0, seed=1)
    assert empty.size == 0, f"s = 0 must yield an empty batch, got {empty.size} rows"

    batch = model.sample(100, seed=2)
    assert batch.size == 100, f"expected 100 rows, got {batch.size}"

    again = model.sample(100, seed=2)
    for name in batch.columns:
        assert np.array_equal(batch.columns[name], again.columns[name]), (
            f"column {name!r} differs between two samples with the same seed"
        )

    other = model.sample(100, seed=3)
    assert any(
        not np.array_equal(other.columns[name], batch.columns[name]) for name in batch.columns
    ), "different seeds produced identical batches; seed is being ignored"
    return model


def check_distribution_mirroring(model: GeneratorModel, train: TrialDataset, s: int = 100_000, seed: int = 5) -> None:
    """Assert the generated outcome mean tracks the training outcome mean.

    The bound is 3 Monte-Carlo standard errors of a Bernoulli mean at the
    training rate, so a conforming generator fails with probability < 0.003.
    """
    p = float(train.outcome_values.mean())
    se = math.sqrt(p * (1.0 - p) / s)
    batch = model.sample(s, seed=seed)
    observed = float(batch.outcomes.mean())
    assert abs(observed - p) <= 3.0 * se, (
        f"generated outcome mean {observed:.5f} is more than 3 SE ({3 * se:.5f}) "
        f"from the training mean {p:.5f}"
    )
