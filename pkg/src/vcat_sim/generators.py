"""Generative models for control-arm records, native and external.

Three native model kinds fit on a training set of complete control records
and sample schema-conforming batches:

``bootstrap``
    Stores the training records verbatim; every sample is a training record.
``marginals``
    Independent per-column empirical distributions; categorical and outcome
    frequencies take optional Laplace smoothing over schema support.
``copula``
    Gaussian copula: per-column empirical marginals plus a Gaussian-rank
    correlation matrix, sampled by correlating standard normals through a
    Cholesky factor and inverting each marginal.

A fourth kind, ``external``, shells out to any executable speaking the
subprocess protocol::

    <exe> fit    --train <csv> --schema <json> --model-dir <dir> --seed <u64>
    <exe> sample --model-dir <dir> --n <s> --seed <u64> --out <csv>

The train CSV and the schema JSON handed to the executable hold the modelled
columns only (numeric, categorical, outcome); the sample CSV must come back
with exactly those columns and exactly s rows. Any nonzero exit status or
schema violation raises :class:`ExternalGeneratorError` with a diagnostic.

Generated records always carry arm 0. Enrolment ranks are not generated;
consumers place synthetic records after all real patients.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
import tempfile
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .dataset import ColumnSpec, Schema, TrialDataset, format_cell, _parse_cell
from .errors import DataFormatError, ExternalGeneratorError, SchemaError
from .seeding import rng_for

GENERATOR_KINDS = ("bootstrap", "marginals", "copula", "external")


class SyntheticBatch:
    """Columnar batch of generated control-arm records.

    Holds the schema's modelled columns plus a constant-zero arm column.
    """

    def __init__(self, schema: Schema, columns: dict[str, np.ndarray], validate: bool = True):
        self.schema = schema
        arm_name = schema.arm.name
        names = [c.name for c in schema.modelled]
        if set(columns) - {arm_name} != set(names):
            raise SchemaError("batch columns must be exactly the modelled columns")
        self.columns = {n: np.asarray(columns[n], dtype=np.float64) for n in names}
        self.size = len(self.columns[names[0]]) if names else 0
        self.columns[arm_name] = np.zeros(self.size)
        if validate:
            self._validate()

    def _validate(self) -> None:
        for spec in self.schema.modelled:
            col = self.columns[spec.name]
            if len(col) != self.size:
                raise DataFormatError(f"batch column {spec.name!r} has the wrong length")
            if np.isnan(col).any():
                raise DataFormatError(f"batch column {spec.name!r} has missing cells")
            if spec.kind == "outcome":
                if not (((col == 0.0) | (col == 1.0)).all()):
                    raise DataFormatError(f"batch outcome column {spec.name!r} must be 0/1")
            elif spec.kind == "categorical":
                ok = (col == np.floor(col)) & (col >= 0) & (col < len(spec.categories))
                if not ok.all():
                    raise DataFormatError(f"batch column {spec.name!r} has out-of-range categories")

    @property
    def outcomes(self) -> np.ndarray:
        return self.columns[self.schema.outcome.name]


def modelled_schema(schema: Schema) -> list[ColumnSpec]:
    specs = schema.modelled
    if not any(c.kind == "outcome" for c in specs):
        raise SchemaError("generators need an outcome column; derive one first")
    return specs


def _check_train(train: TrialDataset) -> list[ColumnSpec]:
    specs = modelled_schema(train.schema)
    if train.m < 1:
        raise DataFormatError("training set is empty")
    for spec in specs:
        if np.isnan(train.columns[spec.name]).any():
            raise DataFormatError(
                f"training column {spec.name!r} has missing cells; impute before fitting"
            )
    return specs


def _check_hyperparams(kind: str, given: dict, allowed: dict) -> dict:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise SchemaError(f"unknown hyperparameters for {kind!r}: {unknown}")
    merged = dict(allowed)
    merged.update(given)
    return merged


def _invert_numeric(sorted_values: np.ndarray, u: np.ndarray) -> np.ndarray:
    n = len(sorted_values)
    idx = np.clip(np.floor(u * n).astype(np.int64), 0, n - 1)
    return sorted_values[idx]


def _invert_categorical(cumprobs: np.ndarray, u: np.ndarray) -> np.ndarray:
    codes = np.searchsorted(cumprobs, u, side="right")
    return np.clip(codes, 0, len(cumprobs) - 1).astype(np.float64)


class GeneratorModel:
    """Fitted generative model; subclasses implement :meth:`sample`."""

    kind: str = ""

    def __init__(self, schema: Schema, latent_dim: int, prior: str, params: dict):
        self.schema = schema
        self.latent_dim = latent_dim
        self.prior = prior
        self.params = params

    def sample(self, s: int, seed: int) -> SyntheticBatch:
        raise NotImplementedError

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "latent_dim": self.latent_dim,
            "prior": self.prior,
            "params": self.params,
        }


class BootstrapModel(GeneratorModel):
    kind = "bootstrap"

    def __init__(self, schema: Schema, train_columns: dict[str, np.ndarray]):
        self._train = train_columns
        self._n = len(next(iter(train_columns.values())))
        super().__init__(schema, 1, f"uniform over {self._n} training records", {"n": self._n})

    def sample(self, s: int, seed: int) -> SyntheticBatch:
        rng = rng_for(seed, "bootstrap")
        idx = rng.integers(0, self._n, size=s)
        cols = {name: arr[idx] for name, arr in self._train.items()}
        return SyntheticBatch(self.schema, cols, validate=False)


class MarginalsModel(GeneratorModel):
    kind = "marginals"

    def __init__(self, schema: Schema, specs, numeric, cumprobs, alpha: float):
        self._specs = specs
        self._numeric = numeric      # name -> sorted observed values
        self._cumprobs = cumprobs    # name -> cumulative category probabilities
        super().__init__(
            schema,
            len(specs),
            "independent uniforms, one per column",
            {"alpha": alpha},
        )

    def sample(self, s: int, seed: int) -> SyntheticBatch:
        rng = rng_for(seed, "marginals")
        u = rng.random((s, len(self._specs)))
        cols = {}
        for j, spec in enumerate(self._specs):
            if spec.name in self._numeric:
                cols[spec.name] = _invert_numeric(self._numeric[spec.name], u[:, j])
            else:
                cols[spec.name] = _invert_categorical(self._cumprobs[spec.name], u[:, j])
        return SyntheticBatch(self.schema, cols, validate=False)


class CopulaModel(GeneratorModel):
    kind = "copula"

    def __init__(self, schema: Schema, specs, numeric, cumprobs, chol, shrinkage_used: float):
        self._specs = specs
        self._numeric = numeric
        self._cumprobs = cumprobs
        self._chol = chol
        q = len(specs)
        super().__init__(
            schema,
            q,
            "standard normal, correlated through a Cholesky factor",
            {"shrinkage_used": shrinkage_used, "latent_correlation": (chol @ chol.T).tolist()},
        )

    def sample(self, s: int, seed: int) -> SyntheticBatch:
        rng = rng_for(seed, "copula")
        z = rng.standard_normal((s, len(self._specs)))
        u = ndtr(z @ self._chol.T)
        cols = {}
        for j, spec in enumerate(self._specs):
            if spec.name in self._numeric:
                cols[spec.name] = _invert_numeric(self._numeric[spec.name], u[:, j])
            else:
                cols[spec.name] = _invert_categorical(self._cumprobs[spec.name], u[:, j])
        return SyntheticBatch(self.schema, cols, validate=False)


def _category_probs(spec: ColumnSpec, values: np.ndarray, alpha: float) -> np.ndarray:
    """Empirical category frequencies with Laplace smoothing over schema support."""
    n_cats = 2 if spec.kind == "outcome" else len(spec.categories)
    counts = np.bincount(values.astype(np.int64), minlength=n_cats).astype(np.float64)
    probs = (counts + alpha) / (len(values) + alpha * n_cats)
    return probs


def _cumulative(probs: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)
    cum[-1] = 1.0  # guard against cumulative rounding below the last sample
    return cum


def _fit_bootstrap(train: TrialDataset, hp: dict) -> BootstrapModel:
    _check_hyperparams("bootstrap", hp, {})
    specs = _check_train(train)
    cols = {c.name: train.columns[c.name].copy() for c in specs}
    return BootstrapModel(train.schema, cols)


def _fit_marginals(train: TrialDataset, hp: dict) -> MarginalsModel:
    hp = _check_hyperparams("marginals", hp, {"alpha": 0.0})
    alpha = float(hp["alpha"])
    if alpha < 0:
        raise SchemaError(f"marginals alpha must be >= 0, got {alpha}")
    specs = _check_train(train)
    numeric, cumprobs = {}, {}
    for spec in specs:
        col = train.columns[spec.name]
        if spec.kind == "numeric":
            numeric[spec.name] = np.sort(col)
        else:
            cumprobs[spec.name] = _cumulative(_category_probs(spec, col, alpha))
    return MarginalsModel(train.schema, specs, numeric, cumprobs, alpha)


def latent_scores(spec: ColumnSpec, values: np.ndarray) -> np.ndarray:
    """Normal-score latent representation of one column.

    Numeric columns take the rank-based normal score; categorical and outcome
    columns map each category to the normal score of the midpoint of its
    cumulative-probability interval, so ties collapse to one latent value.
    """
    n = len(values)
    if spec.kind == "numeric":
        return ndtri(rankdata(values, method="average") / (n + 1))
    probs = _category_probs(spec, values, 0.0)
    cum = np.cumsum(probs)
    lower = np.concatenate(([0.0], cum[:-1]))
    with np.errstate(divide="ignore"):
        mids = ndtri((lower + cum) / 2.0)
    return mids[values.astype(np.int64)]


def _latent_correlation(latent: np.ndarray) -> np.ndarray:
    """Pearson correlation of latent columns; zero-variance columns correlate 0."""
    q = latent.shape[1]
    centered = latent - latent.mean(axis=0)
    sd = np.sqrt((centered * centered).mean(axis=0))
    corr = np.eye(q)
    varying = np.flatnonzero(sd > 0)
    if len(varying) > 1:
        sub = centered[:, varying] / sd[varying]
        block = (sub.T @ sub) / latent.shape[0]
        np.fill_diagonal(block, 1.0)
        corr[np.ix_(varying, varying)] = np.clip(block, -1.0, 1.0)
    return corr


def _fit_copula(train: TrialDataset, hp: dict) -> CopulaModel:
    hp = _check_hyperparams("copula", hp, {"shrinkage": 1e-6})
    lam = float(hp["shrinkage"])
    if not 0.0 <= lam <= 1.0:
        raise SchemaError(f"copula shrinkage must be in [0, 1], got {lam}")
    specs = _check_train(train)
    q = len(specs)
    latent = np.empty((train.m, q))
    numeric, cumprobs = {}, {}
    for j, spec in enumerate(specs):
        col = train.columns[spec.name]
        latent[:, j] = latent_scores(spec, col)
        if spec.kind == "numeric":
            numeric[spec.name] = np.sort(col)
        else:
            cumprobs[spec.name] = _cumulative(_category_probs(spec, col, 0.0))
    corr = _latent_correlation(latent)
    while True:
        shrunk = (1.0 - lam) * corr + lam * np.eye(q)
        try:
            chol = np.linalg.cholesky(shrunk)
            break
        except np.linalg.LinAlgError:
            lam = 1e-6 if lam == 0.0 else min(lam * 10.0, 1.0)
    return CopulaModel(train.schema, specs, numeric, cumprobs, chol, lam)


# ============================================================================
# External generators (subprocess protocol)
# ============================================================================


def write_batch_csv(schema: Schema, columns: dict[str, np.ndarray], path: str | Path) -> None:
    """Write modelled columns in canonical form (the protocol's train/sample format)."""
    specs = modelled_schema(schema)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in specs])
        arrays = [columns[c.name] for c in specs]
        n = len(arrays[0]) if arrays else 0
        for i in range(n):
            writer.writerow([format_cell(spec, arr[i]) for spec, arr in zip(specs, arrays)])


def load_batch_csv(path: str | Path, schema: Schema) -> SyntheticBatch:
    """Parse a sample CSV holding exactly the modelled columns."""
    specs = modelled_schema(schema)
    names = [c.name for c in specs]
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataFormatError(f"sample file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: sample file has no header") from None
        if set(header) != set(names) or len(header) != len(names):
            raise DataFormatError(
                f"{path}: sample header {header} does not match modelled columns {names}"
            )
        positions = {name: header.index(name) for name in names}
        cells: dict[str, list[float]] = {name: [] for name in names}
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(f"{path} line {row_no}: wrong cell count")
            for spec in specs:
                where = f"{path} line {row_no}, column {spec.name!r}"
                value = _parse_cell(spec, row[positions[spec.name]], frozenset({""}), where)
                if math.isnan(value):
                    raise DataFormatError(f"{where}: generated cells may not be missing")
                cells[spec.name].append(value)
    columns = {name: np.array(vals, dtype=np.float64) for name, vals in cells.items()}
    return SyntheticBatch(schema, columns)


def _run_protocol(args: list[str], step: str) -> None:
    try:
        proc = subprocess.run(args, capture_output=True, text=True)
    except OSError as exc:
        raise ExternalGeneratorError(f"cannot run external generator {args[0]!r}: {exc}") from None
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-8:]
        raise ExternalGeneratorError(
            f"external generator {step} failed with exit {proc.returncode}: "
            + (" | ".join(tail) if tail else "(no stderr)")
        )


class ExternalGeneratorModel(GeneratorModel):
    kind = "external"

    def __init__(self, schema: Schema, executable: str, model_dir: Path):
        self.executable = executable
        self.model_dir = model_dir
        super().__init__(schema, 0, "external", {"executable": executable, "model_dir": str(model_dir)})

    def sample(self, s: int, seed: int) -> SyntheticBatch:
        if s < 0:
            raise SchemaError(f"sample size must be >= 0, got {s}")
        out = self.model_dir / f"sample-{seed}-{s}.csv"
        _run_protocol(
            [
                self.executable,
                "sample",
                "--model-dir",
                str(self.model_dir / "state"),
                "--n",
                str(s),
                "--seed",
                str(seed),
                "--out",
                str(out),
            ],
            "sample",
        )
        try:
            batch = load_batch_csv(out, self.schema)
        except DataFormatError as exc:
            raise ExternalGeneratorError(f"external generator wrote a bad sample file: {exc}") from None
        finally:
            out.unlink(missing_ok=True)
        if batch.size != s:
            raise ExternalGeneratorError(
                f"external generator wrote {batch.size} rows, expected {s}"
            )
        return batch


def _fit_external(train: TrialDataset, hp: dict, seed: int) -> ExternalGeneratorModel:
    hp = _check_hyperparams("external", hp, {"executable": None, "workdir": None})
    executable = hp["executable"]
    if not executable:
        raise SchemaError("external generator needs an 'executable' hyperparameter")
    specs = _check_train(train)
    if hp["workdir"] is not None:
        model_dir = Path(hp["workdir"])
        model_dir.mkdir(parents=True, exist_ok=True)
    else:
        model_dir = Path(tempfile.mkdtemp(prefix="vcat-external-"))
    (model_dir / "state").mkdir(exist_ok=True)

    train_csv = model_dir / "train.csv"
    write_batch_csv(train.schema, train.columns, train_csv)
    schema_json = model_dir / "schema.json"
    payload = {"columns": []}
    for c in specs:
        entry: dict = {"name": c.name, "kind": c.kind}
        if c.kind == "categorical":
            entry["categories"] = list(c.categories)
        payload["columns"].append(entry)
    schema_json.write_text(json.dumps(payload, indent=2) + "\n")

    _run_protocol(
        [
            str(executable),
            "fit",
            "--train",
            str(train_csv),
            "--schema",
            str(schema_json),
            "--model-dir",
            str(model_dir / "state"),
            "--seed",
            str(seed),
        ],
        "fit",
    )
    return ExternalGeneratorModel(train.schema, str(executable), model_dir)


def fit(kind: str, train: TrialDataset, hyperparams: dict | None = None, seed: int = 0) -> GeneratorModel:
    """Fit a generative model of the given kind on complete training records."""
    hp = dict(hyperparams or {})
    if kind == "bootstrap":
        return _fit_bootstrap(train, hp)
    if kind == "marginals":
        return _fit_marginals(train, hp)
    if kind == "copula":
        return _fit_copula(train, hp)
    if kind == "external":
        return _fit_external(train, hp, seed)
    raise SchemaError(f"unknown generator kind {kind!r}; expected one of {GENERATOR_KINDS}")
