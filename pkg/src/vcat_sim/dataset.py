"""Trial data model: schema, dataset container, CSV round-trip, training sets.

A trial is a rectangular table of patient records. Columns are declared by a
schema (see :class:`ColumnSpec`); the dataset stores every column as a float64
numpy array. Categorical cells hold the index of the label in the column's
category list, missing cells hold NaN. Enrolment ranks order patients by
recruitment time and survive arbitrary on-disk row permutations when the
schema declares an ``enrolment_order`` column.

Usage:

    schema = load_schema("schema.json")
    ds = load_csv("trial.csv", schema)
    train = select_n_first(ds, n=1000)
    records = ds.control_subset(train)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, SchemaError
from .seeding import rng_for

COLUMN_KINDS = ("numeric", "categorical", "outcome", "arm", "enrolment_order")

# Kinds a generative model reproduces. arm is forced to 0 on synthetic
# records and enrolment order is bookkeeping, so neither is modelled.
MODELLED_KINDS = ("numeric", "categorical", "outcome")


@dataclass(frozen=True)
class ColumnSpec:
    """Declaration of one trial column.

    Attributes:
        name: column name, unique within a schema.
        kind: one of ``COLUMN_KINDS``.
        categories: allowed labels, categorical columns only.
    """

    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in COLUMN_KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.categories:
                raise SchemaError(f"column {self.name!r}: categorical needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"column {self.name!r}: duplicate categories")
        elif self.categories:
            raise SchemaError(f"column {self.name!r}: only categorical columns take categories")


class Schema:
    """Ordered collection of column specs with the trial-level invariants.

    Exactly one arm column; at most one outcome and at most one
    enrolment_order column. An outcome column may be absent on raw data and
    added later by :func:`derive_binary_outcome`.
    """

    def __init__(self, columns: list[ColumnSpec] | tuple[ColumnSpec, ...]):
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dup}")
        for kind in ("arm", "outcome", "enrolment_order"):
            hits = [c.name for c in columns if c.kind == kind]
            if len(hits) > 1:
                raise SchemaError(f"more than one {kind} column: {hits}")
        if not any(c.kind == "arm" for c in columns):
            raise SchemaError("schema declares no arm column")
        self.columns: tuple[ColumnSpec, ...] = tuple(columns)
        self._by_name = {c.name: c for c in self.columns}

    def __iter__(self):
        return iter(self.columns)

    def __len__(self) -> int:
        return len(self.columns)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Schema) and self.columns == other.columns

    def __getitem__(self, name: str) -> ColumnSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"no column named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def _single(self, kind: str) -> ColumnSpec | None:
        for c in self.columns:
            if c.kind == kind:
                return c
        return None

    @property
    def arm(self) -> ColumnSpec:
        spec = self._single("arm")
        assert spec is not None  # guaranteed by the constructor
        return spec

    @property
    def outcome(self) -> ColumnSpec:
        spec = self._single("outcome")
        if spec is None:
            raise SchemaError("schema declares no outcome column")
        return spec

    @property
    def has_outcome(self) -> bool:
        return self._single("outcome") is not None

    @property
    def order(self) -> ColumnSpec | None:
        return self._single("enrolment_order")

    @property
    def modelled(self) -> list[ColumnSpec]:
        """Columns a generative model reproduces (numeric, categorical, outcome)."""
        return [c for c in self.columns if c.kind in MODELLED_KINDS]

    def to_json(self) -> dict:
        cols = []
        for c in self.columns:
            entry: dict = {"name": c.name, "kind": c.kind}
            if c.kind == "categorical":
                entry["categories"] = list(c.categories)
            cols.append(entry)
        return {"columns": cols}


def schema_from_json(payload: dict) -> Schema:
    if not isinstance(payload, dict) or "columns" not in payload:
        raise SchemaError("schema JSON must be an object with a 'columns' list")
    cols = []
    for entry in payload["columns"]:
        try:
            cols.append(
                ColumnSpec(
                    name=str(entry["name"]),
                    kind=str(entry["kind"]),
                    categories=tuple(entry.get("categories", ())),
                )
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad schema column entry {entry!r}: {exc}") from None
    return Schema(cols)


def load_schema(path: str | Path) -> Schema:
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SchemaError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from None
    return schema_from_json(payload)


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_json(), indent=2) + "\n")


# ============================================================================
# Dataset container
# ============================================================================


@dataclass(frozen=True)
class PatientRecord:
    """Row view of a dataset, mainly for tests and inspection."""

    covariates: dict[str, float | str | None]
    outcome: int | None
    arm: int
    enrolment_rank: int


class TrialDataset:
    """Columnar trial table.

    Attributes:
        schema: the column declarations.
        columns: name -> float64 array; categorical cells are category
            indices, missing cells are NaN.
        ranks: enrolment ranks per row. Mirrors the declared
            enrolment_order column when there is one, otherwise row order
            at load time (subsets keep the original values).
    """

    def __init__(
        self,
        schema: Schema,
        columns: dict[str, np.ndarray],
        ranks: np.ndarray | None = None,
    ):
        if set(columns) != set(schema.names):
            missing = sorted(set(schema.names) - set(columns))
            extra = sorted(set(columns) - set(schema.names))
            raise SchemaError(f"columns do not match schema (missing {missing}, extra {extra})")
        lengths = {len(v) for v in columns.values()}
        if len(lengths) > 1:
            raise SchemaError(f"ragged columns: lengths {sorted(lengths)}")
        self.schema = schema
        self.columns = {name: np.asarray(columns[name], dtype=np.float64) for name in schema.names}
        m = len(next(iter(self.columns.values()))) if self.columns else 0

        order_spec = schema.order
        if order_spec is not None:
            self.ranks = self.columns[order_spec.name].astype(np.int64)
        elif ranks is not None:
            self.ranks = np.asarray(ranks, dtype=np.int64)
        else:
            self.ranks = np.arange(m, dtype=np.int64)
        if len(self.ranks) != m:
            raise SchemaError("ranks length does not match the table")
        self._validate()

    def _validate(self) -> None:
        arm = self.columns[self.schema.arm.name]
        if np.isnan(arm).any():
            raise DataFormatError(f"arm column {self.schema.arm.name!r} has missing cells")
        if not np.isin(arm, (0.0, 1.0)).all():
            raise DataFormatError(f"arm column {self.schema.arm.name!r} must be 0/1")
        for spec in self.schema:
            col = self.columns[spec.name]
            if spec.kind == "outcome":
                seen = col[~np.isnan(col)]
                if not np.isin(seen, (0.0, 1.0)).all():
                    raise DataFormatError(f"outcome column {spec.name!r} must be 0/1")
            elif spec.kind == "categorical":
                seen = col[~np.isnan(col)]
                ok = (seen == np.floor(seen)) & (seen >= 0) & (seen < len(spec.categories))
                if not ok.all():
                    raise DataFormatError(f"categorical column {spec.name!r} has out-of-range codes")
            elif spec.kind == "enrolment_order":
                if np.isnan(col).any():
                    raise DataFormatError(f"enrolment column {spec.name!r} has missing cells")
        if self.m > 0:
            if (self.ranks < 0).any():
                raise DataFormatError("enrolment ranks must be non-negative")
            if len(np.unique(self.ranks)) != self.m:
                raise DataFormatError("enrolment ranks must be distinct")

    # -- shape ---------------------------------------------------------------

    @property
    def m(self) -> int:
        """Total number of records."""
        return len(self.ranks)

    @property
    def arm_values(self) -> np.ndarray:
        return self.columns[self.schema.arm.name]

    @property
    def m0(self) -> int:
        """Number of control records."""
        return int((self.arm_values == 0.0).sum())

    @property
    def m1(self) -> int:
        """Number of treated records."""
        return int((self.arm_values == 1.0).sum())

    @property
    def outcome_values(self) -> np.ndarray:
        return self.columns[self.schema.outcome.name]

    def control_row_indices(self) -> np.ndarray:
        """Dataset row indices of control records, in row order."""
        return np.flatnonzero(self.arm_values == 0.0)

    # -- row access ----------------------------------------------------------

    def record(self, i: int) -> PatientRecord:
        cov: dict[str, float | str | None] = {}
        outcome: int | None = None
        arm = 0
        for spec in self.schema:
            v = self.columns[spec.name][i]
            if spec.kind == "arm":
                arm = int(v)
            elif spec.kind == "outcome":
                outcome = None if math.isnan(v) else int(v)
            elif spec.kind == "enrolment_order":
                continue
            elif spec.kind == "categorical":
                cov[spec.name] = None if math.isnan(v) else spec.categories[int(v)]
            else:
                cov[spec.name] = None if math.isnan(v) else float(v)
        return PatientRecord(cov, outcome, arm, int(self.ranks[i]))

    def records(self) -> list[PatientRecord]:
        return [self.record(i) for i in range(self.m)]

    @property
    def has_missing(self) -> bool:
        return any(np.isnan(self.columns[c.name]).any() for c in self.schema.modelled)

    # -- derived tables --------------------------------------------------------

    def take(self, rows: np.ndarray) -> "TrialDataset":
        """New dataset holding the given rows (original ranks preserved)."""
        cols = {name: arr[rows] for name, arr in self.columns.items()}
        return TrialDataset(self.schema, cols, ranks=self.ranks[rows])

    def control_subset(self, training: "TrainingSet") -> "TrialDataset":
        """Resolve a training set to its control records."""
        return self.take(self.control_row_indices()[training.indices])

    def with_columns(self, schema: Schema, columns: dict[str, np.ndarray]) -> "TrialDataset":
        """Same rows under a different schema (outcome derivation, recoding)."""
        return TrialDataset(schema, columns, ranks=self.ranks)


# ============================================================================
# CSV round-trip
# ============================================================================


def format_cell(spec: ColumnSpec, value: float) -> str:
    """Canonical text form of one cell. Missing cells become ''."""
    if math.isnan(value):
        return ""
    if spec.kind == "categorical":
        return spec.categories[int(value)]
    if spec.kind in ("outcome", "arm", "enrolment_order"):
        return str(int(value))
    if value == math.floor(value) and abs(value) < 2**53:
        return str(int(value))
    return repr(float(value))


def _parse_cell(
    spec: ColumnSpec,
    text: str,
    missing_values: frozenset[str],
    where: str,
) -> float:
    if text in missing_values:
        if spec.kind in ("arm", "enrolment_order"):
            raise DataFormatError(f"{where}: {spec.kind} cell may not be missing")
        return math.nan
    if spec.kind == "categorical":
        try:
            return float(spec.categories.index(text))
        except ValueError:
            raise DataFormatError(
                f"{where}: value {text!r} not in categories of column {spec.name!r}"
            ) from None
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"{where}: cannot parse {text!r} as a number") from None
    if spec.kind in ("outcome", "arm") and v not in (0.0, 1.0):
        raise DataFormatError(f"{where}: {spec.kind} cell must be 0 or 1, got {text!r}")
    if spec.kind == "enrolment_order" and v != math.floor(v):
        raise DataFormatError(f"{where}: enrolment rank must be an integer, got {text!r}")
    return v


def load_csv(
    path: str | Path,
    schema: Schema,
    missing_values: tuple[str, ...] = ("",),
) -> TrialDataset:
    """Parse a trial CSV against a schema.

    The header must contain exactly the schema's column names (any order).
    Cells listed in ``missing_values`` parse as missing. When the schema
    declares an enrolment_order column its values are authoritative and must
    be a permutation of 0..m-1; otherwise ranks are assigned by row order.
    """
    missing = frozenset(missing_values) | {""}
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataFormatError(f"data file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: no records") from None
        if len(set(header)) != len(header):
            dup = sorted({h for h in header if header.count(h) > 1})
            raise DataFormatError(f"{path}: duplicate header columns {dup}")
        if set(header) != set(schema.names):
            miss = sorted(set(schema.names) - set(header))
            extra = sorted(set(header) - set(schema.names))
            raise DataFormatError(
                f"{path}: header does not match schema (missing {miss}, unknown {extra})"
            )
        positions = {name: header.index(name) for name in schema.names}
        cells: dict[str, list[float]] = {name: [] for name in schema.names}
        n_rows = 0
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(f"{path} line {row_no}: expected {len(header)} cells, got {len(row)}")
            for spec in schema:
                where = f"{path} line {row_no}, column {spec.name!r}"
                cells[spec.name].append(_parse_cell(spec, row[positions[spec.name]], missing, where))
            n_rows += 1
    if n_rows == 0:
        raise DataFormatError(f"{path}: no records")
    columns = {name: np.array(vals, dtype=np.float64) for name, vals in cells.items()}
    ds = TrialDataset(schema, columns)
    if schema.order is not None:
        expected = np.arange(ds.m, dtype=np.int64)
        if not np.array_equal(np.sort(ds.ranks), expected):
            raise DataFormatError(
                f"{path}: enrolment ranks must be a permutation of 0..{ds.m - 1}"
            )
    return ds


def write_csv(ds: TrialDataset, path: str | Path) -> None:
    """Write a dataset in canonical form (schema column order, '' for missing)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.schema.names)
        arrays = [ds.columns[name] for name in ds.schema.names]
        specs = list(ds.schema)
        for i in range(ds.m):
            writer.writerow([format_cell(spec, arr[i]) for spec, arr in zip(specs, arrays)])


# ============================================================================
# Outcome derivation and category recoding
# ============================================================================

MISSING = None  # marker usable in derivation rule keys and values


def derive_binary_outcome(
    ds: TrialDataset,
    col_a: str,
    col_b: str,
    rule: dict[tuple[str | None, str | None], int | None],
    name: str = "outcome",
) -> TrialDataset:
    """Replace two categorical source columns with a rule-derived binary outcome.

    ``rule`` maps (value_a, value_b) pairs to 0, 1, or None (missing); None in
    a key position matches a missing source cell. The rule must cover every
    observed pair. The source columns are dropped from the schema.
    """
    if ds.schema.has_outcome:
        raise SchemaError(f"dataset already has an outcome column {ds.schema.outcome.name!r}")
    spec_a, spec_b = ds.schema[col_a], ds.schema[col_b]
    for spec in (spec_a, spec_b):
        if spec.kind != "categorical":
            raise SchemaError(f"outcome source column {spec.name!r} must be categorical")
    if name in ds.schema and name not in (col_a, col_b):
        raise SchemaError(f"column {name!r} already exists")

    a_codes = ds.columns[col_a]
    b_codes = ds.columns[col_b]
    derived = np.full(ds.m, np.nan)
    for i in range(ds.m):
        a = None if math.isnan(a_codes[i]) else spec_a.categories[int(a_codes[i])]
        b = None if math.isnan(b_codes[i]) else spec_b.categories[int(b_codes[i])]
        key = (a, b)
        if key not in rule:
            raise DataFormatError(
                f"derivation rule not total: observed pair ({a!r}, {b!r}) has no entry"
            )
        v = rule[key]
        if v is not None:
            if v not in (0, 1):
                raise SchemaError(f"derivation rule maps {key!r} to {v!r}, expected 0/1/None")
            derived[i] = float(v)

    new_cols = [c for c in ds.schema.columns if c.name not in (col_a, col_b)]
    new_cols.append(ColumnSpec(name, "outcome"))
    new_schema = Schema(new_cols)
    columns = {c.name: ds.columns[c.name] for c in new_cols if c.name != name}
    columns[name] = derived
    return ds.with_columns(new_schema, columns)


def recode_categories(ds: TrialDataset, column: str, mapping: dict[str, str]) -> TrialDataset:
    """Merge or rename categories of one categorical column.

    Every category observed in the data must appear in ``mapping``; categories
    declared but unobserved may be omitted (kept unchanged). The new category
    list is the mapping image in first-occurrence order.
    """
    spec = ds.schema[column]
    if spec.kind != "categorical":
        raise SchemaError(f"column {column!r} is {spec.kind}, not categorical")
    codes = ds.columns[column]
    observed = {spec.categories[int(v)] for v in codes[~np.isnan(codes)]}
    unmapped = sorted(observed - set(mapping))
    if unmapped:
        raise DataFormatError(f"recode mapping misses observed categories {unmapped} in {column!r}")

    new_categories: list[str] = []
    new_code_of: dict[str, int] = {}
    old_to_new = np.zeros(len(spec.categories))
    for old_idx, old in enumerate(spec.categories):
        target = mapping.get(old, old)
        if target not in new_code_of:
            new_code_of[target] = len(new_categories)
            new_categories.append(target)
        old_to_new[old_idx] = new_code_of[target]

    new_codes = codes.copy()
    seen = ~np.isnan(codes)
    new_codes[seen] = old_to_new[codes[seen].astype(np.int64)]

    new_schema_cols = [
        ColumnSpec(column, "categorical", tuple(new_categories)) if c.name == column else c
        for c in ds.schema.columns
    ]
    columns = dict(ds.columns)
    columns[column] = new_codes
    return ds.with_columns(Schema(new_schema_cols), columns)


# ============================================================================
# Training sets
# ============================================================================


@dataclass(frozen=True)
class TrainingSet:
    """Ordered, injective index set into a dataset's control records."""

    indices: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1 or len(idx) == 0:
            raise SchemaError("training set must hold at least one index")
        if len(np.unique(idx)) != len(idx):
            raise SchemaError("training set indices must be distinct")
        if (idx < 0).any():
            raise SchemaError("training set indices must be non-negative")

    @property
    def n(self) -> int:
        return len(self.indices)


def select_n_first(ds: TrialDataset, n: int) -> TrainingSet:
    """The n earliest-enrolled control records (by enrolment rank, not row order)."""
    m0 = ds.m0
    if not 1 <= n <= m0:
        raise SchemaError(f"n must be in [1, {m0}], got {n}")
    control_rows = ds.control_row_indices()
    order = np.argsort(ds.ranks[control_rows], kind="stable")
    return TrainingSet(order[:n])


def draw_training_set(ds: TrialDataset, n: int, seed: int) -> TrainingSet:
    """Uniform draw of n distinct control records (without replacement)."""
    m0 = ds.m0
    if not 1 <= n <= m0:
        raise SchemaError(f"n must be in [1, {m0}], got {n}")
    rng = rng_for(seed, "draw_training_set")
    return TrainingSet(rng.choice(m0, size=n, replace=False))
