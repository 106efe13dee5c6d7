"""Schema handling and the CSV wire format.

The caller hands over a schema JSON (``{"columns": [{"name", "kind",
"categories"?}]}``) plus CSV files whose header names exactly the schema's
columns in order. Categorical cells travel as their labels, outcomes as 0/1,
numerics as plain decimal text; integral floats are written without a
fractional part. Training input and sample output share the format, and
missing cells are not part of the contract in either direction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KINDS = ("numeric", "categorical", "outcome")


class SidecarError(Exception):
    """Invalid schema, data, hyperparameters, or model directory."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: tuple[str, ...] = ()

    @property
    def discrete(self) -> bool:
        return self.kind != "numeric"

    @property
    def support(self) -> int:
        return 2 if self.kind == "outcome" else len(self.categories)

    def to_json(self) -> dict:
        entry: dict = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            entry["categories"] = list(self.categories)
        return entry


def columns_from_json(payload) -> list[Column]:
    if not isinstance(payload, dict) or not isinstance(payload.get("columns"), list):
        raise SidecarError("schema must be an object with a 'columns' list")
    columns: list[Column] = []
    seen: set[str] = set()
    for entry in payload["columns"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise SidecarError(f"bad schema column entry: {entry!r}")
        name, kind = entry["name"], entry.get("kind")
        if kind not in KINDS:
            raise SidecarError(f"column {name!r}: kind must be one of {KINDS}, got {kind!r}")
        if name in seen:
            raise SidecarError(f"duplicate column name {name!r}")
        seen.add(name)
        categories: tuple[str, ...] = ()
        if kind == "categorical":
            raw = entry.get("categories")
            if not isinstance(raw, list) or len(raw) < 2:
                raise SidecarError(f"column {name!r}: needs at least 2 categories")
            if any(not isinstance(c, str) for c in raw) or len(set(raw)) != len(raw):
                raise SidecarError(f"column {name!r}: categories must be distinct strings")
            categories = tuple(raw)
        columns.append(Column(name, kind, categories))
    if not columns:
        raise SidecarError("schema lists no columns")
    return columns


def load_schema(path: str | Path) -> list[Column]:
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SidecarError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SidecarError(f"schema file {path} is not valid JSON: {exc}") from None
    return columns_from_json(payload)


def save_schema(columns: list[Column], path: str | Path) -> None:
    payload = {"columns": [c.to_json() for c in columns]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _parse_cell(column: Column, text: str, where: str) -> float:
    if text == "":
        raise SidecarError(f"{where}: missing cell; the protocol carries complete records")
    if column.kind == "categorical":
        try:
            return float(column.categories.index(text))
        except ValueError:
            raise SidecarError(
                f"{where}: value {text!r} not in categories of column {column.name!r}"
            ) from None
    try:
        value = float(text)
    except ValueError:
        raise SidecarError(f"{where}: cannot parse {text!r} as a number") from None
    if column.kind == "outcome" and value not in (0.0, 1.0):
        raise SidecarError(f"{where}: outcome cell must be 0 or 1, got {text!r}")
    if not math.isfinite(value):
        raise SidecarError(f"{where}: non-finite value {text!r}")
    return value


def read_table(path: str | Path, columns: list[Column]) -> dict[str, np.ndarray]:
    """Parse a protocol CSV into float arrays keyed by column name."""
    names = [c.name for c in columns]
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise SidecarError(f"data file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SidecarError(f"{path}: file has no header") from None
        if header != names:
            raise SidecarError(f"{path}: header {header} does not match schema columns {names}")
        cells: dict[str, list[float]] = {name: [] for name in names}
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise SidecarError(f"{path} line {row_no}: wrong cell count")
            for column, text in zip(columns, row):
                where = f"{path} line {row_no}, column {column.name!r}"
                cells[column.name].append(_parse_cell(column, text, where))
    if not cells[names[0]]:
        raise SidecarError(f"{path}: training file holds no rows")
    return {name: np.array(values, dtype=np.float64) for name, values in cells.items()}


def format_cell(column: Column, value: float) -> str:
    if column.kind == "categorical":
        return column.categories[int(value)]
    if column.kind == "outcome":
        return str(int(value))
    if value == math.floor(value) and abs(value) < 2**53:
        return str(int(value))
    return repr(float(value))


def write_table(path: str | Path, columns: list[Column], arrays: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in columns])
        n = len(arrays[columns[0].name]) if columns else 0
        for i in range(n):
            writer.writerow([format_cell(c, arrays[c.name][i]) for c in columns])
