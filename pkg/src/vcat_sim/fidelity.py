"""Column and column-pair fidelity scores between real and synthetic records.

Every score lies in [0, 1] with 1 meaning indistinguishable under the metric:

- numeric columns: one minus the two-sample KS statistic;
- categorical (and binary outcome) columns: one minus the total variation
  distance between category frequency tables over the union of the support;
- numeric pairs: one minus half the absolute difference of the Pearson
  correlations;
- categorical pairs: one minus the total variation distance between joint
  contingency tables, cell-wise over the union of observed cells;
- mixed pairs: the numeric column is discretized into equal-width bins over
  the real data's range, then scored as a categorical pair.

The overall score is the unweighted mean of all column scores and all
non-skipped pair scores. Only modelled columns are scored: the arm column is
structurally constant in generated batches (always control) and the
enrolment-order column is bookkeeping, so neither carries fidelity
information. Pairs where either side of a numeric column has zero variance
are skipped with a reason rather than scored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dataset import ColumnSpec, TrialDataset
from .errors import DataFormatError, SchemaError
from .generators import SyntheticBatch

MIXED_PAIR_BINS = 10


@dataclass(frozen=True)
class QualityReport:
    """General fidelity score with its per-column and per-pair breakdown."""

    overall: float
    column_scores: dict[str, float]
    pair_scores: dict[str, float]
    skipped: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "overall": self.overall,
            "column_scores": self.column_scores,
            "pair_scores": self.pair_scores,
            "skipped": self.skipped,
        }


def _nonempty(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataFormatError(f"{name} must be a non-empty 1-d vector")
    if np.isnan(arr).any():
        raise DataFormatError(f"{name} has missing cells; fidelity needs complete data")
    return arr


def ks_complement(real, synthetic) -> float:
    """One minus the largest gap between the two empirical CDFs."""
    r = np.sort(_nonempty(real, "real column"))
    s = np.sort(_nonempty(synthetic, "synthetic column"))
    grid = np.concatenate([r, s])
    cdf_r = np.searchsorted(r, grid, side="right") / len(r)
    cdf_s = np.searchsorted(s, grid, side="right") / len(s)
    return 1.0 - float(np.max(np.abs(cdf_r - cdf_s)))


def frequency_table(codes: np.ndarray, support: int) -> np.ndarray:
    counts = np.bincount(codes.astype(np.int64), minlength=support).astype(np.float64)
    return counts / len(codes)


def tv_complement_probs(p: np.ndarray, q: np.ndarray) -> float:
    """One minus the total variation distance between two frequency tables."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DataFormatError("frequency tables must share their support")
    return 1.0 - 0.5 * float(np.abs(p - q).sum())


def tv_complement(real_codes, syn_codes, support: int) -> float:
    r = _nonempty(real_codes, "real column")
    s = _nonempty(syn_codes, "synthetic column")
    return tv_complement_probs(frequency_table(r, support), frequency_table(s, support))


def pearson_similarity(real_a, real_b, syn_a, syn_b) -> float:
    """One minus half the absolute difference between the two correlations."""
    ra, rb = _nonempty(real_a, "real column"), _nonempty(real_b, "real column")
    sa, sb = _nonempty(syn_a, "synthetic column"), _nonempty(syn_b, "synthetic column")
    for arr, label in ((ra, "real"), (rb, "real"), (sa, "synthetic"), (sb, "synthetic")):
        if np.all(arr == arr[0]):
            raise DataFormatError(f"zero variance in a {label} column; correlation undefined")
    rho_r = float(np.corrcoef(ra, rb)[0, 1])
    rho_s = float(np.corrcoef(sa, sb)[0, 1])
    return 1.0 - abs(rho_r - rho_s) / 2.0


def contingency_similarity(real_a, real_b, syn_a, syn_b, support_a: int, support_b: int) -> float:
    """Cell-wise TV complement between the two joint frequency tables."""
    ra, rb = _nonempty(real_a, "real column"), _nonempty(real_b, "real column")
    sa, sb = _nonempty(syn_a, "synthetic column"), _nonempty(syn_b, "synthetic column")
    joint_r = ra.astype(np.int64) * support_b + rb.astype(np.int64)
    joint_s = sa.astype(np.int64) * support_b + sb.astype(np.int64)
    cells = support_a * support_b
    return tv_complement_probs(frequency_table(joint_r, cells), frequency_table(joint_s, cells))


def discretize(values, bins: int, reference) -> np.ndarray:
    """Equal-width bin codes over the reference range.

    Bin edges span [min(reference), max(reference)]. A value exactly on an
    interior edge goes to the upper bin; values outside the reference range
    (possible for synthetic data) clamp to the edge bins. A constant
    reference collapses everything to bin 0.
    """
    if bins < 1:
        raise SchemaError(f"bins must be >= 1, got {bins}")
    vals = _nonempty(values, "column to discretize")
    ref = _nonempty(reference, "reference column")
    lo, hi = float(ref.min()), float(ref.max())
    if lo == hi:
        return np.zeros(len(vals))
    edges = np.linspace(lo, hi, bins + 1)
    codes = np.searchsorted(edges, vals, side="right") - 1
    return np.clip(codes, 0, bins - 1).astype(np.float64)


def _support(spec: ColumnSpec) -> int:
    return 2 if spec.kind == "outcome" else len(spec.categories)


def general_score(real: TrialDataset, synthetic: TrialDataset | SyntheticBatch) -> QualityReport:
    """Mean fidelity over all scoreable columns and unordered column pairs."""
    if real.schema.columns != synthetic.schema.columns:
        raise SchemaError("real and synthetic data must share one schema")
    specs = real.schema.modelled
    for spec in specs:
        if spec.name not in synthetic.columns:
            raise SchemaError(f"synthetic data misses column {spec.name!r}")
    if real.m == 0 or getattr(synthetic, "size", getattr(synthetic, "m", 0)) == 0:
        raise DataFormatError("fidelity needs non-empty real and synthetic data")

    column_scores: dict[str, float] = {}
    pair_scores: dict[str, float] = {}
    skipped: list[dict] = []

    for spec in specs:
        r, s = real.columns[spec.name], synthetic.columns[spec.name]
        if spec.kind == "numeric":
            column_scores[spec.name] = ks_complement(r, s)
        else:
            column_scores[spec.name] = tv_complement(r, s, _support(spec))

    for a, b in combinations(specs, 2):
        key = f"{a.name}::{b.name}"
        ra, rb = real.columns[a.name], real.columns[b.name]
        sa, sb = synthetic.columns[a.name], synthetic.columns[b.name]
        numeric_a, numeric_b = a.kind == "numeric", b.kind == "numeric"
        if numeric_a and numeric_b:
            constant = None
            for arr, col, side in ((ra, a, "real"), (rb, b, "real"), (sa, a, "synthetic"), (sb, b, "synthetic")):
                if np.all(arr == arr[0]):
                    constant = (col.name, side)
                    break
            if constant is not None:
                skipped.append(
                    {"target": key, "reason": f"zero variance in {constant[1]} column {constant[0]!r}"}
                )
                continue
            pair_scores[key] = float(np.clip(pearson_similarity(ra, rb, sa, sb), 0.0, 1.0))
        else:
            if numeric_a:
                sup_a = MIXED_PAIR_BINS
                ca, csa = discretize(ra, MIXED_PAIR_BINS, ra), discretize(sa, MIXED_PAIR_BINS, ra)
            else:
                sup_a = _support(a)
                ca, csa = ra, sa
            if numeric_b:
                sup_b = MIXED_PAIR_BINS
                cb, csb = discretize(rb, MIXED_PAIR_BINS, rb), discretize(sb, MIXED_PAIR_BINS, rb)
            else:
                sup_b = _support(b)
                cb, csb = rb, sb
            pair_scores[key] = contingency_similarity(ca, cb, csa, csb, sup_a, sup_b)

    scores = list(column_scores.values()) + list(pair_scores.values())
    if not scores:
        raise DataFormatError("nothing to score: no scoreable columns")
    overall = float(np.mean(np.asarray(scores)))
    return QualityReport(overall, column_scores, pair_scores, skipped)
