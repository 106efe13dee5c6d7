"""Hyperparameter selection for generative models by cross-validated fidelity.

Candidates come from the cartesian product of a named grid, evaluated in grid
order. Each candidate is scored by k-fold cross-validation on the training
records: fit on the other folds, sample a batch the size of the held-out
fold, score it against the held-out records with the general fidelity score,
and average over folds. Ties resolve to the earliest grid position.

``multi_trainset_tune`` repeats the whole procedure on several independently
drawn training sets and averages each candidate's score across them before
taking the argmax, so the choice is not an artifact of one draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .dataset import TrialDataset, draw_training_set
from .errors import SchemaError
from .fidelity import general_score
from .generators import fit
from .seeding import derive_seed, rng_for


@dataclass(frozen=True)
class HyperGrid:
    """Named axes of candidate hyperparameter values, in insertion order."""

    axes: dict[str, list]

    def __post_init__(self) -> None:
        if not self.axes:
            raise SchemaError("hyperparameter grid must have at least one axis")
        for name, values in self.axes.items():
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise SchemaError(f"grid axis {name!r} must be a non-empty list")

    def candidates(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in product(*self.axes.values())]

    @property
    def size(self) -> int:
        n = 1
        for values in self.axes.values():
            n *= len(values)
        return n


@dataclass(frozen=True)
class TuningResult:
    """Winning hyperparameters plus the full score table."""

    kind: str
    best_params: dict
    best_index: int
    best_score: float
    candidates: list[dict]
    candidate_scores: list[float]
    fold_scores: list[list[float]] = field(default_factory=list)
    per_set_scores: list[list[float]] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "best_params": self.best_params,
            "best_index": self.best_index,
            "best_score": self.best_score,
            "candidates": self.candidates,
            "candidate_scores": self.candidate_scores,
        }
        if self.fold_scores:
            out["fold_scores"] = self.fold_scores
        if self.per_set_scores:
            out["per_set_scores"] = self.per_set_scores
        return out


def _argmax_earliest(scores: list[float]) -> int:
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


def fold_partition(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle split into contiguous chunks with sizes differing by <= 1."""
    if not 2 <= folds <= n:
        raise SchemaError(f"folds must be in [2, {n}], got {folds}")
    perm = rng_for(seed, "folds").permutation(n)
    base, rem = divmod(n, folds)
    out, start = [], 0
    for i in range(folds):
        size = base + (1 if i < rem else 0)
        out.append(perm[start : start + size])
        start += size
    return out


def grid_search_cv(
    kind: str,
    train: TrialDataset,
    grid: HyperGrid | dict,
    folds: int = 5,
    seed: int = 0,
) -> TuningResult:
    """Cross-validated fidelity argmax over the candidate grid."""
    if isinstance(grid, dict):
        grid = HyperGrid(grid)
    candidates = grid.candidates()
    parts = fold_partition(train.m, folds, seed)
    all_rows = np.arange(train.m)

    fold_scores: list[list[float]] = []
    for ci, cand in enumerate(candidates):
        row = []
        for fi, held_rows in enumerate(parts):
            fit_rows = np.setdiff1d(all_rows, held_rows)
            model = fit(kind, train.take(fit_rows), cand, seed=derive_seed(seed, "fit", ci, fi))
            batch = model.sample(len(held_rows), derive_seed(seed, "sample", ci, fi))
            row.append(general_score(train.take(held_rows), batch).overall)
        fold_scores.append(row)

    candidate_scores = [float(np.mean(np.asarray(row))) for row in fold_scores]
    best = _argmax_earliest(candidate_scores)
    return TuningResult(
        kind,
        candidates[best],
        best,
        candidate_scores[best],
        candidates,
        candidate_scores,
        fold_scores=fold_scores,
    )


def multi_trainset_tune(
    kind: str,
    ds: TrialDataset,
    n: int,
    grid: HyperGrid | dict,
    num_sets: int = 3,
    folds: int = 5,
    seed: int = 0,
) -> TuningResult:
    """Argmax of candidate scores averaged over several drawn training sets."""
    if isinstance(grid, dict):
        grid = HyperGrid(grid)
    if num_sets < 1:
        raise SchemaError(f"num_sets must be >= 1, got {num_sets}")
    per_set: list[list[float]] = []
    for si in range(num_sets):
        training = draw_training_set(ds, n, derive_seed(seed, "tune_set", si))
        result = grid_search_cv(
            kind, ds.control_subset(training), grid, folds, seed=derive_seed(seed, "cv", si)
        )
        per_set.append(result.candidate_scores)

    candidates = grid.candidates()
    averaged = [float(np.mean(np.asarray([row[ci] for row in per_set]))) for ci in range(len(candidates))]
    best = _argmax_earliest(averaged)
    return TuningResult(
        kind,
        candidates[best],
        best,
        averaged[best],
        candidates,
        averaged,
        per_set_scores=per_set,
    )
