"""Experiment drivers: trial simulation, n-first completion, sensitivity runs.

Seeding scheme
--------------
Every random task derives its own 64-bit seed from (master seed, experiment
tag, training-set index, replicate index). Results are therefore independent
of worker scheduling: a sensitivity run with ``jobs=8`` is byte-identical to
``jobs=1``. Reductions always happen in training-set index order.

``simulate_trial`` consumes its stream in a fixed documented order (arm
permutation, outcomes, numeric covariates, categorical covariates), so a
simulated trial is fully pinned by its spec and seed.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np

from .dataset import (
    ColumnSpec,
    Schema,
    TrialDataset,
    draw_training_set,
    select_n_first,
)
from .errors import DataFormatError, SchemaError
from .estimators import (
    ArmSummary,
    DecisionLabel,
    EffectEstimate,
    averaged,
    binary_mean_var,
    classify,
    mse,
    one_shot,
    rct_effect,
    treated_summary,
)
from .generators import GeneratorModel, fit
from .seeding import derive_seed, rng_for
from .tuning import HyperGrid, TuningResult, grid_search_cv, multi_trainset_tune

PANEL_STRIDE = 20


# ============================================================================
# Trial simulation
# ============================================================================


@dataclass(frozen=True)
class CategoricalCovariate:
    """Independent categorical covariate; probabilities default to uniform."""

    name: str
    categories: tuple[str, ...]
    probs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.categories) < 2:
            raise SchemaError(f"covariate {self.name!r} needs at least 2 categories")
        if self.probs is not None:
            if len(self.probs) != len(self.categories):
                raise SchemaError(f"covariate {self.name!r}: probs do not match categories")
            if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
                raise SchemaError(f"covariate {self.name!r}: probs must be a distribution")


@dataclass(frozen=True)
class SimSpec:
    """Bernoulli-outcome trial with optional linear drift in the control arm.

    The control event probability moves linearly from ``p_control_start`` to
    ``p_control_start + drift`` along the control enrolment sequence; the
    treated arm keeps ``p_treated`` throughout. Covariates are independent of
    outcomes and of each other.
    """

    m0: int
    m1: int
    p_treated: float
    p_control_start: float
    drift: float = 0.0
    numeric_covariates: int = 0
    categorical_covariates: tuple[CategoricalCovariate, ...] = ()

    def __post_init__(self) -> None:
        if self.m0 < 1 or self.m1 < 1:
            raise SchemaError("both arms need at least one patient")
        for label, p in (("p_treated", self.p_treated), ("p_control_start", self.p_control_start)):
            if not 0.0 <= p <= 1.0:
                raise SchemaError(f"{label} must be in [0, 1], got {p}")
        if not 0.0 <= self.p_control_start + self.drift <= 1.0:
            raise SchemaError("p_control_start + drift must stay in [0, 1]")
        if self.numeric_covariates < 0:
            raise SchemaError("numeric_covariates must be >= 0")


def sim_schema(spec: SimSpec) -> Schema:
    cols = [ColumnSpec(f"x{i + 1}", "numeric") for i in range(spec.numeric_covariates)]
    cols += [ColumnSpec(c.name, "categorical", c.categories) for c in spec.categorical_covariates]
    cols += [
        ColumnSpec("outcome", "outcome"),
        ColumnSpec("arm", "arm"),
        ColumnSpec("enrolled", "enrolment_order"),
    ]
    return Schema(cols)


def simulate_trial(spec: SimSpec, seed: int) -> TrialDataset:
    """Deterministic synthetic trial; row order is enrolment order."""
    schema = sim_schema(spec)
    m = spec.m0 + spec.m1
    rng = rng_for(seed, "simulate")

    arm = rng.permutation(np.concatenate([np.zeros(spec.m0), np.ones(spec.m1)]))
    control_pos = np.cumsum(arm == 0.0) - 1  # position within the control sequence
    span = max(spec.m0 - 1, 1)
    p = np.where(
        arm == 1.0,
        spec.p_treated,
        spec.p_control_start + spec.drift * (control_pos / span),
    )
    outcome = (rng.random(m) < p).astype(np.float64)

    columns: dict[str, np.ndarray] = {}
    for i in range(spec.numeric_covariates):
        columns[f"x{i + 1}"] = rng.standard_normal(m)
    for cov in spec.categorical_covariates:
        probs = np.asarray(cov.probs if cov.probs is not None else
                           [1.0 / len(cov.categories)] * len(cov.categories))
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        u = rng.random(m)
        columns[cov.name] = np.clip(
            np.searchsorted(cum, u, side="right"), 0, len(cov.categories) - 1
        ).astype(np.float64)

    columns["outcome"] = outcome
    columns["arm"] = arm
    columns["enrolled"] = np.arange(m, dtype=np.float64)
    return TrialDataset(schema, columns)


# ============================================================================
# Shared helpers
# ============================================================================


def correlation(x, y) -> float:
    """Pearson correlation; degenerate inputs are an error, not NaN."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataFormatError("correlation needs two equal-length vectors")
    if len(a) < 2:
        raise DataFormatError("correlation needs at least 2 points")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DataFormatError("correlation undefined for zero-variance input")
    return float(np.corrcoef(a, b)[0, 1])


def relative_difference_pct(tau_est: float, tau_ref: float) -> float | None:
    """|estimate - reference| as a percentage of |reference|; None at zero reference."""
    if tau_ref == 0.0:
        return None
    return abs(tau_est - tau_ref) / abs(tau_ref) * 100.0


def _averaged_batches(
    model: GeneratorModel, train_y: np.ndarray, treated: ArmSummary, s: int, l: int, seeds: list[int]
) -> EffectEstimate:
    mat = np.empty((l, s))
    for j in range(l):
        mat[j] = model.sample(s, seeds[j]).outcomes
    return averaged(train_y, mat, treated)


def _training_effect(treated: ArmSummary, train_y: np.ndarray) -> float:
    mu, _ = binary_mean_var(int(train_y.sum()), train_y.size)
    return treated.mean - mu


# ============================================================================
# n-first completion experiment
# ============================================================================


@dataclass(frozen=True)
class NFirstReport:
    """One-shot and averaged estimates after completing the n-first control arm."""

    n: int
    s: int
    replicates: int
    generator: dict
    rct: EffectEstimate
    one_shot: EffectEstimate
    averaged: EffectEstimate
    labels: dict[str, DecisionLabel]
    relative_difference_pct: dict[str, float | None]
    tuning: TuningResult | None = None

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "s": self.s,
            "replicates": self.replicates,
            "generator": self.generator,
            "rct": self.rct.to_json(),
            "one_shot": self.one_shot.to_json(),
            "averaged": self.averaged.to_json(),
            "labels": {k: v.to_json() for k, v in self.labels.items()},
            "relative_difference_pct": self.relative_difference_pct,
        }
        if self.tuning is not None:
            out["tuning"] = self.tuning.to_json()
        return out


def run_n_first(
    ds: TrialDataset,
    n: int,
    generator: dict,
    l: int = 999,
    seed: int = 0,
    tune: dict | None = None,
) -> NFirstReport:
    """Keep the n earliest-enrolled controls, generate the rest, re-estimate.

    ``generator`` is ``{"kind": ..., "hyperparams": {...}}``. When ``tune``
    is given (``{"grid": ..., "folds": ...}``) a cross-validated grid search
    on the training records picks the hyperparameters first, and chosen
    values override the configured ones.
    """
    if l < 1:
        raise SchemaError(f"replicates must be >= 1, got {l}")
    kind = generator.get("kind")
    if not kind:
        raise SchemaError("generator config needs a 'kind'")
    hyperparams = dict(generator.get("hyperparams") or {})

    reference = rct_effect(ds)
    treated = treated_summary(ds)
    training = select_n_first(ds, n)
    sub = ds.control_subset(training)
    train_y = sub.outcome_values
    if np.isnan(train_y).any():
        raise DataFormatError("training outcomes have missing values; impute first")

    tuning_result = None
    if tune is not None:
        tuning_result = grid_search_cv(
            kind,
            sub,
            HyperGrid(dict(tune["grid"])),
            folds=int(tune.get("folds", 5)),
            seed=derive_seed(seed, "n_first", "tune"),
        )
        hyperparams.update(tuning_result.best_params)

    model = fit(kind, sub, hyperparams, seed=derive_seed(seed, "n_first", "fit"))
    s = ds.m0 - n

    one_batch = model.sample(s, derive_seed(seed, "n_first", "one_shot"))
    one = one_shot(train_y, one_batch.outcomes, treated)

    rep_seeds = [derive_seed(seed, "n_first", "replicate", j) for j in range(l)]
    avg = _averaged_batches(model, train_y, treated, s, l, rep_seeds)

    labels = {"one_shot": classify(one, reference), "averaged": classify(avg, reference)}
    rel = {
        "one_shot": relative_difference_pct(one.tau, reference.tau),
        "averaged": relative_difference_pct(avg.tau, reference.tau),
    }
    return NFirstReport(
        n, s, l, model.describe(), reference, one, avg, labels, rel, tuning_result
    )


# ============================================================================
# Sensitivity to the training set
# ============================================================================


@dataclass(frozen=True)
class SetResult:
    """Averaged estimate for one drawn training set."""

    index: int
    training_effect: float
    estimate: EffectEstimate
    label: DecisionLabel

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "training_effect": self.training_effect,
            "estimate": self.estimate.to_json(),
            "label": self.label.to_json(),
        }


@dataclass(frozen=True)
class SensitivityReport:
    """Distribution of averaged estimates across k drawn training sets."""

    n: int
    k: int
    replicates: int
    generator: dict
    rct: EffectEstimate
    sets: list[SetResult]
    label_counts: dict[str, int]
    incompatible_count: int
    mse: float
    rmse: float
    correlation: float | None
    panel: list[dict]
    histogram: dict
    tuning: TuningResult | None = None

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "k": self.k,
            "replicates": self.replicates,
            "generator": self.generator,
            "rct": self.rct.to_json(),
            "sets": [r.to_json() for r in self.sets],
            "label_counts": self.label_counts,
            "incompatible_count": self.incompatible_count,
            "mse": self.mse,
            "rmse": self.rmse,
            "correlation": self.correlation,
            "panel": self.panel,
            "histogram": self.histogram,
        }
        if self.tuning is not None:
            out["tuning"] = self.tuning.to_json()
        return out


_WORKER: dict = {}


def _set_worker_state(state: dict) -> None:
    global _WORKER
    _WORKER = state


def _sensitivity_task(index: int) -> SetResult:
    st = _WORKER
    ds: TrialDataset = st["ds"]
    treated: ArmSummary = st["treated"]
    reference: EffectEstimate = st["reference"]
    seed = st["seed"]

    training = draw_training_set(ds, st["n"], derive_seed(seed, "sensitivity", index, "draw"))
    sub = ds.control_subset(training)
    train_y = sub.outcome_values
    model = fit(st["kind"], sub, st["hyperparams"], seed=derive_seed(seed, "sensitivity", index, "fit"))
    s = ds.m0 - st["n"]
    rep_seeds = [derive_seed(seed, "sensitivity", index, "replicate", j) for j in range(st["l"])]
    estimate = _averaged_batches(model, train_y, treated, s, st["l"], rep_seeds)
    return SetResult(
        index,
        _training_effect(treated, train_y),
        estimate,
        classify(estimate, reference),
    )


def _panel_rows(sets: list[SetResult]) -> list[dict]:
    order = sorted(range(len(sets)), key=lambda i: (sets[i].training_effect, i))
    chosen = list(range(0, len(sets), PANEL_STRIDE))
    if chosen[-1] != len(sets) - 1:
        chosen.append(len(sets) - 1)
    rows = []
    for pos in chosen:
        r = sets[order[pos]]
        rows.append(
            {
                "sorted_position": pos,
                "set_index": r.index,
                "training_effect": r.training_effect,
                "tau_av": r.estimate.tau,
                "ci_low": r.estimate.ci_low,
                "ci_high": r.estimate.ci_high,
                "label": r.label.label,
                "incompatible": r.label.incompatible,
            }
        )
    return rows


def run_sensitivity(
    ds: TrialDataset,
    n: int,
    k: int = 1000,
    generator: dict | None = None,
    l: int = 999,
    seed: int = 0,
    jobs: int = 1,
    tune: dict | None = None,
) -> SensitivityReport:
    """Redo the completion for k independently drawn training sets.

    Tasks are parallelized over training sets when ``jobs > 1``; per-task
    seeds are index-derived and the reduction is index-ordered, so the report
    does not depend on the worker count.
    """
    if k < 1:
        raise SchemaError(f"k must be >= 1, got {k}")
    if l < 1:
        raise SchemaError(f"replicates must be >= 1, got {l}")
    if jobs < 1:
        raise SchemaError(f"jobs must be >= 1, got {jobs}")
    generator = generator or {}
    kind = generator.get("kind")
    if not kind:
        raise SchemaError("generator config needs a 'kind'")
    hyperparams = dict(generator.get("hyperparams") or {})

    reference = rct_effect(ds)
    treated = treated_summary(ds)
    if np.isnan(ds.outcome_values).any():
        raise DataFormatError("outcomes have missing values; impute first")

    tuning_result = None
    if tune is not None:
        tuning_result = multi_trainset_tune(
            kind,
            ds,
            n,
            HyperGrid(dict(tune["grid"])),
            num_sets=int(tune.get("num_sets", 3)),
            folds=int(tune.get("folds", 5)),
            seed=derive_seed(seed, "sensitivity", "tune"),
        )
        hyperparams.update(tuning_result.best_params)

    state = {
        "ds": ds,
        "treated": treated,
        "reference": reference,
        "seed": seed,
        "n": n,
        "l": l,
        "kind": kind,
        "hyperparams": hyperparams,
    }
    _set_worker_state(state)
    if jobs == 1 or k == 1:
        sets = [_sensitivity_task(i) for i in range(k)]
    else:
        ctx = multiprocessing.get_context("fork")
        chunk = max(1, k // (jobs * 4))
        with ctx.Pool(jobs, initializer=_set_worker_state, initargs=(state,)) as pool:
            sets = list(pool.imap(_sensitivity_task, range(k), chunksize=chunk))
    sets.sort(key=lambda r: r.index)

    tau_avs = np.array([r.estimate.tau for r in sets])
    effects = np.array([r.training_effect for r in sets])
    label_counts: dict[str, int] = {}
    for r in sets:
        label_counts[r.label.label] = label_counts.get(r.label.label, 0) + 1
    incompatible = sum(1 for r in sets if r.label.incompatible)
    mse_value, rmse_value = mse(tau_avs, reference.tau)
    try:
        corr = correlation(effects, tau_avs)
    except DataFormatError:
        corr = None

    counts, edges = np.histogram(tau_avs, bins="auto")
    histogram = {"counts": counts.tolist(), "bin_edges": edges.tolist()}

    return SensitivityReport(
        n,
        k,
        l,
        {"kind": kind, "hyperparams": hyperparams},
        reference,
        sets,
        label_counts,
        incompatible,
        mse_value,
        rmse_value,
        corr,
        _panel_rows(sets),
        histogram,
        tuning_result,
    )
