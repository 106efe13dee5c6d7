"""Single imputation of missing trial cells by chained equations.

Columns with missing cells are visited in order of increasing missingness for
a fixed number of sweeps. Numeric targets are refilled by linear regression
on the other columns plus Gaussian residual noise; categorical and binary
targets by sampling from normalized per-category one-vs-rest logistic scores.
Logistic fits use IRLS (25 iterations max, 1e-8 coefficient tolerance); when
a fit does not converge or a design matrix is singular, the column falls back
to marginal frequency sampling for that sweep with a warning, never an error.

One completed dataset comes back; cells observed in the input are never
touched. Every draw comes from a single seeded stream, so results are
deterministic given (dataset, iterations, seed).
"""

from __future__ import annotations

import warnings

import numpy as np

from .dataset import ColumnSpec, TrialDataset
from .errors import DataFormatError, SchemaError
from .seeding import rng_for

IRLS_MAX_ITER = 25
IRLS_TOL = 1e-8


class ImputationWarning(UserWarning):
    """A column fell back to marginal sampling during one sweep."""


class _IrlsFailure(Exception):
    pass


def _irls_logistic(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta = np.zeros(x.shape[1])
    for _ in range(IRLS_MAX_ITER):
        eta = np.clip(x @ beta, -35.0, 35.0)
        p = 1.0 / (1.0 + np.exp(-eta))
        w = p * (1.0 - p)
        if float(w.max()) < 1e-12:
            raise _IrlsFailure("weights collapsed")
        z = eta + (y - p) / np.maximum(w, 1e-12)
        a = x.T @ (w[:, None] * x)
        b = x.T @ (w * z)
        try:
            new = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            raise _IrlsFailure("singular weighted design") from None
        if float(np.max(np.abs(new - beta))) < IRLS_TOL:
            return new
        beta = new
    raise _IrlsFailure("no convergence")


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -35.0, 35.0)))


def _design(
    specs: list[ColumnSpec],
    work: dict[str, np.ndarray],
    target: str,
    rows_fit: np.ndarray,
    rows_predict: np.ndarray,
):
    """Intercept + encoded predictors for the fit and prediction rows.

    Categorical predictors are one-hot encoded without their first category.
    Predictor columns constant on the fit rows carry no information and are
    dropped from both matrices before any singularity check.
    """
    blocks_fit: list[np.ndarray] = [np.ones((len(rows_fit), 1))]
    blocks_pred: list[np.ndarray] = [np.ones((len(rows_predict), 1))]
    for spec in specs:
        if spec.name == target or spec.kind == "enrolment_order":
            continue
        col = work[spec.name]
        if spec.kind == "categorical":
            for code in range(1, len(spec.categories)):
                blocks_fit.append((col[rows_fit] == code).astype(np.float64)[:, None])
                blocks_pred.append((col[rows_predict] == code).astype(np.float64)[:, None])
        else:
            blocks_fit.append(col[rows_fit][:, None])
            blocks_pred.append(col[rows_predict][:, None])
    x_fit = np.hstack(blocks_fit)
    x_pred = np.hstack(blocks_pred)
    keep = [0] + [j for j in range(1, x_fit.shape[1]) if not np.all(x_fit[:, j] == x_fit[0, j])]
    return x_fit[:, keep], x_pred[:, keep]


def _marginal_fill(rng, observed: np.ndarray, count: int) -> np.ndarray:
    return rng.choice(observed, size=count, replace=True)


def _sample_rows(rng, probs: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """One category draw per row from row-wise probabilities."""
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(len(probs))
    picked = np.sum(cum < u[:, None], axis=1)
    return codes[np.minimum(picked, len(codes) - 1)]


def impute_chained(ds: TrialDataset, iterations: int = 5, seed: int = 0) -> TrialDataset:
    """Complete every missing cell; see the module docstring for the method."""
    if iterations < 1:
        raise SchemaError(f"iterations must be >= 1, got {iterations}")
    specs = list(ds.schema.modelled)
    work = {name: arr.copy() for name, arr in ds.columns.items()}
    masks = {c.name: np.isnan(work[c.name]) for c in specs}
    targets = [c for c in specs if masks[c.name].any()]
    if not targets:
        return ds
    for c in targets:
        if masks[c.name].all():
            raise DataFormatError(f"column {c.name!r} has no observed cells to learn from")
    targets.sort(key=lambda c: int(masks[c.name].sum()))

    rng = rng_for(seed, "impute")

    # initial fill: draw each missing cell from the column's observed values
    for c in targets:
        mask = masks[c.name]
        observed = work[c.name][~mask]
        work[c.name][mask] = _marginal_fill(rng, observed, int(mask.sum()))

    for _ in range(iterations):
        for c in targets:
            mask = masks[c.name]
            rows_fit = np.flatnonzero(~mask)
            rows_pred = np.flatnonzero(mask)
            observed = ds.columns[c.name][rows_fit]
            x_fit, x_pred = _design(specs, work, c.name, rows_fit, rows_pred)

            if c.kind == "numeric":
                beta, _, rank, _ = np.linalg.lstsq(x_fit, observed, rcond=None)
                if rank < x_fit.shape[1]:
                    warnings.warn(
                        f"column {c.name!r}: singular design matrix, marginal fallback",
                        ImputationWarning,
                    )
                    work[c.name][rows_pred] = _marginal_fill(rng, observed, len(rows_pred))
                    continue
                resid = observed - x_fit @ beta
                dof = max(len(rows_fit) - x_fit.shape[1], 1)
                sigma = float(np.sqrt((resid * resid).sum() / dof))
                noise = rng.standard_normal(len(rows_pred))
                work[c.name][rows_pred] = x_pred @ beta + sigma * noise
            else:
                codes = np.unique(observed)
                if len(codes) == 1:
                    work[c.name][rows_pred] = codes[0]
                    continue
                try:
                    scores = np.empty((len(rows_pred), len(codes)))
                    for j, code in enumerate(codes):
                        beta = _irls_logistic(x_fit, (observed == code).astype(np.float64))
                        scores[:, j] = _sigmoid(x_pred @ beta)
                    totals = scores.sum(axis=1)
                    freqs = np.array([(observed == code).mean() for code in codes])
                    degenerate = totals < 1e-12
                    scores[degenerate] = freqs
                    totals[degenerate] = 1.0
                    probs = scores / totals[:, None]
                    work[c.name][rows_pred] = _sample_rows(rng, probs, codes)
                except _IrlsFailure as exc:
                    warnings.warn(
                        f"column {c.name!r}: logistic fit failed ({exc}), marginal fallback",
                        ImputationWarning,
                    )
                    work[c.name][rows_pred] = _marginal_fill(rng, observed, len(rows_pred))

    return ds.with_columns(ds.schema, work)
