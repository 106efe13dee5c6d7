"""Treatment-effect estimators for control arms completed with generated patients.

All outcomes are binary, so every mean and population variance is a function
of the ones-count. Both quantities are computed by a single helper from
counts, which makes the documented reductions exact to the bit: a one-shot
estimate with zero generated patients equals the plain two-arm estimate, and
the averaged estimate over identical batches equals the one-shot estimate on
that batch.

The CI half-width uses the fixed two-sided 95% normal quantile. For the
averaged procedure two half-widths are produced: ``delta`` combines the
treated-arm variance with the averaged control variance scaled by the control
arm size and is the one used for classification; ``delta_sd_scale`` is the
quantile times the averaged control SD without arm-size scaling, reported for
comparison with sources that define it that way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import TrialDataset
from .errors import DataFormatError

Z_975 = 1.959964

LABEL_SIGNIFICANT_POSITIVE = "significant_positive"
LABEL_SIGNIFICANT_NEGATIVE = "significant_negative"
LABEL_NON_SIGNIFICANT = "non_significant"


@dataclass(frozen=True)
class ArmSummary:
    """Mean, population variance and size of one trial arm."""

    mean: float
    var: float
    size: int


@dataclass(frozen=True)
class EffectEstimate:
    """Absolute risk difference with its 95% CI.

    ``sigma2_control`` is the population variance of the (possibly augmented)
    control arm. ``delta_sd_scale`` is set on averaged estimates only.
    """

    tau: float
    sigma2_control: float
    se: float
    delta: float
    ci_low: float
    ci_high: float
    procedure: str
    replicates: int | None = None
    delta_sd_scale: float | None = None

    def to_json(self) -> dict:
        out = {
            "procedure": self.procedure,
            "tau": self.tau,
            "sigma2_control": self.sigma2_control,
            "se": self.se,
            "delta": self.delta,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }
        if self.replicates is not None:
            out["replicates"] = self.replicates
        if self.delta_sd_scale is not None:
            out["delta_sd_scale"] = self.delta_sd_scale
        return out


@dataclass(frozen=True)
class DecisionLabel:
    """Significance decision plus CI compatibility with a reference estimate."""

    label: str
    incompatible: bool

    def to_json(self) -> dict:
        return {"label": self.label, "incompatible": self.incompatible}


def as_binary_array(y, name: str = "outcomes") -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise DataFormatError(f"{name} must be a 1-d vector")
    if arr.size and not np.isin(arr, (0.0, 1.0)).all():
        raise DataFormatError(f"{name} must contain only 0/1 with no missing values")
    return arr


def binary_mean_var(ones: int, total: int) -> tuple[float, float]:
    """Mean and population variance of a 0/1 sample from its ones-count."""
    if total < 1:
        raise DataFormatError("cannot summarize an empty sample")
    mu = ones / total
    d1 = 1.0 - mu
    var = (ones * d1 * d1 + (total - ones) * (mu * mu)) / total
    return mu, var


def arm_summary(y) -> ArmSummary:
    arr = as_binary_array(y, "arm outcomes")
    mu, var = binary_mean_var(int(arr.sum()), arr.size)
    return ArmSummary(mu, var, arr.size)


def _interval(tau: float, treated: ArmSummary, sigma2_control: float, m0: int):
    se = math.sqrt(treated.var / treated.size + sigma2_control / m0)
    delta = Z_975 * se
    return se, delta, tau - delta, tau + delta


def _arm_outcomes(ds: TrialDataset, arm: float) -> np.ndarray:
    y = ds.outcome_values[ds.arm_values == arm]
    if y.size == 0:
        raise DataFormatError(f"trial has no records in arm {int(arm)}")
    if np.isnan(y).any():
        raise DataFormatError("outcome column has missing values; impute before estimating")
    return y


def treated_summary(ds: TrialDataset) -> ArmSummary:
    return arm_summary(_arm_outcomes(ds, 1.0))


def rct_effect(ds: TrialDataset) -> EffectEstimate:
    """Plain difference-of-means estimate on the real trial arms."""
    treated = treated_summary(ds)
    y0 = _arm_outcomes(ds, 0.0)
    mu0, var0 = binary_mean_var(int(y0.sum()), y0.size)
    tau = treated.mean - mu0
    se, delta, lo, hi = _interval(tau, treated, var0, y0.size)
    return EffectEstimate(tau, var0, se, delta, lo, hi, "rct")


def _augmented_stats(train_ones: int, gen_ones: np.ndarray, n: int, s: int):
    """Per-replicate augmented-control mean and population variance.

    ``gen_ones`` holds one generated-batch ones-count per replicate. Works on
    any replicate count; one_shot uses a single replicate.
    """
    m0 = n + s
    ones = train_ones + gen_ones
    mu = ones / m0
    d1 = 1.0 - mu
    var = (ones * d1 * d1 + (m0 - ones) * (mu * mu)) / m0
    return mu, var


def one_shot(train_y, gen_y, treated: ArmSummary) -> EffectEstimate:
    """Estimate after completing the control arm with one generated batch.

    The augmented control arm holds the n training outcomes plus the s
    generated outcomes; variances divide by the full arm size m0 = n + s.
    """
    train = as_binary_array(train_y, "training outcomes")
    gen = as_binary_array(gen_y, "generated outcomes")
    if train.size == 0:
        raise DataFormatError("training outcomes must be non-empty")
    gen_ones = np.array([float(gen.sum())])
    mu, var = _augmented_stats(int(train.sum()), gen_ones, train.size, gen.size)
    tau = treated.mean - float(mu[0])
    sigma2 = float(var[0])
    se, delta, lo, hi = _interval(tau, treated, sigma2, train.size + gen.size)
    return EffectEstimate(tau, sigma2, se, delta, lo, hi, "one_shot")


def _mean_exact(values: np.ndarray) -> float:
    # The mean of identical replicates must be the replicate value itself,
    # so that averaging degenerate batches reduces to one_shot exactly.
    first = float(values[0])
    if np.all(values == first):
        return first
    return float(values.mean())


def averaged(train_y, batches, treated: ArmSummary) -> EffectEstimate:
    """Estimate averaged over l independently generated completion batches.

    ``batches`` is an (l, s) 0/1 matrix or a sequence of l equal-length 0/1
    vectors. The effect and the control variance are the means of the
    per-replicate one-shot quantities.
    """
    train = as_binary_array(train_y, "training outcomes")
    if train.size == 0:
        raise DataFormatError("training outcomes must be non-empty")
    try:
        mat = np.asarray(batches, dtype=np.float64)
    except ValueError:
        raise DataFormatError("generated batches must all have the same length") from None
    if mat.ndim == 1:
        raise DataFormatError("batches must be a sequence of vectors, not one vector")
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise DataFormatError("batches must be a non-empty (l, s) matrix")
    if mat.size and not np.isin(mat, (0.0, 1.0)).all():
        raise DataFormatError("generated batches must contain only 0/1 values")
    l, s = mat.shape
    gen_ones = mat.sum(axis=1) if s else np.zeros(l)
    mu, var = _augmented_stats(int(train.sum()), gen_ones, train.size, s)
    tau = _mean_exact(treated.mean - mu)
    sigma2 = _mean_exact(var)
    se, delta, lo, hi = _interval(tau, treated, sigma2, train.size + s)
    return EffectEstimate(
        tau,
        sigma2,
        se,
        delta,
        lo,
        hi,
        "averaged",
        replicates=l,
        delta_sd_scale=Z_975 * math.sqrt(sigma2),
    )


def classify(est: EffectEstimate, reference: EffectEstimate) -> DecisionLabel:
    """Significance of an estimate and CI compatibility with the reference.

    All comparisons are strict: an interval endpoint exactly at zero is
    non-significant, and intervals sharing only an endpoint are compatible.
    """
    if est.ci_low > 0.0:
        label = LABEL_SIGNIFICANT_POSITIVE
    elif est.ci_high < 0.0:
        label = LABEL_SIGNIFICANT_NEGATIVE
    else:
        label = LABEL_NON_SIGNIFICANT
    incompatible = est.ci_low > reference.ci_high or est.ci_high < reference.ci_low
    return DecisionLabel(label, incompatible)


def mse(taus, tau_ref: float) -> tuple[float, float]:
    """Mean squared error of effect estimates around a reference, and its root."""
    arr = np.asarray(taus, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataFormatError("mse needs a non-empty vector of estimates")
    d = arr - tau_ref
    value = float(np.mean(d * d))
    return value, math.sqrt(value)
