from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import binary_trial
from vcat_sim.errors import DataFormatError
from vcat_sim.estimators import (
    LABEL_NON_SIGNIFICANT,
    LABEL_SIGNIFICANT_NEGATIVE,
    LABEL_SIGNIFICANT_POSITIVE,
    ArmSummary,
    EffectEstimate,
    Z_975,
    arm_summary,
    averaged,
    classify,
    mse,
    one_shot,
    rct_effect,
    treated_summary,
)


def estimate(tau: float, delta: float) -> EffectEstimate:
    return EffectEstimate(tau, 0.0, delta / Z_975, delta, tau - delta, tau + delta, "test")


# ----------------------------------------------------------------------------
# rct_effect
# ----------------------------------------------------------------------------


def test_rct_effect_hand_case():
    # treated [1,0,1,1], control [0,0,1,0]: tau = 0.75 - 0.25 = 0.5 and both
    # arm variances are 0.1875, so delta = 1.959964 * sqrt(2 * 0.1875 / 4).
    ds = binary_trial(treated=[1, 0, 1, 1], control=[0, 0, 1, 0])
    est = rct_effect(ds)
    assert est.tau == 0.5
    assert est.sigma2_control == 0.1875
    expected_delta = Z_975 * math.sqrt(0.1875 / 4 + 0.1875 / 4)
    assert est.delta == expected_delta
    assert est.delta == pytest.approx(0.6001, abs=5e-5)
    assert est.ci_low == 0.5 - expected_delta
    assert est.ci_high == 0.5 + expected_delta


def test_rct_effect_identical_arms_is_zero():
    ds = binary_trial(treated=[1, 0, 1, 0], control=[1, 0, 1, 0])
    assert rct_effect(ds).tau == 0.0


def test_rct_effect_missing_outcomes_rejected():
    ds = binary_trial(treated=[1, 0], control=[0, 1])
    ds.columns["outcome"][0] = np.nan
    with pytest.raises(DataFormatError, match="impute before estimating"):
        rct_effect(ds)


# ----------------------------------------------------------------------------
# one_shot
# ----------------------------------------------------------------------------


def test_one_shot_hand_case():
    # train [0,1] and generated [1,1]: mu = 3/4, sigma2 = 3/16
    treated = ArmSummary(0.75, 0.1875, 4)
    est = one_shot([0, 1], [1, 1], treated)
    assert est.tau == 0.75 - 0.75
    assert est.sigma2_control == 0.1875
    assert est.procedure == "one_shot"


def test_one_shot_zero_generated_equals_rct_bitwise():
    ds = binary_trial(treated=[1, 0, 1, 1], control=[0, 0, 1, 0])
    ref = rct_effect(ds)
    est = one_shot([0, 0, 1, 0], [], treated_summary(ds))
    for attr in ("tau", "sigma2_control", "se", "delta", "ci_low", "ci_high"):
        assert getattr(est, attr) == getattr(ref, attr), attr


def test_one_shot_validates_inputs():
    treated = ArmSummary(0.5, 0.25, 4)
    with pytest.raises(DataFormatError, match="non-empty"):
        one_shot([], [1, 0], treated)
    with pytest.raises(DataFormatError, match="only 0/1"):
        one_shot([0, 2], [1], treated)


# ----------------------------------------------------------------------------
# averaged
# ----------------------------------------------------------------------------


def test_averaged_hand_case():
    # train [0,1], batches [1,1] and [0,0], treated mean 0.75:
    # per-replicate taus are 0.0 and 0.5, variances 0.1875 and 0.1875.
    treated = ArmSummary(0.75, 0.1875, 4)
    est = averaged([0, 1], [[1, 1], [0, 0]], treated)
    assert est.tau == 0.25
    assert est.sigma2_control == 0.1875
    assert est.replicates == 2
    assert est.delta == Z_975 * math.sqrt(0.1875 / 4 + 0.1875 / 4)
    assert est.delta_sd_scale == Z_975 * math.sqrt(0.1875)


def test_averaged_single_replicate_equals_one_shot_bitwise():
    treated = ArmSummary(0.6, 0.24, 10)
    a = averaged([0, 1, 1], [[1, 0, 1, 0]], treated)
    b = one_shot([0, 1, 1], [1, 0, 1, 0], treated)
    for attr in ("tau", "sigma2_control", "se", "delta", "ci_low", "ci_high"):
        assert getattr(a, attr) == getattr(b, attr), attr


def test_averaged_identical_batches_equals_one_shot_bitwise():
    rng = np.random.default_rng(3)
    treated = ArmSummary(4 / 7, 4 / 7 * 3 / 7, 7)
    for _ in range(25):
        train = rng.integers(0, 2, rng.integers(1, 9)).astype(float)
        batch = rng.integers(0, 2, rng.integers(0, 9)).astype(float)
        reps = int(rng.integers(2, 12))
        a = averaged(train, np.tile(batch, (reps, 1)), treated)
        b = one_shot(train, batch, treated)
        for attr in ("tau", "sigma2_control", "se", "delta", "ci_low", "ci_high"):
            assert getattr(a, attr) == getattr(b, attr), attr


def test_averaged_rejects_bad_batches():
    treated = ArmSummary(0.5, 0.25, 4)
    with pytest.raises(DataFormatError, match="same length"):
        averaged([0, 1], [[1, 0], [1]], treated)
    with pytest.raises(DataFormatError, match="not one vector"):
        averaged([0, 1], [1, 0, 1], treated)
    with pytest.raises(DataFormatError, match="only 0/1"):
        averaged([0, 1], [[1, 0.5]], treated)


def test_averaged_brute_force_oracle():
    """Vectorized path against plain python sums, 1000 random instances."""
    rng = np.random.default_rng(17)
    for _ in range(1000):
        m0 = int(rng.integers(2, 21))
        n = int(rng.integers(1, m0 + 1))
        s = m0 - n
        l = int(rng.integers(1, 6))
        train = rng.integers(0, 2, n).astype(float)
        batches = rng.integers(0, 2, (l, s)).astype(float)
        m1 = int(rng.integers(1, 21))
        y1 = rng.integers(0, 2, m1).astype(float)
        treated = arm_summary(y1)

        taus, sig2s = [], []
        for j in range(l):
            pooled = list(train) + list(batches[j])
            mu = sum(pooled) / m0
            var = sum((v - mu) ** 2 for v in pooled) / m0
            taus.append(treated.mean - mu)
            sig2s.append(var)
        tau_exp = sum(taus) / l
        sig2_exp = sum(sig2s) / l
        se_exp = math.sqrt(treated.var / m1 + sig2_exp / m0)

        est = averaged(train, batches, treated)
        assert est.tau == pytest.approx(tau_exp, abs=1e-12)
        assert est.sigma2_control == pytest.approx(sig2_exp, abs=1e-12)
        assert est.se == pytest.approx(se_exp, abs=1e-12)
        assert est.delta == pytest.approx(Z_975 * se_exp, abs=1e-12)

        os_est = one_shot(train, batches[0], treated)
        mu0 = sum(list(train) + list(batches[0])) / m0
        assert os_est.tau == pytest.approx(treated.mean - mu0, abs=1e-12)


# ----------------------------------------------------------------------------
# classify
# ----------------------------------------------------------------------------


def test_classify_labels():
    rct = estimate(0.0, 1.0)
    assert classify(estimate(0.05, 0.01), rct).label == LABEL_SIGNIFICANT_POSITIVE
    assert classify(estimate(-0.05, 0.01), rct).label == LABEL_SIGNIFICANT_NEGATIVE
    assert classify(estimate(0.0, 0.01), rct).label == LABEL_NON_SIGNIFICANT


def test_classify_incompatible_disjoint_intervals():
    rct = estimate(0.0, 0.01)  # CI [-0.01, 0.01]
    est = estimate(0.03, 0.01)  # CI [0.02, 0.04]
    assert classify(est, rct).incompatible is True
    assert classify(rct, rct).incompatible is False


def test_classify_boundaries_are_strict():
    rct = estimate(0.0, 1.0)
    # ci_low exactly 0 is not significant
    assert classify(estimate(0.01, 0.01), rct).label == LABEL_NON_SIGNIFICANT
    # ci_high exactly 0 is not significant
    assert classify(estimate(-0.01, 0.01), rct).label == LABEL_NON_SIGNIFICANT
    # intervals sharing exactly one endpoint stay compatible
    touch = EffectEstimate(0.02, 0.0, 0.0, 0.01, 0.01, 0.03, "test")
    ref = EffectEstimate(0.0, 0.0, 0.0, 0.01, -0.01, 0.01, "test")
    assert classify(touch, ref).incompatible is False


def test_classify_interval_arithmetic_oracle():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        est = estimate(float(rng.normal(0, 0.05)), float(rng.uniform(0, 0.1)))
        ref = estimate(float(rng.normal(0, 0.05)), float(rng.uniform(0, 0.1)))
        got = classify(est, ref)
        if est.ci_low > 0:
            expected = LABEL_SIGNIFICANT_POSITIVE
        elif est.ci_high < 0:
            expected = LABEL_SIGNIFICANT_NEGATIVE
        else:
            expected = LABEL_NON_SIGNIFICANT
        assert got.label == expected
        assert got.incompatible == (est.ci_low > ref.ci_high or est.ci_high < ref.ci_low)


def test_widening_delta_never_creates_significance():
    rng = np.random.default_rng(9)
    for _ in range(200):
        tau = float(rng.normal(0, 0.05))
        delta = float(rng.uniform(0, 0.1))
        base = classify(estimate(tau, delta), estimate(0.0, 1.0))
        wider = classify(estimate(tau, delta * 1.5 + 0.01), estimate(0.0, 1.0))
        if base.label == LABEL_NON_SIGNIFICANT:
            assert wider.label == LABEL_NON_SIGNIFICANT


# ----------------------------------------------------------------------------
# mse
# ----------------------------------------------------------------------------


def test_mse_hand_case():
    value, root = mse([0.0, 0.02], 0.01)
    assert value == pytest.approx(1e-4, rel=1e-12)
    assert root == pytest.approx(0.01, rel=1e-12)


def test_mse_zero_when_all_equal_reference():
    value, root = mse([0.3, 0.3, 0.3], 0.3)
    assert value == 0.0 and root == 0.0


def test_mse_two_pass_oracle():
    rng = np.random.default_rng(2)
    taus = rng.normal(0, 0.1, 500)
    ref = 0.02
    value, root = mse(taus, ref)
    direct = sum((float(t) - ref) ** 2 for t in taus) / len(taus)
    assert value == pytest.approx(direct, rel=1e-12)
    assert root == pytest.approx(math.sqrt(direct), rel=1e-12)


def test_mse_rejects_empty():
    with pytest.raises(DataFormatError, match="non-empty"):
        mse([], 0.0)
