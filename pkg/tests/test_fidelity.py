from __future__ import annotations

import numpy as np
import pytest

from vcat_sim.dataset import ColumnSpec, Schema, TrialDataset, select_n_first
from vcat_sim.errors import DataFormatError, SchemaError
from vcat_sim import fidelity
from vcat_sim.fidelity import (
    contingency_similarity,
    discretize,
    general_score,
    ks_complement,
    pearson_similarity,
    tv_complement,
)
from vcat_sim.generators import SyntheticBatch, fit


# ----------------------------------------------------------------------------
# ks_complement
# ----------------------------------------------------------------------------


def test_ks_identity_and_disjoint():
    x = np.array([0.4, 1.2, -0.3, 2.2])
    assert ks_complement(x, x) == 1.0
    assert ks_complement(np.zeros(50), np.ones(50)) == 0.0


def test_ks_hand_case():
    # ECDFs of [0,1] and [0,2] differ by 0.5 on [1,2)
    assert ks_complement([0.0, 1.0], [0.0, 2.0]) == pytest.approx(0.5, abs=1e-12)


def test_ks_matches_scipy():
    from scipy.stats import ks_2samp

    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.normal(0, 1, int(rng.integers(5, 200)))
        b = rng.normal(0.3, 1.2, int(rng.integers(5, 200)))
        expected = 1.0 - ks_2samp(a, b).statistic
        assert ks_complement(a, b) == pytest.approx(expected, abs=1e-12)


# ----------------------------------------------------------------------------
# tv_complement
# ----------------------------------------------------------------------------


def test_tv_identity_hand_and_disjoint():
    assert tv_complement([0, 1, 0, 1], [1, 0, 1, 0], support=2) == 1.0
    # p = [0.5, 0.5] against q = [1, 0]
    assert tv_complement([0, 1], [0, 0], support=2) == pytest.approx(0.5, abs=1e-12)
    assert tv_complement([0, 0], [1, 1], support=2) == 0.0


def test_tv_symmetry_and_monotonicity():
    rng = np.random.default_rng(1)
    real = rng.integers(0, 3, 100)
    syn = rng.integers(0, 3, 80)
    assert tv_complement(real, syn, 3) == tv_complement(syn, real, 3)
    # moving mass away from the real distribution never raises the score
    scores = [
        tv_complement([0] * 10 + [1] * 10, [0] * (10 - k) + [1] * (10 + k), support=2)
        for k in range(0, 11, 2)
    ]
    assert all(a >= b for a, b in zip(scores, scores[1:]))


# ----------------------------------------------------------------------------
# pearson_similarity
# ----------------------------------------------------------------------------


def test_pearson_similarity_cases():
    rng = np.random.default_rng(2)
    a = rng.normal(0, 1, 200)
    b = a * 0.5 + rng.normal(0, 1, 200)
    # same data on both sides: correlations equal, score 1
    assert pearson_similarity(a, b, a, b) == 1.0
    # perfectly opposed correlations: score 0
    x = np.array([0.0, 1.0, 2.0, 3.0])
    assert pearson_similarity(x, x, x, -x) == pytest.approx(0.0, abs=1e-12)


def test_pearson_similarity_hand_case():
    # rho_real = 0.8, rho_syn = 0.4 gives 1 - 0.4/2 = 0.8. Construct exact
    # correlations from standardized vectors.
    def with_rho(rho, n=400, seed=3):
        rng = np.random.default_rng(seed)
        u = rng.normal(0, 1, n)
        v = rng.normal(0, 1, n)
        u = (u - u.mean()) / u.std()
        # project v orthogonal to u, then mix
        v = v - u * (u @ v) / (u @ u)
        v = (v - v.mean()) / v.std()
        return u, rho * u + np.sqrt(1 - rho * rho) * v

    ra, rb = with_rho(0.8)
    sa, sb = with_rho(0.4, seed=4)
    assert pearson_similarity(ra, rb, sa, sb) == pytest.approx(0.8, abs=1e-9)


def test_pearson_similarity_zero_variance_rejected():
    x = np.array([1.0, 2.0, 3.0])
    with pytest.raises(DataFormatError, match="zero variance"):
        pearson_similarity(x, np.ones(3), x, x)


# ----------------------------------------------------------------------------
# contingency_similarity and discretize
# ----------------------------------------------------------------------------


def test_contingency_cases():
    # identical joint tables
    a = np.array([0, 0, 1, 1], dtype=float)
    b = np.array([0, 1, 0, 1], dtype=float)
    assert contingency_similarity(a, b, a, b, 2, 2) == 1.0
    # real {(a,x):.5,(a,y):.5} vs syn {(a,x):1}
    ra = np.array([0.0, 0.0])
    rb = np.array([0.0, 1.0])
    sa = np.array([0.0, 0.0])
    sb = np.array([0.0, 0.0])
    assert contingency_similarity(ra, rb, sa, sb, 1, 2) == pytest.approx(0.5, abs=1e-12)
    # fully disjoint cells
    assert contingency_similarity(
        np.zeros(4), np.zeros(4), np.ones(4), np.ones(4), 2, 2
    ) == pytest.approx(0.0, abs=1e-12)


def test_contingency_symmetry():
    rng = np.random.default_rng(4)
    ra, rb = rng.integers(0, 2, 60).astype(float), rng.integers(0, 3, 60).astype(float)
    sa, sb = rng.integers(0, 2, 40).astype(float), rng.integers(0, 3, 40).astype(float)
    assert contingency_similarity(ra, rb, sa, sb, 2, 3) == contingency_similarity(
        sa, sb, ra, rb, 2, 3
    )


def test_discretize_boundary_and_clamp():
    ref = np.array([0.0, 5.0, 10.0])
    np.testing.assert_array_equal(discretize(ref, 2, ref), [0.0, 1.0, 1.0])
    # values outside the reference range clamp to the edge bins
    np.testing.assert_array_equal(discretize(np.array([12.0, -3.0]), 2, ref), [1.0, 0.0])
    # constant reference collapses to a single bin
    np.testing.assert_array_equal(
        discretize(np.array([1.0, 7.0]), 4, np.full(3, 2.0)), [0.0, 0.0]
    )
    with pytest.raises(SchemaError, match="bins"):
        discretize(ref, 0, ref)


# ----------------------------------------------------------------------------
# general_score
# ----------------------------------------------------------------------------


def two_column_categorical(real_rows, syn_rows):
    schema = Schema(
        [
            ColumnSpec("a", "categorical", categories=("a0", "a1")),
            ColumnSpec("b", "categorical", categories=("b0", "b1")),
            ColumnSpec("outcome", "outcome"),
            ColumnSpec("arm", "arm"),
        ]
    )
    def build(rows):
        arr = np.asarray(rows, dtype=np.float64)
        return TrialDataset(
            schema,
            {
                "a": arr[:, 0],
                "b": arr[:, 1],
                "outcome": arr[:, 2],
                "arm": np.zeros(len(arr)),
            },
        )
    return build(real_rows), build(syn_rows)


def test_general_score_identity(trial):
    sub = trial.control_subset(select_n_first(trial, 50))
    report = general_score(sub, sub)
    assert report.overall == 1.0
    assert all(v == 1.0 for v in report.column_scores.values())
    assert all(v == 1.0 for v in report.pair_scores.values())


def test_general_score_disjoint_categorical_is_zero():
    real, syn = two_column_categorical(
        [[0, 0, 0], [0, 0, 0], [0, 0, 0]],
        [[1, 1, 1], [1, 1, 1], [1, 1, 1]],
    )
    report = general_score(real, syn)
    assert report.overall == 0.0


def test_general_score_is_mean_of_subscores(trial):
    sub = trial.control_subset(select_n_first(trial, 60))
    batch = fit("marginals", sub).sample(200, seed=5)
    report = general_score(sub, batch)
    scores = list(report.column_scores.values()) + list(report.pair_scores.values())
    assert report.overall == pytest.approx(float(np.mean(scores)), abs=1e-12)
    assert all(0.0 <= v <= 1.0 for v in scores)


def test_general_score_fixed_subscores(monkeypatch):
    """Stubbed metrics with column scores 0.8 / 0.6 and pair score 0.7."""
    real, syn = two_column_categorical([[0, 0, 1]], [[0, 0, 1]])
    fixed_cols = iter([0.8, 0.6, 1.0])  # a, b, outcome in schema order

    monkeypatch.setattr(fidelity, "tv_complement", lambda *a, **k: next(fixed_cols))
    monkeypatch.setattr(fidelity, "contingency_similarity", lambda *a, **k: 0.7)
    report = general_score(real, syn)
    # three columns and three categorical pairs, all pairs stubbed at 0.7
    assert report.overall == pytest.approx(
        (0.8 + 0.6 + 1.0 + 0.7 + 0.7 + 0.7) / 6, abs=1e-15
    )
    two_col = (0.8 + 0.6 + 0.7) / 3
    assert two_col == pytest.approx(0.7, abs=1e-15)


def test_general_score_skips_zero_variance_numeric_pairs(trial):
    sub = trial.control_subset(select_n_first(trial, 40))
    frozen = {k: v.copy() for k, v in sub.columns.items()}
    frozen["x1"][:] = 1.5
    still = sub.with_columns(sub.schema, frozen)
    report = general_score(still, still)
    assert any(s["target"] == "x1::x2" for s in report.skipped)
    assert "x1::x2" not in report.pair_scores
    # skipped pairs are excluded from the mean, not scored as zero
    assert report.overall == 1.0


def test_general_score_schema_mismatch():
    real, _ = two_column_categorical([[0, 0, 1]], [[0, 0, 1]])
    other = Schema(
        [
            ColumnSpec("a", "categorical", categories=("a0", "a1")),
            ColumnSpec("outcome", "outcome"),
            ColumnSpec("arm", "arm"),
        ]
    )
    syn = TrialDataset(
        other, {"a": np.zeros(2), "outcome": np.zeros(2), "arm": np.zeros(2)}
    )
    with pytest.raises(SchemaError, match="share one schema"):
        general_score(real, syn)


def test_general_score_mixed_pairs_use_reference_bins(trial):
    sub = trial.control_subset(select_n_first(trial, 80))
    batch = fit("bootstrap", sub).sample(300, seed=2)
    report = general_score(sub, batch)
    # numeric::categorical pairs present and scored in [0, 1]
    mixed = [k for k in report.pair_scores if "region" in k and "x" in k]
    assert mixed
    assert all(0.0 <= report.pair_scores[k] <= 1.0 for k in mixed)
