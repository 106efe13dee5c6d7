from __future__ import annotations

import numpy as np
import pytest

from vcat_sim import tuning
from vcat_sim.dataset import draw_training_set, select_n_first
from vcat_sim.errors import SchemaError
from vcat_sim.fidelity import general_score
from vcat_sim.generators import fit
from vcat_sim.seeding import derive_seed
from vcat_sim.tuning import HyperGrid, fold_partition, grid_search_cv, multi_trainset_tune


# ----------------------------------------------------------------------------
# HyperGrid and fold partition
# ----------------------------------------------------------------------------


def test_hypergrid_candidates_in_product_order():
    grid = HyperGrid({"a": [1, 2], "b": ["x", "y", "z"]})
    cands = grid.candidates()
    assert grid.size == 6
    assert cands[0] == {"a": 1, "b": "x"}
    assert cands[1] == {"a": 1, "b": "y"}
    assert cands[-1] == {"a": 2, "b": "z"}


def test_hypergrid_validates_axes():
    with pytest.raises(SchemaError, match="at least one axis"):
        HyperGrid({})
    with pytest.raises(SchemaError, match="non-empty list"):
        HyperGrid({"a": []})


def test_fold_partition_is_a_partition():
    for n, folds in ((20, 5), (23, 5), (7, 3), (10, 2)):
        parts = fold_partition(n, folds, seed=3)
        sizes = [len(p) for p in parts]
        assert max(sizes) - min(sizes) <= 1
        joined = np.concatenate(parts)
        assert len(joined) == n
        np.testing.assert_array_equal(np.sort(joined), np.arange(n))


def test_fold_partition_deterministic():
    a = fold_partition(30, 5, seed=1)
    b = fold_partition(30, 5, seed=1)
    c = fold_partition(30, 5, seed=2)
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa, pb)
    assert any(not np.array_equal(pa, pc) for pa, pc in zip(a, c))
    with pytest.raises(SchemaError, match="folds"):
        fold_partition(5, 1, seed=0)


# ----------------------------------------------------------------------------
# grid_search_cv
# ----------------------------------------------------------------------------


def test_single_candidate_grid_returns_it(trial):
    sub = trial.control_subset(select_n_first(trial, 40))
    result = grid_search_cv("marginals", sub, {"alpha": [0.5]}, folds=3, seed=2)
    assert result.best_params == {"alpha": 0.5}
    assert result.best_index == 0
    assert result.candidate_scores == [result.best_score]


def test_stub_metric_argmax(trial, monkeypatch):
    """Two candidates scored 0.9 and 0.2 by a stubbed metric: first wins."""
    sub = trial.control_subset(select_n_first(trial, 30))
    fixed = {0.0: 0.9, 1.0: 0.2}

    class StubReport:
        def __init__(self, overall):
            self.overall = overall

    current: dict = {}
    real_fit = tuning.fit

    def spy_fit(kind, train, hyperparams=None, seed=0):
        current["alpha"] = hyperparams["alpha"]
        return real_fit(kind, train, hyperparams, seed)

    monkeypatch.setattr(tuning, "fit", spy_fit)
    monkeypatch.setattr(tuning, "general_score", lambda real, syn: StubReport(fixed[current["alpha"]]))
    result = grid_search_cv("marginals", sub, {"alpha": [0.0, 1.0]}, folds=3, seed=1)
    assert result.best_index == 0
    assert result.best_params == {"alpha": 0.0}
    assert result.candidate_scores == pytest.approx([0.9, 0.2])


def test_ties_resolve_to_earliest(trial, monkeypatch):
    sub = trial.control_subset(select_n_first(trial, 30))

    class StubReport:
        overall = 0.5

    monkeypatch.setattr(tuning, "general_score", lambda real, syn: StubReport())
    result = grid_search_cv("marginals", sub, {"alpha": [0.0, 0.5, 1.0]}, folds=3, seed=1)
    assert result.best_index == 0


def test_grid_search_cv_brute_force_oracle(trial):
    """Every (candidate, fold) score recomputed independently, seed for seed."""
    sub = trial.control_subset(select_n_first(trial, 45))
    grid = HyperGrid({"alpha": [0.0, 0.5, 2.0]})
    folds, seed = 3, 7
    result = grid_search_cv("marginals", sub, grid, folds=folds, seed=seed)

    parts = fold_partition(sub.m, folds, seed)
    all_rows = np.arange(sub.m)
    for ci, cand in enumerate(grid.candidates()):
        for fi, held in enumerate(parts):
            fit_rows = np.setdiff1d(all_rows, held)
            model = fit("marginals", sub.take(fit_rows), cand, seed=derive_seed(seed, "fit", ci, fi))
            batch = model.sample(len(held), derive_seed(seed, "sample", ci, fi))
            expected = general_score(sub.take(held), batch).overall
            assert result.fold_scores[ci][fi] == expected, (ci, fi)

    means = [float(np.mean(np.asarray(r))) for r in result.fold_scores]
    best = max(range(len(means)), key=lambda i: (means[i], -i))
    assert result.best_index == best
    assert result.best_score == means[best]


def test_best_score_is_mean_of_fold_scores(trial):
    sub = trial.control_subset(select_n_first(trial, 40))
    result = grid_search_cv("copula", sub, {"shrinkage": [0.0, 0.1]}, folds=4, seed=3)
    row = result.fold_scores[result.best_index]
    assert result.best_score == pytest.approx(float(np.mean(np.asarray(row))), abs=1e-12)


# ----------------------------------------------------------------------------
# multi_trainset_tune
# ----------------------------------------------------------------------------


def test_multi_single_set_equals_grid_search(trial):
    grid = {"alpha": [0.0, 1.0]}
    seed = 5
    multi = multi_trainset_tune("marginals", trial, n=40, grid=grid, num_sets=1, folds=3, seed=seed)
    training = draw_training_set(trial, 40, derive_seed(seed, "tune_set", 0))
    single = grid_search_cv(
        "marginals", trial.control_subset(training), grid, folds=3, seed=derive_seed(seed, "cv", 0)
    )
    assert multi.best_index == single.best_index
    assert multi.candidate_scores == single.candidate_scores


def test_multi_deterministic(trial):
    grid = {"alpha": [0.0, 1.0]}
    a = multi_trainset_tune("marginals", trial, n=35, grid=grid, num_sets=2, folds=3, seed=9)
    b = multi_trainset_tune("marginals", trial, n=35, grid=grid, num_sets=2, folds=3, seed=9)
    assert a.best_params == b.best_params
    assert a.candidate_scores == b.candidate_scores
    assert a.per_set_scores == b.per_set_scores


def test_multi_brute_force_oracle(trial):
    grid = HyperGrid({"shrinkage": [0.0, 0.2]})
    seed, num_sets, folds, n = 11, 2, 3, 40
    result = multi_trainset_tune("copula", trial, n=n, grid=grid, num_sets=num_sets, folds=folds, seed=seed)

    per_set = []
    for si in range(num_sets):
        training = draw_training_set(trial, n, derive_seed(seed, "tune_set", si))
        sub = trial.control_subset(training)
        inner = grid_search_cv("copula", sub, grid, folds=folds, seed=derive_seed(seed, "cv", si))
        per_set.append(inner.candidate_scores)
    expected = [float(np.mean(np.asarray([row[ci] for row in per_set]))) for ci in range(grid.size)]
    assert result.candidate_scores == expected
    assert result.per_set_scores == per_set
    best = max(range(len(expected)), key=lambda i: (expected[i], -i))
    assert result.best_index == best


def test_multi_validates_num_sets(trial):
    with pytest.raises(SchemaError, match="num_sets"):
        multi_trainset_tune("marginals", trial, n=30, grid={"alpha": [0.0]}, num_sets=0)
