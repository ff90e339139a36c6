import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttrules.config import Architecture, PipelineConfig, Training
from ttrules.data import FeatureSpec, RawDataset, Schema, fit_binarizer, kfold_indices
from ttrules.errors import MetricError, TaskMismatchError
from ttrules.evaluation import CvSummary, accuracy, auc, cross_validate, rmse, run_pipeline
from ttrules.task import Task


def pair_count_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


# -- metrics -----------------------------------------------------------------


def test_auc_examples():
    assert auc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.4] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auc([0.9, 0.2, 0.8, 0.3], [1, 0, 0, 1]) == 0.75 == pair_count_auc([0.9, 0.2, 0.8, 0.3], [1, 0, 0, 1])


def test_auc_single_class():
    with pytest.raises(MetricError):
        auc([0.1, 0.2], [1, 1])


scores_labels = st.integers(2, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-5, 5).map(float), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=200, deadline=None)
@given(scores_labels)
def test_auc_properties(sl):
    scores, labels = sl
    if len(set(labels)) < 2:
        return
    s, y = np.array(scores), np.array(labels)
    value = auc(s, y)
    assert value == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)
    assert auc(2 * s + 1, y) == pytest.approx(value, abs=1e-12)
    assert abs(value + auc(s, 1 - y) - 1.0) <= 1e-12


def test_accuracy_and_rmse():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert rmse([1.5, 2.0], [1.5, 2.0]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-12)
    assert accuracy([0, 1, 1, 2], [0, 0, 0, 0]) == 0.25


# -- pipeline ----------------------------------------------------------------


def toy_raw(n=200, seed=0, task=Task("binary")):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 10, n).astype(float)
    b = rng.normal(size=n)
    c = rng.choice(["u", "v", "w"], n).astype(object)
    if task.kind == "regression":
        y = np.char.mod("%.6f", a + 2 * (c == "u")).astype(object)
    else:
        y = np.where((a >= 5) & (c != "w") | (b > 1.2), "yes", "no").astype(object)
    schema = (FeatureSpec("a", "continuous", n_thresholds=4), FeatureSpec("b", "continuous", n_thresholds=3),
              FeatureSpec("c", "categorical", ("u", "v", "w")))
    return Schema(schema, "y", task, None), RawDataset(schema, {"a": a, "b": b, "c": c}, "y", y)


def toy_config(**kw):
    base = dict(architecture=Architecture(n_filters=6, k=3, hidden_width=3),
                training=Training(epochs=8, batch_size=32, learning_rate=0.05), folds=3)
    base.update(kw)
    return PipelineConfig(**base)


def test_cross_validate_is_deterministic():
    schema, raw = toy_raw()
    a = cross_validate(toy_config(), schema, raw)
    b = cross_validate(toy_config(), schema, raw)
    assert a.to_dict(with_timings=False) == b.to_dict(with_timings=False)
    assert len(a.values) == 3
    assert all(x == 1.0 for x in a.agreements)
    assert a.mean == pytest.approx(np.mean(a.values), abs=1e-12)
    assert a.std == pytest.approx(np.std(a.values, ddof=0), abs=1e-12)


def test_cross_validate_ternary_and_regression():
    schema, raw = toy_raw()
    t = cross_validate(toy_config(head="ternary"), schema, raw)
    assert all(x == 1.0 for x in t.agreements)
    schema_r, raw_r = toy_raw(task=Task("regression"))
    r = cross_validate(toy_config(), schema_r, raw_r)
    assert r.metric_name == "RMSE" and all(v >= 0 for v in r.values)
    assert all(x == 1.0 for x in r.agreements)


def test_task_mismatch():
    schema, raw = toy_raw()
    with pytest.raises(TaskMismatchError):
        cross_validate(toy_config(task="regression"), schema, raw)


def test_binarizer_fitted_on_training_rows_only():
    schema, raw = toy_raw(seed=3)
    labels = np.array([v == "yes" for v in raw.target], dtype=int)
    train_idx, test_idx = kfold_indices(labels, schema.task, 3, 0)[0]
    res = run_pipeline(toy_config(), schema, raw.take(train_idx), raw.take(test_idx), classes=("no", "yes"))
    refit = fit_binarizer(raw.take(train_idx), schema.features)
    expect = {fb.name: list(fb.thresholds) for fb in refit.features if fb.kind == "continuous"}
    assert res.thresholds == expect
    full = fit_binarizer(raw, schema.features)
    assert any(list(fb.thresholds) != expect[fb.name] for fb in full.features if fb.kind == "continuous")


def test_summary_statistics():
    s = CvSummary("AUC", [0.9, 1.0], 0.95, 0.05, [3, 4], [6, 6], [1.0, 1.0], [0.1, 0.1])
    assert s.mean == pytest.approx(np.mean(s.values), abs=1e-12)
    assert s.std == pytest.approx(np.std(s.values), abs=1e-12)
    assert "AUC 0.950 ± 0.050" in s.table_row()
