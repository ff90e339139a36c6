import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import binary_map, random_dataset
from ttrules.data import BinarizedDataset
from ttrules.errors import (FanInError, IntegrityError, ParameterError, ShapeError,
                            TaskMismatchError, TernarizationError, TrainingError)
from ttrules.extract import row_patterns
from ttrules.net import (LinearHead, LttFilter, LttFilterConfig, TrainParams, TTnetModel, batch_loss,
                         build_model, drop_filters, filter_forward, forward, load_model,
                         loss_and_grads, model_from_dict, model_to_dict, save_model, ternarize_head,
                         train)
from ttrules.task import Task


def identity_model(head_w, bias=0.0, mode="float", task=Task("binary")):
    """One k=1 filter per input bit, each copying its bit."""
    n = len(head_w)
    return TTnetModel(np.arange(n)[:, None], np.ones((n, 1, 1)), np.zeros((n, 1)), np.ones((n, 1)),
                      np.full(n, -0.5), LinearHead(mode, np.array([head_w], float), np.array([bias], float)),
                      n, task)


def all_patterns_ds(n, label_fn):
    X = row_patterns(n)
    y = np.array([label_fn(x) for x in X])
    return BinarizedDataset(X, y, Task("binary"), binary_map(n))


# -- filters -----------------------------------------------------------------


def and_filter():
    return LttFilter(LttFilterConfig(2, (0, 1), 1), np.array([[1.0, 1.0]]), np.zeros(1),
                     np.array([1.0]), -1.5)


def test_and_filter():
    f = and_filter()
    assert filter_forward(f, [1, 1]) == 1
    assert filter_forward(f, [0, 1]) == 0
    assert [filter_forward(f, p) for p in ([0, 0], [1, 0])] == [0, 0]
    assert filter_forward(f, [1, 1]) == filter_forward(f, [1, 1])


def test_filter_config_bounds():
    with pytest.raises(FanInError):
        LttFilterConfig(11, tuple(range(11)), 4)
    with pytest.raises(ParameterError):
        LttFilterConfig(2, (3, 3), 4)
    with pytest.raises(ShapeError):
        filter_forward(and_filter(), [1, 0, 1])


# -- construction ------------------------------------------------------------


def test_two_filters_partition_twelve_bits():
    m = build_model(12, 2, 6, seed=4)
    assert sorted(m.indices.ravel().tolist()) == list(range(12))


def test_build_model_deterministic():
    a, b = build_model(30, 7, 5, seed=11), build_model(30, 7, 5, seed=11)
    assert np.array_equal(a.indices, b.indices)
    for name, p in a.params().items():
        assert np.array_equal(p, b.params()[name])
    assert not np.array_equal(a.indices, build_model(30, 7, 5, seed=12).indices)


@settings(max_examples=40, deadline=None)
@given(st.integers(6, 60), st.integers(1, 30), st.integers(1, 6), st.integers(0, 50))
def test_bit_coverage_is_balanced(total_bits, n_filters, k, seed):
    m = build_model(total_bits, n_filters, k, seed=seed)
    counts = np.bincount(m.indices.ravel(), minlength=total_bits)
    lo, hi = (n_filters * k) // total_bits, -(-(n_filters * k) // total_bits)
    assert counts.min() >= lo and counts.max() <= hi
    assert all(len(set(row)) == k for row in m.indices.tolist())


def test_wide_layout_arithmetic():
    m = build_model(20530, 1064, 6, hidden_width=1, seed=0)
    distinct = np.unique(m.indices)
    assert m.n_filters == 1064
    assert len(distinct) == 1064 * 6 == 6384
    assert distinct.max() < 20530


def test_fan_in_larger_than_input():
    with pytest.raises(FanInError):
        build_model(3, 1, 4)


# -- forward -----------------------------------------------------------------


def test_forward_float_head():
    m = identity_model([0.5, -1.0], bias=0.1)
    assert forward(m, [1, 0])[0] == pytest.approx(0.6)


def test_forward_ternary_head():
    m = identity_model([1, -1, 1], mode="ternary")
    assert forward(m, [1, 1, 0])[0] == 0


def test_forward_all_zero_outputs_gives_bias():
    m = identity_model([0.3, 0.7], bias=-0.25)
    assert forward(m, [0, 0])[0] == -0.25


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        forward(identity_model([1.0, 1.0]), [1, 0, 1])


def test_flipping_unread_bits_never_changes_filters():
    m = build_model(10, 3, 3, seed=2)
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, (200, 10))
    base = m.filter_outputs(X)
    for f in range(m.n_filters):
        unread = sorted(set(range(10)) - set(m.indices[f].tolist()))
        for b in unread:
            Y = X.copy()
            Y[:, b] ^= 1
            assert np.array_equal(m.filter_outputs(Y)[:, f], base[:, f])


def test_dropping_zero_weight_filter_keeps_scores():
    m = build_model(16, 5, 4, seed=3)
    m.head = LinearHead("float", m.head.weights * np.array([1, 0, 1, 0, 1]), m.head.bias)
    X = np.random.default_rng(1).integers(0, 2, (300, 16))
    d = drop_filters(m, m.head.weights[0] != 0)
    assert d.n_filters == 3
    assert np.array_equal(d.scores(X), m.scores(X))


# -- training ----------------------------------------------------------------


def test_zero_epochs_returns_initial_parameters():
    ds = random_dataset(40, 8)
    m = build_model(8, 4, 2, seed=0)
    t = train(m, ds, ds, TrainParams(epochs=0))
    for name, p in m.params().items():
        assert np.array_equal(p, t.params()[name])


def test_zero_learning_rate_keeps_loss():
    ds = random_dataset(64, 8, seed=1)
    m = build_model(8, 4, 2, seed=0)
    hp = TrainParams(epochs=5, learning_rate=0.0, batch_size=16)
    t = train(m, ds, ds, hp)
    losses = [h["loss"] for h in t.meta["history"]]
    assert max(losses) - min(losses) <= 1e-9
    assert abs(batch_loss(t, ds, hp) - batch_loss(m, ds, hp)) <= 1e-9


def test_xor_learnable_for_some_seed():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8)
    ds = BinarizedDataset(X, np.array([0, 1, 1, 0]), Task("binary"), binary_map(2))
    hp = dict(epochs=200, batch_size=4, learning_rate=0.1, weight_decay=0.0, l1_head=0.0)
    accs = []
    for seed in range(5):
        m = train(build_model(2, 4, 2, seed=seed), ds, ds, TrainParams(seed=seed, **hp))
        accs.append(float(np.mean(m.predict(X) == ds.labels)))
    assert max(accs) == 1.0


def test_training_is_deterministic():
    ds = random_dataset(80, 10, seed=2)
    hp = TrainParams(epochs=4, batch_size=16, seed=5)
    a = train(build_model(10, 5, 3, seed=1), ds, ds, hp)
    b = train(build_model(10, 5, 3, seed=1), ds, ds, hp)
    for name, p in a.params().items():
        assert np.array_equal(p, b.params()[name])


def test_nonfinite_loss_aborts():
    ds = random_dataset(32, 6, task=Task("regression"))
    ds.labels = ds.labels * 1e200
    hp = TrainParams(epochs=3, learning_rate=1e200, momentum=0.0)
    with np.errstate(all="ignore"), pytest.raises(TrainingError, match="learning rate"):
        train(build_model(6, 3, 2, 4, Task("regression")), ds, ds, hp)


def test_task_mismatch_rejected():
    ds = random_dataset(16, 6, task=Task("regression"))
    with pytest.raises(TaskMismatchError):
        train(build_model(6, 2, 2), ds, ds, TrainParams(epochs=1))


@pytest.mark.parametrize("task", [Task("binary"), Task("multiclass", 3), Task("regression")])
def test_gradient_check(task):
    ds = random_dataset(8, 10, task=task, seed=7)
    m = build_model(10, 4, 3, hidden_width=3, task=task, seed=1)
    # keep pre-activations inside the surrogate's linear zone where it is differentiable
    m.b2[:] = 0.2 * np.sign(m.b2)
    hp = TrainParams(weight_decay=1e-3, l1_head=1e-3)
    y = ds.labels.astype(float) if task.kind == "regression" else ds.labels
    _, grads = loss_and_grads(m, ds.bits, y, hp, surrogate=True)
    eps = 1e-4
    worst = 0.0
    for name, p in m.params().items():
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            up = loss_and_grads(m, ds.bits, y, hp, surrogate=True)[0]
            p[i] = old - eps
            down = loss_and_grads(m, ds.bits, y, hp, surrogate=True)[0]
            p[i] = old
            num[i] = (up - down) / (2 * eps)
        denom = max(np.linalg.norm(num), np.linalg.norm(grads[name]), 1e-12)
        worst = max(worst, np.linalg.norm(num - grads[name]) / denom)
    assert worst <= 1e-3


# -- ternarization -----------------------------------------------------------


def test_ternarize_drops_small_weight():
    ds = all_patterns_ds(3, lambda x: int(x[0] and not x[1]))
    t = ternarize_head(identity_model([0.9, -0.8, 0.01]), ds)
    assert t.head.mode == "ternary"
    assert t.head.weights.tolist() == [[1.0, -1.0]]
    assert t.filter_ids.tolist() == [0, 1]
    assert t.meta["ternarize"]["taus"] == [0.8]


def test_ternarize_sparse_head_is_fixed_point():
    ds = all_patterns_ds(3, lambda x: int(x[0] and not x[2]))
    m = identity_model([1.0, 0.0, -1.0])
    t = ternarize_head(m, ds)
    assert t.head.weights.tolist() == [[1.0, -1.0]]
    X = ds.bits
    assert np.array_equal(t.scores(X), m.scores(X))


def test_ternarize_refuses_empty_head():
    ds = all_patterns_ds(2, lambda x: int(x[0]))
    with pytest.raises(TernarizationError):
        ternarize_head(identity_model([0.0, 0.0]), ds)


def test_ternary_head_validation():
    with pytest.raises(ParameterError):
        LinearHead("ternary", np.array([[0.5]]), np.zeros(1))
    with pytest.raises(ParameterError):
        LinearHead("ternary", np.array([[1.0]]), np.array([0.5]))


# -- serialization -----------------------------------------------------------


def test_model_file_roundtrip(tmp_path):
    ds = random_dataset(30, 9, task=Task("regression"))
    m = train(build_model(9, 3, 3, task=Task("regression"), seed=2), ds, ds, TrainParams(epochs=2))
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.scores(ds.bits), m.scores(ds.bits))
    assert (back.target_mean, back.target_std) == (m.target_mean, m.target_std)
    assert np.array_equal(back.predict(ds.bits), m.predict(ds.bits))


def test_model_tamper_detected():
    d = model_to_dict(build_model(8, 2, 4))
    d["filters"][0]["b2"] = 123.0
    with pytest.raises(IntegrityError):
        model_from_dict(d)
