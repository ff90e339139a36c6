"""Truth-table network: one layer of low fan-in binary filters plus a linear head.

Each filter reads ``k`` input bits and computes
``step(w2 . relu(W1 x + b1) + b2)`` with ``step(z) = [z >= 0]``.  Because
``k`` is small the whole input/output behaviour of a filter can be
enumerated after training, which is what makes rule extraction exact.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FanInError, IntegrityError, ParameterError, ShapeError, TaskMismatchError, \
    TernarizationError, TrainingError
from .task import Task

logger = logging.getLogger(__name__)

MAX_FAN_IN = 10
MODEL_FORMAT_VERSION = 1
_CHUNK = 512


@dataclass(frozen=True)
class LttFilterConfig:
    k: int
    input_indices: tuple[int, ...]
    hidden_width: int

    def __post_init__(self):
        if not 1 <= self.k <= MAX_FAN_IN:
            raise FanInError(f"fan-in {self.k} outside [1, {MAX_FAN_IN}]")
        if len(self.input_indices) != self.k or len(set(self.input_indices)) != self.k:
            raise ParameterError("input_indices must be k distinct bit indices")


@dataclass(frozen=True)
class LttFilter:
    config: LttFilterConfig
    W1: np.ndarray  # (hidden_width, k)
    b1: np.ndarray  # (hidden_width,)
    w2: np.ndarray  # (hidden_width,)
    b2: float


def filter_forward(filt: LttFilter, bits_patch) -> int:
    x = np.asarray(bits_patch, dtype=np.float64)
    if x.shape != (filt.config.k,):
        raise ShapeError(f"patch of length {x.size}, filter reads {filt.config.k} bits")
    z2 = filter_preactivation(x[None, None, :], filt.W1[None], filt.b1[None], filt.w2[None],
                              np.array([filt.b2]))[1]
    return int(z2[0, 0] >= 0.0)


@dataclass
class LinearHead:
    mode: str  # "float" or "ternary"
    weights: np.ndarray  # (n_outputs, n_filters)
    bias: np.ndarray  # (n_outputs,)

    def __post_init__(self):
        if self.mode not in ("float", "ternary"):
            raise ParameterError(f"unknown head mode {self.mode!r}")
        if self.mode == "ternary":
            if not np.all(np.isin(self.weights, (-1.0, 0.0, 1.0))):
                raise ParameterError("ternary head weights must lie in {-1, 0, +1}")
            if not np.all(self.bias == np.round(self.bias)):
                raise ParameterError("ternary head bias must be an integer")


@dataclass
class TTnetModel:
    indices: np.ndarray  # (F, k) global bit indices read by each filter
    W1: np.ndarray  # (F, h, k)
    b1: np.ndarray  # (F, h)
    w2: np.ndarray  # (F, h)
    b2: np.ndarray  # (F,)
    head: LinearHead
    input_bits: int
    task: Task
    filter_ids: np.ndarray = None  # stable identifiers, survive filter dropping
    target_mean: float = 0.0
    target_std: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.filter_ids is None:
            self.filter_ids = np.arange(len(self.indices))
        if self.head.weights.shape != (self.task.n_outputs, len(self.indices)):
            raise ShapeError("head weight shape does not match (n_outputs, n_filters)")

    @property
    def n_filters(self) -> int:
        return len(self.indices)

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.W1.shape[1]

    def filter(self, i: int) -> LttFilter:
        cfg = LttFilterConfig(self.k, tuple(int(j) for j in self.indices[i]), self.hidden_width)
        return LttFilter(cfg, self.W1[i], self.b1[i], self.w2[i], float(self.b2[i]))

    def params(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "Wh": self.head.weights, "bh": self.head.bias}

    def copy(self) -> "TTnetModel":
        return replace(self, indices=self.indices.copy(), W1=self.W1.copy(), b1=self.b1.copy(),
                       w2=self.w2.copy(), b2=self.b2.copy(),
                       head=LinearHead(self.head.mode, self.head.weights.copy(), self.head.bias.copy()),
                       filter_ids=self.filter_ids.copy(), meta=dict(self.meta))

    # -- inference ---------------------------------------------------------

    def filter_outputs(self, X) -> np.ndarray:
        """(n, F) uint8 matrix of filter bits."""
        X = self._check_input(X)
        out = np.empty((X.shape[0], self.n_filters), dtype=np.uint8)
        for s in range(0, X.shape[0], _CHUNK):
            z2 = _filter_preact(self, X[s:s + _CHUNK])[1]
            out[s:s + _CHUNK] = z2 >= 0.0
        return out

    def scores(self, X) -> np.ndarray:
        """(n, n_outputs) head scores; standardized units for regression."""
        A = self.filter_outputs(X).astype(np.float64)
        return A @ self.head.weights.T + self.head.bias

    def predict(self, X) -> np.ndarray:
        return scores_to_predictions(self.scores(X), self.task, self.target_mean, self.target_std)

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.input_bits:
            raise ShapeError(f"input has {X.shape[1]} bits, model expects {self.input_bits}")
        return X


def forward(model: TTnetModel, input_bits) -> np.ndarray:
    """Scores for a single input vector (length ``n_outputs``)."""
    x = np.asarray(input_bits)
    if x.ndim != 1:
        raise ShapeError("forward takes one input vector; use model.scores for batches")
    return model.scores(x)[0]


def scores_to_predictions(S: np.ndarray, task: Task, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    if task.kind == "binary":
        return (S[:, 0] > 0).astype(np.int64)
    if task.kind == "multiclass":
        return np.argmax(S, axis=1).astype(np.int64)  # first maximum wins ties
    return S[:, 0] * std + mean


def filter_preactivation(P, W1, b1, w2, b2):
    """Inner activations for patches ``P`` of shape (n, F, k).

    Sums run in a fixed order with elementwise operations only, so every
    caller (training, inference, truth-table enumeration) gets bit-identical
    pre-activations for the same patch regardless of batch shape.
    """
    Z1 = b1 + P[:, :, 0, None] * W1[:, :, 0]
    for j in range(1, P.shape[2]):
        Z1 = Z1 + P[:, :, j, None] * W1[:, :, j]
    H = np.maximum(Z1, 0.0)
    z2 = b2 + H[:, :, 0] * w2[:, 0]
    for i in range(1, H.shape[2]):
        z2 = z2 + H[:, :, i] * w2[:, i]
    return Z1, z2, H


def _filter_preact(model: TTnetModel, X):
    P = X[:, model.indices].astype(np.float64)  # (n, F, k)
    Z1, z2, H = filter_preactivation(P, model.W1, model.b1, model.w2, model.b2)
    return P, z2, Z1, H


# ---------------------------------------------------------------------------
# Construction


def build_model(total_bits: int, n_filters: int, k: int, hidden_width: int = 4,
                task: Task = Task("binary"), seed: int = 0) -> TTnetModel:
    if n_filters < 1:
        raise ParameterError("n_filters must be >= 1")
    LttFilterConfig(k, tuple(range(k)), hidden_width)  # validates k
    if k > total_bits:
        raise FanInError(f"fan-in {k} exceeds the {total_bits} available input bits")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(total_bits)
    pos = (np.arange(n_filters)[:, None] * k + np.arange(k)[None, :]) % total_bits
    indices = perm[pos]
    if n_filters * k < total_bits:
        logger.info("%d of %d input bits are read by no filter", total_bits - n_filters * k, total_bits)
    scale = 1.0 / math.sqrt(k)
    W1 = rng.uniform(-scale, scale, (n_filters, hidden_width, k))
    b1 = rng.uniform(-scale, scale, (n_filters, hidden_width))
    w2 = rng.uniform(-scale, scale, (n_filters, hidden_width))
    b2 = rng.uniform(-scale, scale, n_filters)
    hs = 1.0 / math.sqrt(n_filters)
    head = LinearHead("float", rng.uniform(-hs, hs, (task.n_outputs, n_filters)),
                      np.zeros(task.n_outputs))
    return TTnetModel(indices, W1, b1, w2, b2, head, total_bits, task,
                      meta={"seed": seed, "n_filters": n_filters, "k": k, "hidden_width": hidden_width})


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.05
    weight_decay: float = 1e-4
    l1_head: float = 1e-3
    momentum: float = 0.9
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def loss_and_grads(model: TTnetModel, X, y, hp: TrainParams, surrogate: bool = False):
    """Mean loss over the batch and its gradients w.r.t. every parameter.

    The backward pass replaces the step by the identity clipped to
    ``|z| <= 1``.  With ``surrogate=True`` the forward pass also uses
    ``clip(z, -1, 1)`` so that the returned gradients are the exact
    gradients of the returned loss.
    """
    P, z2, Z1, H = _filter_preact(model, X)
    A = np.clip(z2, -1.0, 1.0) if surrogate else (z2 >= 0.0).astype(np.float64)
    Wh, bh = model.head.weights, model.head.bias
    S = A @ Wh.T + bh
    n = len(X)
    task = model.task
    if task.kind == "binary":
        s = S[:, 0]
        loss = np.mean(np.logaddexp(0.0, s) - y * s)
        dS = ((_sigmoid(s) - y) / n)[:, None]
    elif task.kind == "multiclass":
        S0 = S - S.max(axis=1, keepdims=True)
        logZ = np.log(np.exp(S0).sum(axis=1))
        loss = np.mean(logZ - S0[np.arange(n), y])
        Pr = np.exp(S0 - logZ[:, None])
        Pr[np.arange(n), y] -= 1.0
        dS = Pr / n
    else:
        r = S[:, 0] - y
        loss = np.mean(r * r)
        dS = (2.0 * r / n)[:, None]

    g = {"Wh": dS.T @ A, "bh": dS.sum(axis=0)}
    dA = dS @ Wh
    dz2 = dA * (np.abs(z2) <= 1.0)
    g["w2"] = np.einsum("nf,nfh->fh", dz2, H)
    g["b2"] = dz2.sum(axis=0)
    dZ1 = dz2[:, :, None] * model.w2[None] * (Z1 > 0.0)
    g["W1"] = np.einsum("nfh,nfk->fhk", dZ1, P)
    g["b1"] = dZ1.sum(axis=0)

    if hp.weight_decay:
        for name in ("W1", "w2", "Wh"):
            p = model.params()[name]
            loss += 0.5 * hp.weight_decay * float(np.sum(p * p))
            g[name] = g[name] + hp.weight_decay * p
    if hp.l1_head:
        loss += hp.l1_head * float(np.sum(np.abs(Wh)))
        g["Wh"] = g["Wh"] + hp.l1_head * np.sign(Wh)
    return float(loss), g


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def validation_metric(model: TTnetModel, ds) -> float:
    """Higher is better: AUC (binary), accuracy (multiclass), -RMSE (regression)."""
    return _metric_from_scores(model.scores(ds.bits), ds.labels, model.task,
                               model.target_mean, model.target_std)


def _metric_from_scores(S, labels, task: Task, mean: float = 0.0, std: float = 1.0) -> float:
    from .evaluation import accuracy, auc, rmse

    if task.kind == "binary":
        if len(np.unique(labels)) < 2:
            return accuracy((S[:, 0] > 0).astype(int), labels)
        return auc(S[:, 0], labels)
    if task.kind == "multiclass":
        return accuracy(np.argmax(S, axis=1), labels)
    return -rmse(S[:, 0] * std + mean, labels)


def _targets(model: TTnetModel, ds):
    if model.task.kind == "regression":
        return (ds.labels - model.target_mean) / model.target_std
    return ds.labels


def train(model: TTnetModel, train_ds, val_ds=None, hp: TrainParams = TrainParams()) -> TTnetModel:
    """Mini-batch SGD with momentum; returns the best-on-validation parameters."""
    for ds in (train_ds, val_ds):
        if ds is not None and ds.task != model.task:
            raise TaskMismatchError(f"model task {model.task} vs dataset task {ds.task}")
    if train_ds.bits.shape[1] != model.input_bits:
        raise ShapeError("training data width differs from model input width")
    val_ds = val_ds if val_ds is not None else train_ds
    model = model.copy()
    if model.task.kind == "regression":
        std = float(np.std(train_ds.labels))
        model.target_mean = float(np.mean(train_ds.labels))
        model.target_std = std if std > 0 else 1.0
    y_all = _targets(model, train_ds)
    rng = np.random.default_rng(hp.seed)
    velocity = {name: np.zeros_like(p) for name, p in model.params().items()}

    best = model.copy()
    best_metric = validation_metric(model, val_ds) if hp.epochs > 0 else None
    history = []
    n = train_ds.n_samples
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, hp.batch_size)):
            idx = order[start:start + hp.batch_size]
            loss, grads = loss_and_grads(model, train_ds.bits[idx], y_all[idx], hp)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}, "
                                    f"learning rate {hp.learning_rate}")
            losses.append(loss)
            params = model.params()
            for name, p in params.items():
                v = velocity[name]
                v *= hp.momentum
                v -= hp.learning_rate * grads[name]
                p += v
        metric = validation_metric(model, val_ds)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_metric": metric})
        if metric > best_metric:
            best_metric = metric
            best = model.copy()
    best.meta = {**best.meta, "train": hp.to_dict(), "best_val_metric": best_metric}
    best.meta["history"] = history
    return best


def batch_loss(model: TTnetModel, ds, hp: TrainParams = TrainParams()) -> float:
    return loss_and_grads(model, ds.bits, _targets(model, ds), hp)[0]


# ---------------------------------------------------------------------------
# Head ternarization


def _ternary_head(W, b, taus):
    Wt = np.zeros_like(W)
    bt = np.zeros_like(b)
    for c in range(W.shape[0]):
        keep = np.abs(W[c]) >= taus[c]
        Wt[c, keep] = np.sign(W[c, keep])
        scale = np.mean(np.abs(W[c, keep])) if keep.any() else 1.0
        bt[c] = np.round(b[c] / scale)
    return Wt, bt


def _kept_scale(W, taus):
    scales = []
    for c in range(W.shape[0]):
        keep = np.abs(W[c]) >= taus[c]
        scales.append(float(np.mean(np.abs(W[c, keep]))) if keep.any() else 1.0)
    return scales


def ternarize_head(model: TTnetModel, ds, max_rel_drop: float = 0.02) -> TTnetModel:
    """Replace a float head by a sign head with integer bias.

    For each output row, the threshold ``tau`` is scanned over the sorted
    absolute weights and the largest value keeping the metric within
    ``max_rel_drop`` (relative) of the float head is retained.  Filters
    whose weight ends up 0 for every output are removed.
    """
    if model.head.mode != "float":
        raise ParameterError("head is already ternary")
    W, b = model.head.weights, model.head.bias
    if model.task.kind == "regression":
        ref = -validation_metric(model, ds)
        ok = lambda m: -m <= ref * (1.0 + max_rel_drop) + 1e-12  # noqa: E731
    else:
        ref = validation_metric(model, ds)
        ok = lambda m: m >= ref * (1.0 - max_rel_drop) - 1e-12  # noqa: E731

    A = model.filter_outputs(ds.bits).astype(np.float64)  # the scan only changes the head

    def candidate(taus, build=False):
        Wt, bt = _ternary_head(W, b, taus)
        std = model.target_std
        if model.task.kind == "regression":
            std = model.target_std * _kept_scale(W, taus)[0]
        metric = _metric_from_scores(A @ Wt.T + bt, ds.labels, model.task, model.target_mean, std)
        if not build:
            return None, metric
        m = model.copy()
        m.target_std = std
        m.head = LinearHead("ternary", Wt, bt)
        return m, metric

    taus = [0.0] * W.shape[0]
    trace = []
    for c in range(W.shape[0]):
        levels = np.unique(np.abs(W[c][W[c] != 0]))
        best_ok, best_any = None, None
        for tau in levels:
            trial = list(taus)
            trial[c] = float(tau)
            _, metric = candidate(trial)
            trace.append({"output": c, "tau": float(tau), "metric": metric})
            if ok(metric):
                best_ok = float(tau)
            if best_any is None or metric > best_any[1]:
                best_any = (float(tau), metric)
        if best_ok is not None:
            taus[c] = best_ok
        elif best_any is not None:
            logger.warning("output %d: no threshold within %.1f%% of the float head; "
                           "keeping the best one (metric %.4f vs %.4f)",
                           c, 100 * max_rel_drop, best_any[1], ref)
            taus[c] = best_any[0]
        else:
            taus[c] = math.inf

    tern, metric = candidate(taus, build=True)
    alive = np.any(tern.head.weights != 0, axis=0)
    if not alive.any():
        raise TernarizationError("every head weight was zeroed", trace)
    tern = drop_filters(tern, alive)
    tern.meta = {**tern.meta, "ternarize": {"taus": taus, "float_metric": ref if model.task.is_classification
                                            else -ref, "ternary_metric": metric}}
    return tern


def drop_filters(model: TTnetModel, keep) -> TTnetModel:
    keep = np.asarray(keep, dtype=bool)
    m = model.copy()
    m.indices, m.W1, m.b1 = m.indices[keep], m.W1[keep], m.b1[keep]
    m.w2, m.b2, m.filter_ids = m.w2[keep], m.b2[keep], m.filter_ids[keep]
    m.head = LinearHead(m.head.mode, m.head.weights[:, keep], m.head.bias)
    return m


# ---------------------------------------------------------------------------
# Serialization


def _digest(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def model_to_dict(model: TTnetModel, extra: dict | None = None) -> dict:
    payload = {
        "format": "ttnet-model",
        "version": MODEL_FORMAT_VERSION,
        "task": model.task.to_str(),
        "input_bits": model.input_bits,
        "architecture": {"n_filters": model.n_filters, "k": model.k, "hidden_width": model.hidden_width},
        "filters": [
            {"id": int(model.filter_ids[i]), "indices": [int(j) for j in model.indices[i]],
             "W1": model.W1[i].tolist(), "b1": model.b1[i].tolist(),
             "w2": model.w2[i].tolist(), "b2": float(model.b2[i])}
            for i in range(model.n_filters)],
        "head": {"mode": model.head.mode, "weights": model.head.weights.tolist(),
                 "bias": model.head.bias.tolist()},
        "target_standardization": {"mean": model.target_mean, "std": model.target_std},
        "meta": model.meta,
    }
    if extra:
        payload.update(extra)
    return {**payload, "sha256": _digest(payload)}


def model_from_dict(d: dict) -> TTnetModel:
    d = dict(d)
    digest = d.pop("sha256", None)
    if digest != _digest(d):
        raise IntegrityError("model checksum mismatch; file was modified or truncated")
    if d.get("format") != "ttnet-model" or d.get("version") != MODEL_FORMAT_VERSION:
        raise IntegrityError("not a supported model file")
    fs = d["filters"]
    arch = d["architecture"]
    h, k = arch["hidden_width"], arch["k"]
    F = len(fs)
    head = LinearHead(d["head"]["mode"], np.array(d["head"]["weights"], dtype=np.float64).reshape(-1, F),
                      np.array(d["head"]["bias"], dtype=np.float64))
    return TTnetModel(
        indices=np.array([f["indices"] for f in fs], dtype=np.int64).reshape(F, k),
        W1=np.array([f["W1"] for f in fs], dtype=np.float64).reshape(F, h, k),
        b1=np.array([f["b1"] for f in fs], dtype=np.float64).reshape(F, h),
        w2=np.array([f["w2"] for f in fs], dtype=np.float64).reshape(F, h),
        b2=np.array([f["b2"] for f in fs], dtype=np.float64),
        head=head, input_bits=d["input_bits"], task=Task.parse(d["task"]),
        filter_ids=np.array([f["id"] for f in fs], dtype=np.int64),
        target_mean=d["target_standardization"]["mean"],
        target_std=d["target_standardization"]["std"], meta=d.get("meta", {}))


def save_model(model: TTnetModel, path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, extra), fh, indent=1, ensure_ascii=False)
        fh.write("\n")


def load_model(path) -> TTnetModel:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(d)
