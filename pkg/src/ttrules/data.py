"""CSV ingestion, feature binarization and stratified k-fold splitting.

Continuous columns are thermometer coded against quantile thresholds
(``bit_j = x >= t_j``), categorical columns are one-hot coded and
already-binary columns pass through unchanged.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CategoryError, ParameterError, ParseError, SchemaError, StratificationError
from .task import Task

logger = logging.getLogger(__name__)

KINDS = ("continuous", "categorical", "already-binary")
DEFAULT_N_THRESHOLDS = 8


class BinarizerWarning(UserWarning):
    """A feature contributes fewer bits than requested."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    categories: tuple[str, ...] = ()
    n_thresholds: int = DEFAULT_N_THRESHOLDS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind == "categorical" and len(set(self.categories)) < 2:
            raise SchemaError(f"feature {self.name!r}: categorical needs >= 2 distinct categories")
        if self.kind == "continuous" and self.n_thresholds < 1:
            raise SchemaError(f"feature {self.name!r}: n_thresholds must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        unknown = set(d) - {"name", "kind", "categories", "n_thresholds"}
        if unknown:
            raise SchemaError(f"unknown feature keys: {sorted(unknown)}")
        return cls(d["name"], d["kind"], tuple(d.get("categories", ())),
                   int(d.get("n_thresholds", DEFAULT_N_THRESHOLDS)))


@dataclass(frozen=True)
class Schema:
    """Declarative description of a CSV: features, target column and task."""

    features: tuple[FeatureSpec, ...]
    target: str
    task: Task
    classes: tuple[str, ...] | None = None

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        unknown = set(d) - {"features", "target", "task", "classes"}
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        classes = d.get("classes")
        return cls(tuple(FeatureSpec.from_dict(f) for f in d["features"]), d["target"],
                   Task.parse(d.get("task", "binary")),
                   tuple(str(c) for c in classes) if classes is not None else None)


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


@dataclass
class RawDataset:
    """Typed, row-major view of the schema columns plus the raw target column."""

    schema: tuple[FeatureSpec, ...]
    columns: dict[str, np.ndarray]
    target_name: str
    target: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.target)

    def take(self, indices) -> "RawDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return RawDataset(self.schema, {k: v[idx] for k, v in self.columns.items()},
                          self.target_name, self.target[idx])


def load_csv(path, schema: Sequence[FeatureSpec], target: str) -> RawDataset:
    """Read a headered UTF-8 CSV, keeping only the schema columns and the target."""
    schema = tuple(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    pos = {name: i for i, name in enumerate(header)}
    for name in [f.name for f in schema] + [target]:
        if name not in pos:
            raise SchemaError(f"column {name!r} not found in {path}")

    columns = {}
    for spec in schema:
        j = pos[spec.name]
        cells = [row[j].strip() for row in rows]
        if spec.kind == "categorical":
            allowed = set(spec.categories)
            for i, c in enumerate(cells):
                if c not in allowed:
                    raise CategoryError(
                        f"row {i + 2}, column {spec.name!r}: unseen category {c!r}")
            columns[spec.name] = np.array(cells, dtype=object)
            continue
        values = np.empty(len(cells), dtype=np.float64)
        for i, c in enumerate(cells):
            try:
                values[i] = float(c)
            except ValueError:
                raise ParseError(f"row {i + 2}, column {spec.name!r}: cannot parse {c!r}") from None
        if not np.all(np.isfinite(values)):
            raise ParseError(f"column {spec.name!r}: non-finite value")
        if spec.kind == "already-binary" and not np.all((values == 0) | (values == 1)):
            raise ParseError(f"column {spec.name!r}: already-binary column holds values other than 0/1")
        columns[spec.name] = values
    tgt = np.array([row[pos[target]].strip() for row in rows], dtype=object)
    return RawDataset(schema, columns, target, tgt)


# ---------------------------------------------------------------------------
# Binarizer


@dataclass(frozen=True)
class FeatureBits:
    name: str
    kind: str
    thresholds: tuple[float, ...] = ()
    categories: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        if self.kind == "continuous":
            return len(self.thresholds)
        if self.kind == "categorical":
            return len(self.categories)
        return 1

    def bit_names(self) -> list[str]:
        if self.kind == "continuous":
            return [f"{self.name} ≥ {_fmt(t)}" for t in self.thresholds]
        if self.kind == "categorical":
            return [f"{self.name} = {c}" for c in self.categories]
        return [self.name]


def _fmt(t: float) -> str:
    return f"{t:g}" if float(f"{t:g}") == t else repr(t)


@dataclass(frozen=True)
class BinarizerMap:
    features: tuple[FeatureBits, ...]
    offsets: tuple[int, ...] = field(init=False)
    bit_names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        offsets, names, off = [], [], 0
        for fb in self.features:
            if fb.kind == "continuous" and any(b <= a for a, b in zip(fb.thresholds, fb.thresholds[1:])):
                raise ParameterError(f"thresholds of {fb.name!r} are not strictly ascending")
            offsets.append(off)
            off += fb.width
            names.extend(fb.bit_names())
        object.__setattr__(self, "offsets", tuple(offsets))
        object.__setattr__(self, "bit_names", tuple(names))

    @property
    def total_bits(self) -> int:
        return len(self.bit_names)

    def bit_owner(self, bit: int) -> tuple[int, int]:
        """(feature position, ordinal of the bit inside that feature)."""
        f = int(np.searchsorted(self.offsets, bit, side="right")) - 1
        while self.features[f].width == 0:
            f -= 1
        return f, bit - self.offsets[f]

    def to_dict(self) -> dict:
        feats = []
        for fb in self.features:
            d = {"name": fb.name, "kind": fb.kind}
            if fb.kind == "continuous":
                d["thresholds"] = [repr(float(t)) for t in fb.thresholds]
            elif fb.kind == "categorical":
                d["categories"] = list(fb.categories)
            feats.append(d)
        return {"version": 1, "features": feats, "total_bits": self.total_bits,
                "bit_names": list(self.bit_names)}

    @classmethod
    def from_dict(cls, d: dict) -> "BinarizerMap":
        feats = tuple(
            FeatureBits(f["name"], f["kind"],
                        tuple(float(t) for t in f.get("thresholds", ())),
                        tuple(f.get("categories", ())))
            for f in d["features"])
        m = cls(feats)
        if "total_bits" in d and d["total_bits"] != m.total_bits:
            raise ParameterError("total_bits does not match the feature widths")
        return m

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "BinarizerMap":
        return cls.from_dict(json.loads(text))


def quantile_thresholds(values, n_thresholds: int) -> list[float]:
    """Midpoint-interpolated (j/(m+1))-quantiles, deduplicated, above the column minimum."""
    values = np.asarray(values, dtype=np.float64)
    qs = np.arange(1, n_thresholds + 1) / (n_thresholds + 1)
    cuts = np.unique(np.quantile(values, qs, method="midpoint"))
    # a cut at the minimum would give a bit that is always 1
    return [float(c) for c in cuts if c > values.min()]


def fit_binarizer(raw: RawDataset, schema: Sequence[FeatureSpec] | None = None) -> BinarizerMap:
    schema = tuple(schema) if schema is not None else raw.schema
    if raw.n_rows == 0:
        raise ParameterError("cannot fit a binarizer on an empty dataset")
    feats = []
    for spec in schema:
        col = raw.columns[spec.name]
        if spec.kind == "continuous":
            cuts = quantile_thresholds(col, spec.n_thresholds)
            if not cuts:
                warnings.warn(f"feature {spec.name!r} is constant; it contributes no bits",
                              BinarizerWarning, stacklevel=2)
            elif len(cuts) < spec.n_thresholds:
                logger.info("feature %r: %d of %d thresholds after collapsing ties",
                            spec.name, len(cuts), spec.n_thresholds)
            feats.append(FeatureBits(spec.name, "continuous", tuple(cuts)))
        elif spec.kind == "categorical":
            seen = set(col.tolist())
            feats.append(FeatureBits(spec.name, "categorical",
                                     categories=tuple(c for c in spec.categories if c in seen)))
        else:
            feats.append(FeatureBits(spec.name, "already-binary"))
    return BinarizerMap(tuple(feats))


@dataclass
class BinarizedDataset:
    bits: np.ndarray  # (n_samples, total_bits) uint8
    labels: np.ndarray
    task: Task
    map: BinarizerMap
    classes: tuple[str, ...] | None = None

    @property
    def n_samples(self) -> int:
        return self.bits.shape[0]

    def take(self, indices) -> "BinarizedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return BinarizedDataset(self.bits[idx], self.labels[idx], self.task, self.map, self.classes)

    def check_invariants(self) -> None:
        for f, fb in enumerate(self.map.features):
            block = self.bits[:, self.map.offsets[f]:self.map.offsets[f] + fb.width]
            if fb.kind == "continuous" and fb.width > 1:
                if np.any(block[:, 1:] > block[:, :-1]):
                    raise AssertionError(f"thermometer monotonicity violated in {fb.name!r}")
            if fb.kind == "categorical" and np.any(block.sum(axis=1) != 1):
                raise AssertionError(f"one-hot exclusivity violated in {fb.name!r}")
        if self.task.is_classification:
            if np.any((self.labels < 0) | (self.labels >= self.task.n_classes)):
                raise AssertionError("class label out of range")


def class_labels(raw: RawDataset) -> tuple[str, ...]:
    values = sorted(set(raw.target.tolist()))
    try:
        return tuple(sorted(values, key=float))
    except ValueError:
        return tuple(values)


def encode_labels(raw: RawDataset, task: Task, classes: Sequence[str] | None = None):
    if task.kind == "regression":
        try:
            return np.array([float(v) for v in raw.target], dtype=np.float64), None
        except ValueError as exc:
            raise ParseError(f"target {raw.target_name!r}: {exc}") from None
    classes = tuple(classes) if classes is not None else class_labels(raw)
    if len(classes) != task.n_classes:
        raise ParameterError(f"task {task} expects {task.n_classes} classes, got {len(classes)}")
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        labels = np.array([lookup[v] for v in raw.target], dtype=np.int64)
    except KeyError as exc:
        raise CategoryError(f"target {raw.target_name!r}: unknown class {exc.args[0]!r}") from None
    return labels, classes


def binarize(raw: RawDataset, map: BinarizerMap, task: Task = Task("binary"),
             classes: Sequence[str] | None = None) -> BinarizedDataset:
    blocks = []
    for fb in map.features:
        col = raw.columns[fb.name]
        if fb.kind == "continuous":
            blocks.append(col[:, None] >= np.asarray(fb.thresholds)[None, :])
        elif fb.kind == "categorical":
            lookup = {c: i for i, c in enumerate(fb.categories)}
            onehot = np.zeros((len(col), fb.width), dtype=bool)
            for i, v in enumerate(col):
                if v not in lookup:
                    raise CategoryError(f"feature {fb.name!r}: unseen category {v!r}")
                onehot[i, lookup[v]] = True
            blocks.append(onehot)
        else:
            blocks.append(col[:, None] == 1)
    n = raw.n_rows
    bits = np.concatenate(blocks, axis=1) if blocks else np.zeros((n, 0), dtype=bool)
    labels, classes = encode_labels(raw, task, classes)
    return BinarizedDataset(bits.astype(np.uint8), labels, task, map, classes)


# ---------------------------------------------------------------------------
# Splitting


def kfold_split(ds: BinarizedDataset, k: int, seed: int):
    """Deterministic k folds as ``[(train_idx, test_idx), ...]``.

    Classification tasks are stratified: indices are shuffled within each
    class, concatenated class by class and dealt round-robin to the folds.
    """
    return kfold_indices(ds.labels, ds.task, k, seed)


def kfold_indices(labels, task: Task, k: int, seed: int):
    if k < 2:
        raise ParameterError("k must be >= 2")
    labels = np.asarray(labels)
    n = len(labels)
    rng = np.random.default_rng(seed)
    if task.is_classification:
        order = []
        for c in range(task.n_classes):
            members = np.flatnonzero(labels == c)
            if len(members) < k:
                raise StratificationError(f"class {c} has {len(members)} members, fewer than k={k}")
            order.append(rng.permutation(members))
        order = np.concatenate(order)
    else:
        if n < k:
            raise StratificationError(f"{n} samples cannot fill {k} folds")
        order = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    folds = []
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, test))
    return folds
