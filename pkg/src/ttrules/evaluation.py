"""Metrics and the k-fold cross-validation harness."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .data import RawDataset, Schema, binarize, class_labels, fit_binarizer, kfold_indices
from .errors import ExactnessError, MetricError, ShapeError, StratificationError, TaskMismatchError
from .extract import extract_rules
from .net import build_model, ternarize_head, train
from .rules import optimize_ruleset, verify_exactness
from .task import Task

logger = logging.getLogger(__name__)


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes present")
    # average ranks: tied scores share the mean of the ranks they span
    uniq, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg_rank = upper - (counts - 1) / 2.0
    rank_sum = avg_rank[inverse][pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise ShapeError("predictions and labels differ in length")
    if len(preds) == 0:
        raise MetricError("accuracy of an empty set")
    return float(np.mean(preds == labels))


def rmse(preds, targets) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ShapeError("predictions and targets differ in length")
    if len(preds) == 0:
        raise MetricError("RMSE of an empty set")
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


METRIC_NAMES = {"binary": "AUC", "multiclass": "Accuracy", "regression": "RMSE"}


def ruleset_metric(ruleset, ds) -> float:
    if ds.task.kind == "binary":
        return auc(ruleset.decision_scores(ds.bits), ds.labels)
    if ds.task.kind == "multiclass":
        return accuracy(ruleset.predict(ds.bits), ds.labels)
    return rmse(ruleset.predict(ds.bits), ds.labels)


# ---------------------------------------------------------------------------
# One pipeline run


@dataclass
class FoldResult:
    metric: float
    n_rules_extracted: int
    n_rules: int
    agreement_train: float
    agreement_test: float
    max_score_diff: float
    seconds: float
    thresholds: dict = field(default_factory=dict)
    optimization: dict = field(default_factory=dict)
    model: object = None
    ruleset: object = None
    map: object = None


def _offending_rule(ruleset, model, X):
    outputs = model.filter_outputs(X)
    column = {int(fid): i for i, fid in enumerate(model.filter_ids)}
    for r in ruleset.rules:
        fid = int(r.name[1:]) if r.name[1:].isdigit() else None
        if fid in column and np.any(r.fires(X) != outputs[:, column[fid]]):
            return r.name
    return None


def run_pipeline(config: PipelineConfig, schema: Schema, raw_train: RawDataset,
                 raw_test: RawDataset | None = None, classes=None, jobs: int = 1) -> FoldResult:
    """Binarize, train, extract, optimize and verify on one train/test split."""
    start = time.perf_counter()
    task = schema.task
    classes = classes if classes is not None else (schema.classes or (class_labels(raw_train)
                                                                      if task.is_classification else None))
    bmap = fit_binarizer(raw_train, schema.features)
    train_ds = binarize(raw_train, bmap, task, classes)
    test_ds = binarize(raw_test, bmap, task, classes) if raw_test is not None else None

    fit_ds, val_ds = train_ds, train_ds
    if config.val_fraction > 0:
        n_inner = max(2, int(round(1.0 / config.val_fraction)))
        try:
            fit_idx, val_idx = kfold_indices(train_ds.labels, task, n_inner, config.seed)[0]
            fit_ds, val_ds = train_ds.take(fit_idx), train_ds.take(val_idx)
        except StratificationError:
            logger.info("too few samples for a validation split; validating on training rows")

    arch = config.architecture
    model = build_model(bmap.total_bits, arch.n_filters, arch.k, arch.hidden_width, task, config.seed)
    model = train(model, fit_ds, val_ds, config.train_params())
    if config.head == "ternary":
        model = ternarize_head(model, val_ds, config.max_rel_drop)

    rs = extract_rules(model, bmap, train_ds.bits, unseen_dontcare=config.dont_care.unseen,
                       encoding_dontcare=config.dont_care.encoding, jobs=jobs)
    rs_opt, opt = optimize_ruleset(rs, train_ds, config.corr_threshold)

    checks = [verify_exactness(rs_opt, model, train_ds)]
    if test_ds is not None:
        checks.append(verify_exactness(rs_opt, model, test_ds))
    if config.lossless:
        for name, rep, ds in zip(("train", "test"), checks, (train_ds, test_ds)):
            if rep.agreement < 1.0 or rep.max_score_diff > 1e-9:
                culprit = _offending_rule(rs, model, ds.bits)
                raise ExactnessError(f"rule set disagrees with the network on {name} rows "
                                     f"(agreement {rep.agreement:.6f}, offending rule {culprit})", culprit)

    metric = ruleset_metric(rs_opt, test_ds if test_ds is not None else train_ds)
    return FoldResult(
        metric=metric, n_rules_extracted=len(rs), n_rules=len(rs_opt),
        agreement_train=checks[0].agreement,
        agreement_test=checks[1].agreement if len(checks) > 1 else float("nan"),
        max_score_diff=max(c.max_score_diff for c in checks),
        seconds=time.perf_counter() - start,
        thresholds={fb.name: list(fb.thresholds) for fb in bmap.features if fb.kind == "continuous"},
        optimization=opt.to_dict(), model=model, ruleset=rs_opt, map=bmap)


# ---------------------------------------------------------------------------
# Cross-validation


@dataclass
class CvSummary:
    metric_name: str
    values: list[float]
    mean: float
    std: float
    rule_counts: list[int]
    extracted_counts: list[int]
    agreements: list[float]
    seconds: list[float]
    fold_thresholds: list[dict] = field(default_factory=list)

    @classmethod
    def from_folds(cls, metric_name: str, folds: list[FoldResult]) -> "CvSummary":
        values = [f.metric for f in folds]
        return cls(metric_name, values, float(np.mean(values)), float(np.std(values)),
                   [f.n_rules for f in folds], [f.n_rules_extracted for f in folds],
                   [min(f.agreement_train, f.agreement_test) for f in folds],
                   [f.seconds for f in folds], [f.thresholds for f in folds])

    def to_dict(self, with_timings: bool = True) -> dict:
        d = {"metric": self.metric_name, "per_fold": self.values, "mean": self.mean,
             "std": self.std, "rule_counts": self.rule_counts,
             "extracted_rule_counts": self.extracted_counts, "agreement": self.agreements}
        if with_timings:
            d["seconds"] = self.seconds
        return d

    def table_row(self, label: str = "rule set") -> str:
        return f"{label:<16}| {self.metric_name} {self.mean:.3f} ± {self.std:.3f} | rules {np.mean(self.rule_counts):.1f}"


def _fold_job(args):
    config, schema, raw, train_idx, test_idx, classes = args
    res = run_pipeline(config, schema, raw.take(train_idx), raw.take(test_idx), classes)
    res.model = res.ruleset = res.map = None
    return res


def cross_validate(config: PipelineConfig, schema: Schema, raw: RawDataset, k: int | None = None,
                   seed: int | None = None, jobs: int = 1) -> CvSummary:
    k = k if k is not None else config.folds
    seed = seed if seed is not None else config.seed
    if config.task is not None and Task.parse(config.task) != schema.task:
        raise TaskMismatchError(f"config task {config.task} does not match dataset task {schema.task}")
    task = schema.task
    classes = None
    if task.is_classification:
        classes = schema.classes or class_labels(raw)
        lookup = {c: i for i, c in enumerate(classes)}
        if len(classes) != task.n_classes:
            raise TaskMismatchError(f"task {task} but the target has {len(classes)} classes")
        labels = np.array([lookup[v] for v in raw.target])
    else:
        labels = np.zeros(raw.n_rows)
    folds = kfold_indices(labels, task, k, seed)
    jobs_args = [(config, schema, raw, tr, te, classes) for tr, te in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_job, jobs_args))
    else:
        results = [_fold_job(a) for a in jobs_args]
    for i, r in enumerate(results):
        logger.info("fold %d: %s=%.4f rules=%d (%.1fs)", i, METRIC_NAMES[task.kind], r.metric,
                    r.n_rules, r.seconds)
    return CvSummary.from_folds(METRIC_NAMES[task.kind], results)
