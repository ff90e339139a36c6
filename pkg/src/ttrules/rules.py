"""Rule-based model: weighted DNF rules summed into a score.

A binary rule set predicts 1 when ``sum(w_r * r(I)) + bias > 0`` and 0
otherwise; multiclass takes the argmax of per-class sums (lowest index on
ties); regression maps the sum back through the target standardization.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .bdd import BddStore, build_from_dnf
from .data import BinarizerMap
from .errors import IntegrityError, ParameterError, ShapeError
from .logic import DnfFormula
from .net import scores_to_predictions
from .task import Task

logger = logging.getLogger(__name__)

RULESET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Rule:
    name: str
    formula: DnfFormula
    weights: tuple[float, ...]  # one per output

    @property
    def weight(self) -> float:
        if len(self.weights) != 1:
            raise ParameterError("multiclass rule has one weight per class")
        return self.weights[0]

    def fires(self, X) -> np.ndarray:
        return self.formula.evaluate(X)


def rule_eval(rule: Rule, input_bits):
    """Score contribution of ``rule``: its weight if the formula fires, else 0."""
    x = np.asarray(input_bits)
    fired = rule.fires(x).astype(np.float64)
    contrib = fired[:, None] * np.asarray(rule.weights)[None, :]
    if len(rule.weights) == 1:
        contrib = contrib[:, 0]
    return contrib[0] if x.ndim == 1 else contrib


@dataclass
class RuleSet:
    rules: list[Rule]
    bias: tuple[float, ...]
    task: Task
    map: BinarizerMap | None = None
    standardization: tuple[float, float] = (0.0, 1.0)
    head_mode: str = "float"

    def __len__(self):
        return len(self.rules)

    @property
    def input_bits(self) -> int | None:
        return self.map.total_bits if self.map is not None else None

    def firing_matrix(self, X) -> np.ndarray:
        X = self._check(X)
        F = np.zeros((X.shape[0], len(self.rules)), dtype=np.uint8)
        for j, r in enumerate(self.rules):
            F[:, j] = r.fires(X)
        return F

    def scores(self, X) -> np.ndarray:
        """(n, n_outputs) rule sums plus bias, accumulated in rule order."""
        X = self._check(X)
        S = np.zeros((X.shape[0], self.task.n_outputs))
        for r in self.rules:
            S += r.fires(X)[:, None] * np.asarray(r.weights)[None, :]
        return S + np.asarray(self.bias)

    def predict(self, X) -> np.ndarray:
        mean, std = self.standardization
        return scores_to_predictions(self.scores(X), self.task, mean, std)

    def decision_scores(self, X) -> np.ndarray:
        S = self.scores(X)
        return S[:, 0] if self.task.n_outputs == 1 else S

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        need = max((max(r.formula.input_indices) for r in self.rules if r.formula.k), default=-1) + 1
        if X.shape[1] < need or (self.input_bits is not None and X.shape[1] != self.input_bits):
            raise ShapeError(f"input has {X.shape[1]} bits; rule set expects "
                             f"{self.input_bits if self.input_bits is not None else need}")
        return X

    def bit_name(self, bit: int) -> str:
        if self.map is not None:
            return self.map.bit_names[bit]
        return f"x{bit}"

    def compile(self) -> tuple[BddStore, list]:
        """Shared ROBDD store and one root ref per rule."""
        store = BddStore()
        return store, [build_from_dnf(store, r.formula) for r in self.rules]


def predict(ruleset: RuleSet, input_bits):
    x = np.asarray(input_bits)
    out = ruleset.predict(x)
    return out[0] if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# Optimization


@dataclass
class OptimizationReport:
    corr_threshold: float
    counts: dict = field(default_factory=dict)
    train_agreement: float | None = None
    merged: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"corr_threshold": self.corr_threshold, "counts": dict(self.counts),
                "train_agreement": self.train_agreement, "merged": list(self.merged)}


def _round_if_ternary(values, ternary):
    values = np.asarray(values, dtype=np.float64)
    return np.round(values) if ternary else values


def optimize_ruleset(ruleset: RuleSet, train=None, corr_threshold: float = 1.0):
    """Shrink the rule set; returns ``(optimized, report)``.

    Passes, in order: constant folding, merging rules that compute the same
    function, merging rules that compute complementary functions, and (only
    for ``corr_threshold < 1``) pruning of correlated firing vectors on
    ``train``.  The first three passes preserve scores on every input.
    """
    if not 0.0 < corr_threshold <= 1.0:
        raise ParameterError("corr_threshold must lie in (0, 1]")
    ternary = ruleset.head_mode == "ternary"
    report = OptimizationReport(corr_threshold)
    report.counts["initial"] = len(ruleset.rules)
    bias = np.array(ruleset.bias, dtype=np.float64)
    store, refs = ruleset.compile()

    # constant folding, decided on the formula over its whole domain
    items = []
    for rule, ref in zip(ruleset.rules, refs):
        if ref == store.true:
            bias += np.asarray(rule.weights)
            report.merged.append({"pass": "constant", "rule": rule.name, "value": 1})
        elif ref == store.false:
            report.merged.append({"pass": "constant", "rule": rule.name, "value": 0})
        else:
            items.append([rule, ref, np.array(rule.weights, dtype=np.float64)])
    report.counts["after_constant_fold"] = len(items)

    # same function (ref equality is function equality in a shared store)
    by_ref = {}
    merged_items = []
    for it in items:
        first = by_ref.get(it[1])
        if first is None:
            by_ref[it[1]] = it
            merged_items.append(it)
        else:
            first[2] = first[2] + it[2]
            report.merged.append({"pass": "exact", "rule": it[0].name, "into": first[0].name})
    items = [it for it in merged_items if np.any(it[2] != 0)]
    report.counts["after_exact_merge"] = len(items)

    # complementary functions: w_a*f + w_b*(1-f) = (w_a - w_b)*f + w_b
    position = {it[1]: i for i, it in enumerate(items)}
    dead = set()
    for i, it in enumerate(items):
        if i in dead:
            continue
        j = position.get(store.negate(it[1]))
        if j is None or j in dead or j == i:
            continue
        other = items[j]
        if j < i:
            continue
        it[2] = it[2] - other[2]
        bias += other[2]
        dead.add(j)
        report.merged.append({"pass": "complement", "rule": other[0].name, "into": it[0].name})
    items = [it for i, it in enumerate(items) if i not in dead and np.any(it[2] != 0)]
    report.counts["after_complement_merge"] = len(items)

    if corr_threshold < 1.0 and train is not None and items:
        X = train.bits if hasattr(train, "bits") else np.asarray(train)
        before = _assemble(ruleset, items, bias).predict(X)
        items, bias = _prune_correlated(items, bias, X, corr_threshold, ternary, report)
        after = _assemble(ruleset, items, bias).predict(X)
        report.train_agreement = _agreement(before, after, ruleset.task)
    report.counts["after_correlation"] = len(items)
    return _assemble(ruleset, items, bias), report


def _assemble(ruleset: RuleSet, items, bias) -> RuleSet:
    rules = [Rule(it[0].name, it[0].formula, tuple(float(w) for w in it[2])) for it in items]
    return RuleSet(rules, tuple(float(b) for b in bias), ruleset.task, ruleset.map,
                   ruleset.standardization, ruleset.head_mode)


def _prune_correlated(items, bias, X, threshold, ternary, report):
    F = np.stack([it[0].formula.evaluate(X) for it in items], axis=1).astype(np.float64)
    Fc = F - F.mean(axis=0)
    norms = np.sqrt((Fc * Fc).sum(axis=0))
    alive = [True] * len(items)
    bias = bias.copy()
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if not (alive[i] and alive[j]) or norms[i] == 0 or norms[j] == 0:
                continue
            corr = float(Fc[:, i] @ Fc[:, j] / (norms[i] * norms[j]))
            if abs(corr) < threshold:
                continue
            wi, wj = np.abs(items[i][2]).max(), np.abs(items[j][2]).max()
            s, d = (i, j) if wi >= wj else (j, i)
            # least squares for survivor weight and an intercept folded into the bias
            target = F[:, [s]] * items[s][2][None, :] + F[:, [d]] * items[d][2][None, :]
            design = np.column_stack([F[:, s], np.ones(len(F))])
            coef = np.linalg.lstsq(design, target, rcond=None)[0]
            items[s][2] = _round_if_ternary(coef[0], ternary)
            bias += _round_if_ternary(coef[1], ternary)
            alive[d] = False
            report.merged.append({"pass": "correlation", "rule": items[d][0].name,
                                  "into": items[s][0].name, "corr": corr})
    return [it for it, a in zip(items, alive) if a and np.any(it[2] != 0)], bias


# ---------------------------------------------------------------------------
# Exactness


@dataclass
class AgreementReport:
    n_rows: int
    agreement: float
    max_score_diff: float
    zero_rows: bool = False
    disagreeing_rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"n_rows": self.n_rows, "agreement": self.agreement,
                "max_score_diff": self.max_score_diff, "zero_rows": self.zero_rows}


def _agreement(a, b, task: Task) -> float:
    if len(a) == 0:
        return 1.0
    if task.kind == "regression":
        same = np.abs(a - b) <= 1e-9 * np.maximum(1.0, np.abs(a))
    else:
        same = a == b
    return float(np.mean(same))


def verify_exactness(ruleset: RuleSet, model, data) -> AgreementReport:
    """Compare rule-set and network predictions and scores on ``data`` rows."""
    X = data.bits if hasattr(data, "bits") else np.asarray(data)
    if X.ndim != 2 or X.shape[1] != model.input_bits:
        raise ShapeError(f"data has shape {X.shape}, model expects {model.input_bits} bits")
    if len(X) == 0:
        return AgreementReport(0, 1.0, 0.0, zero_rows=True)
    s_rules = ruleset.scores(X)
    s_model = model.scores(X)
    mean, std = ruleset.standardization
    p_rules = scores_to_predictions(s_rules, ruleset.task, mean, std)
    p_model = model.predict(X)
    if ruleset.task.kind == "regression":
        same = np.abs(p_rules - p_model) <= 1e-9 * np.maximum(1.0, np.abs(p_model))
    else:
        same = p_rules == p_model
    return AgreementReport(len(X), float(np.mean(same)), float(np.max(np.abs(s_rules - s_model))),
                           disagreeing_rows=np.flatnonzero(~same)[:20].tolist())


def exhaustive_inputs(total_bits: int) -> np.ndarray:
    """All 2**total_bits input vectors (bit j of row r is r's bit j)."""
    if total_bits > 20:
        raise ParameterError("exhaustive enumeration limited to 20 bits")
    r = np.arange(1 << total_bits)
    return ((r[:, None] >> np.arange(total_bits)[None, :]) & 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# Serialization and text export


def _digest(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def ruleset_to_dict(ruleset: RuleSet, extra: dict | None = None) -> dict:
    payload = {
        "format": "ttrules-ruleset",
        "version": RULESET_FORMAT_VERSION,
        "task": ruleset.task.to_str(),
        "head_mode": ruleset.head_mode,
        "bias": list(ruleset.bias),
        "standardization": {"mean": ruleset.standardization[0], "std": ruleset.standardization[1]},
        "rules": [
            {"name": r.name, "indices": list(r.formula.input_indices),
             "bit_names": [ruleset.bit_name(b) for b in r.formula.input_indices],
             "cubes": r.formula.cube_strings(), "weights": list(r.weights)}
            for r in ruleset.rules],
        "binarizer": ruleset.map.to_dict() if ruleset.map is not None else None,
    }
    if extra:
        payload.update(extra)
    return {**payload, "sha256": _digest(payload)}


def ruleset_from_dict(d: dict) -> RuleSet:
    d = dict(d)
    if d.pop("sha256", None) != _digest(d):
        raise IntegrityError("rule set checksum mismatch")
    if d.get("format") != "ttrules-ruleset":
        raise IntegrityError("not a rule set file")
    rules = [Rule(r["name"], DnfFormula.from_strings(r["indices"], r["cubes"]),
                  tuple(float(w) for w in r["weights"])) for r in d["rules"]]
    map = BinarizerMap.from_dict(d["binarizer"]) if d.get("binarizer") else None
    st = d["standardization"]
    return RuleSet(rules, tuple(float(b) for b in d["bias"]), Task.parse(d["task"]), map,
                   (float(st["mean"]), float(st["std"])), d["head_mode"])


def save_ruleset(ruleset: RuleSet, path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ruleset_to_dict(ruleset, extra), fh, indent=1, ensure_ascii=False)
        fh.write("\n")


def load_ruleset(path) -> RuleSet:
    with open(path, encoding="utf-8") as fh:
        return ruleset_from_dict(json.load(fh))


def _fmt_weight(w: float, ternary: bool) -> str:
    if ternary and float(w).is_integer():
        return f"{int(w):+d}"
    return f"{w:+.6g}"


def rule_to_text(ruleset: RuleSet, rule: Rule) -> str:
    ternary = ruleset.head_mode == "ternary"
    weight = ", ".join(_fmt_weight(w, ternary) for w in rule.weights)
    terms = []
    for cube in rule.formula.cubes:
        lits = []
        for j, v in cube.literals():
            name = ruleset.bit_name(rule.formula.input_indices[j])
            lits.append(name if v else f"NOT({name})")
        terms.append(" AND ".join(lits) if lits else "TRUE")
    if not terms:
        body = "FALSE"
    elif len(terms) == 1:
        body = terms[0]
    else:
        body = " OR ".join(f"({t})" for t in terms)
    return f"({weight}) IF {body}"


def ruleset_to_text(ruleset: RuleSet) -> str:
    return "".join(rule_to_text(ruleset, r) + "\n" for r in ruleset.rules)
