"""``ttrules`` command line: train / extract / eval / export."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bdd import BddStore, build_from_dnf, ruleset_to_dot, to_dot
from .config import PipelineConfig, load_config
from .data import BinarizerMap, binarize, class_labels, fit_binarizer, kfold_indices, load_csv, load_schema
from .errors import (CategoryError, ConfigError, ExactnessError, IntegrityError, ParseError,
                     SchemaError, StratificationError, TaskMismatchError, TTRulesError)
from .evaluation import METRIC_NAMES, cross_validate
from .extract import extract_rules
from .net import build_model, load_model, save_model, ternarize_head, train, validation_metric
from .rules import load_ruleset, optimize_ruleset, ruleset_to_text, save_ruleset, verify_exactness
from .task import Task

logger = logging.getLogger("ttrules")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_EXACTNESS = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, ensure_ascii=False, sort_keys=True) + "\n",
                    encoding="utf-8")


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "ternary_head", False):
        changes["head"] = "ternary"
    if getattr(args, "corr_threshold", None) is not None:
        changes["corr_threshold"] = args.corr_threshold
    if getattr(args, "unseen_dontcare", False):
        changes["dont_care"] = dataclasses.replace(cfg.dont_care, unseen=True)
    if getattr(args, "out", None) is not None:
        changes["out"] = args.out
    cfg = cfg.replace(**changes) if changes else cfg
    for key in ("data", "schema"):
        if getattr(cfg, key) is None:
            raise ConfigError(f"config is missing {key!r}")
    return cfg


def _load_inputs(cfg: PipelineConfig):
    if not Path(cfg.schema).is_file():
        raise ConfigError(f"schema file not found: {cfg.schema}")
    schema = load_schema(cfg.schema)
    if cfg.task is not None and Task.parse(cfg.task) != schema.task:
        raise TaskMismatchError(f"config task {cfg.task} does not match schema task {schema.task}")
    for path in (cfg.data, cfg.test_data):
        if path is not None and not Path(path).is_file():
            raise CliError(f"data file not found: {path}", EXIT_DATA)
    raw = load_csv(cfg.data, schema.features, schema.target)
    raw_test = load_csv(cfg.test_data, schema.features, schema.target) if cfg.test_data else None
    classes = (schema.classes or class_labels(raw)) if schema.task.is_classification else None
    return schema, raw, raw_test, classes


def _provenance(cfg: PipelineConfig) -> dict:
    return {"config": cfg.to_dict(), "config_hash": cfg.digest(), "seed": cfg.seed,
            "tool_version": __version__}


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    schema, raw, _, classes = _load_inputs(cfg)
    bmap = fit_binarizer(raw, schema.features)
    ds = binarize(raw, bmap, schema.task, classes)
    fit_ds, val_ds = ds, ds
    if cfg.val_fraction > 0:
        try:
            fit_idx, val_idx = kfold_indices(ds.labels, ds.task, max(2, round(1 / cfg.val_fraction)),
                                             cfg.seed)[0]
            fit_ds, val_ds = ds.take(fit_idx), ds.take(val_idx)
        except StratificationError:
            pass
    a = cfg.architecture
    model = build_model(bmap.total_bits, a.n_filters, a.k, a.hidden_width, schema.task, cfg.seed)
    model = train(model, fit_ds, val_ds, cfg.train_params())
    if cfg.head == "ternary":
        model = ternarize_head(model, val_ds, cfg.max_rel_drop)
    out = _out_dir(cfg)
    prov = _provenance(cfg)
    save_model(model, out / "model.json",
               extra={"provenance": prov, "binarizer": bmap.to_dict(), "classes": classes})
    _write_json(out / "binarizer.json", {**bmap.to_dict(), "provenance": prov})
    metric = validation_metric(model, val_ds)
    name = METRIC_NAMES[schema.task.kind]
    value = -metric if schema.task.kind == "regression" else metric
    print(f"val_{name.lower()}={value:.6f} filters={model.n_filters} head={model.head.mode}")
    print(f"model written to {out / 'model.json'}")
    return EXIT_OK


def cmd_extract(args) -> int:
    path = Path(args.model)
    if not path.is_file():
        raise CliError(f"model file not found: {path}", EXIT_DATA)
    model = load_model(path)
    with open(path, encoding="utf-8") as fh:
        stored = json.load(fh)
    prov = stored.get("provenance")
    if prov is None:
        raise IntegrityError("model file carries no provenance; cannot locate its training data")
    cfg = PipelineConfig.from_dict(prov["config"])
    changes = {}
    if args.corr_threshold is not None:
        changes["corr_threshold"] = args.corr_threshold
    if args.unseen_dontcare:
        changes["dont_care"] = dataclasses.replace(cfg.dont_care, unseen=True)
    changes["out"] = args.out if args.out is not None else str(path.parent)
    cfg = cfg.replace(**changes)
    schema, raw, raw_test, _ = _load_inputs(cfg)
    bmap = BinarizerMap.from_dict(stored["binarizer"])
    classes = stored.get("classes")
    ds = binarize(raw, bmap, schema.task, classes)

    rs = extract_rules(model, bmap, ds.bits, unseen_dontcare=cfg.dont_care.unseen,
                       encoding_dontcare=cfg.dont_care.encoding, jobs=args.jobs)
    rs_opt, report = optimize_ruleset(rs, ds, cfg.corr_threshold)
    checks = {"train": verify_exactness(rs_opt, model, ds)}
    if raw_test is not None:
        checks["test"] = verify_exactness(rs_opt, model, binarize(raw_test, bmap, schema.task, classes))

    out = _out_dir(cfg)
    prov = _provenance(cfg)
    save_ruleset(rs_opt, out / "ruleset.json", extra={"provenance": prov})
    _write_json(out / "report.json", {"optimization": report.to_dict(),
                                      "exactness": {k: v.to_dict() for k, v in checks.items()},
                                      "provenance": prov})
    c = report.counts
    print(f"rules_extracted={c['initial']} rules_after_optimization={len(rs_opt)}")
    print("passes: " + " ".join(f"{k}={v}" for k, v in c.items()))
    if report.train_agreement is not None:
        print(f"train_agreement_after_pruning={report.train_agreement:.6f}")
    agreement = min(v.agreement for v in checks.values())
    print(f"agreement={agreement:.6f} max_score_diff={max(v.max_score_diff for v in checks.values()):.3e}")
    if cfg.lossless and agreement < 1.0:
        print("exactness verification failed", file=sys.stderr)
        return EXIT_EXACTNESS
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    schema, raw, _, _ = _load_inputs(cfg)
    summary = cross_validate(cfg, schema, raw, k=cfg.folds, seed=cfg.seed, jobs=args.jobs)
    out = _out_dir(cfg)
    _write_json(out / "cv_results.json", {**summary.to_dict(with_timings=False),
                                          "provenance": _provenance(cfg)})
    _write_json(out / "cv_timings.json", {"seconds": summary.seconds, "provenance": _provenance(cfg)})
    row = summary.table_row()
    (out / "cv_table.txt").write_text(row + "\n", encoding="utf-8")
    print(row)
    return EXIT_OK


def cmd_export(args) -> int:
    path = Path(args.ruleset)
    if not path.is_file():
        raise CliError(f"rule set file not found: {path}", EXIT_DATA)
    rs = load_ruleset(path)
    with open(path, encoding="utf-8") as fh:
        prov = json.load(fh).get("provenance") or {}
    stamp = f"// config_hash={prov.get('config_hash')} seed={prov.get('seed')}\n" if prov else ""
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    names = rs.map.bit_names if rs.map is not None else None
    if args.text:
        text = ruleset_to_text(rs)
        (out / "rules.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
    if args.dot:
        store = BddStore()
        refs = [build_from_dnf(store, r.formula) for r in rs.rules]
        for r, ref in zip(rs.rules, refs):
            (out / f"{r.name}.dot").write_text(stamp + to_dot(store, ref, names, title=r.name),
                                               encoding="utf-8")
        (out / "rules.dot").write_text(
            stamp + ruleset_to_dot(store, [(r.name, ref) for r, ref in zip(rs.rules, refs)], names),
            encoding="utf-8")
        print(f"wrote {len(rs.rules)} DOT files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttrules", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="binarize data and train a truth-table network")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--ternary-head", action="store_true")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    x = sub.add_parser("extract", help="extract, optimize and verify rules from a model")
    x.add_argument("--model", required=True)
    x.add_argument("--corr-threshold", type=float)
    x.add_argument("--unseen-dontcare", action="store_true")
    x.add_argument("--jobs", type=int, default=1)
    x.add_argument("--out")
    x.set_defaults(func=cmd_extract)

    e = sub.add_parser("eval", help="k-fold cross-validation of the rule model")
    e.add_argument("--config", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--corr-threshold", type=float)
    e.add_argument("--unseen-dontcare", action="store_true")
    e.add_argument("--ternary-head", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("export", help="write rules as text or DOT diagrams")
    o.add_argument("--ruleset", required=True)
    fmt = o.add_mutually_exclusive_group(required=True)
    fmt.add_argument("--dot", action="store_true")
    fmt.add_argument("--text", action="store_true")
    o.add_argument("--out")
    o.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SchemaError, TaskMismatchError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExactnessError as exc:
        print(f"exactness error: {exc}", file=sys.stderr)
        return EXIT_EXACTNESS
    except (ParseError, CategoryError, StratificationError, IntegrityError, TTRulesError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
