"""Truth-table networks compiled to exact, optimized Boolean rule sets."""

from .bdd import BddStore, apply, bdd_eval, build_from_dnf, check_equivalence, to_dot
from .data import (BinarizedDataset, BinarizerMap, FeatureSpec, RawDataset, Schema, binarize,
                   fit_binarizer, kfold_split, load_csv, load_schema)
from .evaluation import CvSummary, accuracy, auc, cross_validate, rmse, run_pipeline
from .extract import enumerate_truth_table, extract_rules, inject_dont_cares
from .logic import Cube, DnfFormula, TruthTable, minimize_qm
from .net import (LinearHead, TrainParams, TTnetModel, build_model, filter_forward, forward,
                  ternarize_head, train)
from .rules import Rule, RuleSet, optimize_ruleset, predict, rule_eval, verify_exactness
from .task import Task

__version__ = "0.1.0"

__all__ = [
    "accuracy", "apply", "auc", "bdd_eval", "BddStore", "binarize", "BinarizedDataset",
    "BinarizerMap", "build_from_dnf", "build_model", "check_equivalence", "cross_validate", "Cube",
    "CvSummary", "DnfFormula", "enumerate_truth_table", "extract_rules", "FeatureSpec",
    "filter_forward", "fit_binarizer", "forward", "inject_dont_cares", "kfold_split", "LinearHead",
    "load_csv", "load_schema", "minimize_qm", "optimize_ruleset", "predict", "RawDataset", "rmse",
    "Rule", "rule_eval", "RuleSet", "run_pipeline", "Schema", "Task", "ternarize_head", "to_dot",
    "train", "TrainParams", "TruthTable", "TTnetModel", "verify_exactness",
]
