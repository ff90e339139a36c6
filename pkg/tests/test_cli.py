import json

import pydot
import pytest

from conftest import BC_CONFIG_DIR
from ttrules.cli import main


@pytest.fixture
def cfg_path(tmp_path):
    cfg = json.loads((BC_CONFIG_DIR / "config.json").read_text())
    cfg["data"] = str(BC_CONFIG_DIR / cfg["data"])
    cfg["schema"] = str(BC_CONFIG_DIR / cfg["schema"])
    cfg["training"]["epochs"] = 6
    cfg["architecture"]["n_filters"] = 12
    cfg["folds"] = 3
    cfg["out"] = str(tmp_path / "run")
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_train_writes_model(cfg_path, tmp_path, capsys):
    code, out, _ = run(["train", "--config", cfg_path], capsys)
    assert code == 0
    assert (tmp_path / "run" / "model.json").is_file()
    assert (tmp_path / "run" / "binarizer.json").is_file()
    assert "val_auc=" in out
    stored = json.loads((tmp_path / "run" / "model.json").read_text())
    assert stored["provenance"]["seed"] == 0 and len(stored["provenance"]["config_hash"]) == 16


def test_missing_schema_names_path(cfg_path, tmp_path, capsys):
    cfg = json.loads(cfg_path.read_text())
    cfg["schema"] = str(tmp_path / "nowhere" / "schema.json")
    cfg_path.write_text(json.dumps(cfg))
    code, _, err = run(["train", "--config", cfg_path], capsys)
    assert code == 2
    assert str(tmp_path / "nowhere" / "schema.json") in err


def test_unknown_config_key(cfg_path, capsys):
    cfg = json.loads(cfg_path.read_text())
    cfg["learning_rate"] = 0.1
    cfg_path.write_text(json.dumps(cfg))
    assert run(["train", "--config", cfg_path], capsys)[0] == 2


def test_seed_reproduces_bytes(cfg_path, tmp_path, capsys):
    blobs = []
    for _ in range(2):
        assert run(["train", "--config", cfg_path, "--seed", 7], capsys)[0] == 0
        blobs.append((tmp_path / "run" / "model.json").read_bytes())
    assert blobs[0] == blobs[1]
    assert json.loads(blobs[0])["provenance"]["seed"] == 7


@pytest.fixture
def trained_dir(cfg_path, tmp_path, capsys):
    assert run(["train", "--config", cfg_path], capsys)[0] == 0
    return tmp_path / "run"


def test_extract_reports_exact_agreement(trained_dir, capsys):
    code, out, _ = run(["extract", "--model", trained_dir / "model.json"], capsys)
    assert code == 0
    assert "agreement=1.000000" in out
    assert "rules_extracted=12" in out
    report = json.loads((trained_dir / "report.json").read_text())
    assert report["exactness"]["train"]["agreement"] == 1.0
    c = report["optimization"]["counts"]
    counts = [c[k] for k in ("initial", "after_constant_fold", "after_exact_merge",
                             "after_complement_merge", "after_correlation")]
    assert counts == sorted(counts, reverse=True)


def test_extract_is_reproducible(trained_dir, capsys):
    blobs = []
    for _ in range(2):
        assert run(["extract", "--model", trained_dir / "model.json"], capsys)[0] == 0
        blobs.append((trained_dir / "ruleset.json").read_bytes() + (trained_dir / "report.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_lossy_pruning_reports_train_agreement(trained_dir, capsys):
    code, out, _ = run(["extract", "--model", trained_dir / "model.json", "--corr-threshold", 0.95], capsys)
    assert code == 0
    assert "train_agreement_after_pruning=" in out
    report = json.loads((trained_dir / "report.json").read_text())
    assert report["optimization"]["train_agreement"] is not None


def test_tampered_model_refused(trained_dir, capsys):
    path = trained_dir / "model.json"
    d = json.loads(path.read_text())
    d["filters"][0]["b2"] += 1.0
    path.write_text(json.dumps(d))
    code, _, err = run(["extract", "--model", path], capsys)
    assert code == 3
    assert "checksum" in err


def test_export_text_and_dot(trained_dir, capsys):
    assert run(["extract", "--model", trained_dir / "model.json"], capsys)[0] == 0
    ruleset = json.loads((trained_dir / "ruleset.json").read_text())
    n_rules = len(ruleset["rules"])
    code, out, _ = run(["export", "--ruleset", trained_dir / "ruleset.json", "--text"], capsys)
    assert code == 0
    lines = (trained_dir / "rules.txt").read_text().splitlines()
    assert len(lines) == n_rules == len(out.splitlines())
    assert all(" IF " in ln for ln in lines)
    dot_dir = trained_dir / "dot"
    assert run(["export", "--ruleset", trained_dir / "ruleset.json", "--dot", "--out", dot_dir], capsys)[0] == 0
    files = sorted(dot_dir.glob("*.dot"))
    assert len(files) == n_rules + 1
    for f in files:
        text = f.read_text(encoding="utf-8")
        assert "config_hash=" in text
        assert pydot.graph_from_dot_data(text)


def test_eval_writes_table(cfg_path, tmp_path, capsys):
    code, out, _ = run(["eval", "--config", cfg_path], capsys)
    assert code == 0
    assert "AUC" in out and "±" in out
    res = json.loads((tmp_path / "run" / "cv_results.json").read_text())
    assert len(res["per_fold"]) == 3
    assert all(a == 1.0 for a in res["agreement"])
    assert (tmp_path / "run" / "cv_table.txt").read_text().strip() == out.strip()


def test_eval_task_mismatch(cfg_path, capsys):
    cfg = json.loads(cfg_path.read_text())
    cfg["task"] = "regression"
    cfg_path.write_text(json.dumps(cfg))
    assert run(["eval", "--config", cfg_path], capsys)[0] == 2


def test_missing_data_file(cfg_path, tmp_path, capsys):
    cfg = json.loads(cfg_path.read_text())
    cfg["data"] = str(tmp_path / "absent.csv")
    cfg_path.write_text(json.dumps(cfg))
    code, _, err = run(["train", "--config", cfg_path], capsys)
    assert code == 3 and "absent.csv" in err
