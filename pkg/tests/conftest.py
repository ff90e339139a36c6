import csv
from pathlib import Path

import numpy as np
import pytest

from ttrules.data import BinarizedDataset, BinarizerMap, FeatureBits, load_schema
from ttrules.task import Task

DATA = Path(__file__).parent / "data"
ROOT = Path(__file__).parent.parent
BC_RAW = DATA / "breast-cancer-wisconsin.csv"
BC_CONFIG_DIR = ROOT / "configs" / "breast_cancer"


@pytest.fixture(scope="session")
def bc_clean_csv(tmp_path_factory):
    """The public Wisconsin file with the rows holding '?' removed."""
    path = tmp_path_factory.mktemp("bc") / "bc.csv"
    with open(BC_RAW, newline="") as src, open(path, "w", newline="") as dst:
        reader, writer = csv.reader(src), csv.writer(dst, lineterminator="\n")
        writer.writerow(next(reader))
        for row in reader:
            if "?" not in row:
                writer.writerow(row)
    return path


@pytest.fixture(scope="session")
def bc_schema():
    return load_schema(BC_CONFIG_DIR / "schema.json")


def binary_map(n):
    return BinarizerMap(tuple(FeatureBits(f"b{i}", "already-binary") for i in range(n)))


def random_dataset(n_samples, n_bits, task=Task("binary"), seed=0):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, (n_samples, n_bits)).astype(np.uint8)
    if task.kind == "regression":
        y = X[:, : min(3, n_bits)].sum(axis=1) + 0.1 * rng.normal(size=n_samples)
    elif task.kind == "multiclass":
        y = (X[:, 0] + 2 * X[:, 1]) % task.n_classes
    else:
        y = (X[:, 0] ^ X[:, 1 % n_bits]).astype(np.int64)
    return BinarizedDataset(X, np.asarray(y), task, binary_map(n_bits))


ACCEPTANCE = []


def record(number, title, passed, detail):
    """One line per acceptance criterion, echoed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
