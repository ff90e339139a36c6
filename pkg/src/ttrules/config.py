"""Pipeline configuration (JSON), validated up front."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .net import TrainParams
from .task import Task


@dataclass(frozen=True)
class Architecture:
    n_filters: int = 32
    k: int = 6
    hidden_width: int = 4


@dataclass(frozen=True)
class DontCare:
    encoding: bool = True
    unseen: bool = False


@dataclass(frozen=True)
class Training:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.05
    weight_decay: float = 1e-4
    l1_head: float = 1e-3
    momentum: float = 0.9


@dataclass(frozen=True)
class PipelineConfig:
    data: str | None = None
    schema: str | None = None
    test_data: str | None = None
    task: str | None = None
    architecture: Architecture = field(default_factory=Architecture)
    training: Training = field(default_factory=Training)
    head: str = "float"
    dont_care: DontCare = field(default_factory=DontCare)
    corr_threshold: float = 1.0
    seed: int = 0
    folds: int = 5
    val_fraction: float = 0.2
    max_rel_drop: float = 0.02
    out: str = "out"

    def __post_init__(self):
        if self.head not in ("float", "ternary"):
            raise ConfigError(f"head must be 'float' or 'ternary', got {self.head!r}")
        if not 0.0 < self.corr_threshold <= 1.0:
            raise ConfigError("corr_threshold must lie in (0, 1]")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.task is not None:
            try:
                Task.parse(self.task)
            except Exception as exc:
                raise ConfigError(str(exc)) from None
        a = self.architecture
        if a.n_filters < 1 or not 1 <= a.k <= 10 or a.hidden_width < 1:
            raise ConfigError("architecture needs n_filters >= 1, 1 <= k <= 10, hidden_width >= 1")
        if self.training.epochs < 0 or self.training.batch_size < 1:
            raise ConfigError("training needs epochs >= 0 and batch_size >= 1")

    @property
    def lossless(self) -> bool:
        return self.corr_threshold >= 1.0 and not self.dont_care.unseen

    def train_params(self) -> TrainParams:
        return TrainParams(seed=self.seed, **dataclasses.asdict(self.training))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of every setting except the output directory."""
        d = self.to_dict()
        d.pop("out")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        d = dict(d)
        nested = {"architecture": Architecture, "training": Training, "dont_care": DontCare}
        for key, typ in nested.items():
            if key in d:
                d[key] = _strict(typ, d[key], key)
        cfg = _strict(cls, d, "config")
        if base_dir is not None:
            fixed = {}
            for key in ("data", "schema", "test_data"):
                value = getattr(cfg, key)
                if value is not None and not Path(value).is_absolute():
                    fixed[key] = str(base_dir / value)
            cfg = dataclasses.replace(cfg, **fixed)
        return cfg


def _strict(typ, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(typ)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return typ(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return PipelineConfig.from_dict(d, base_dir=path.parent)
