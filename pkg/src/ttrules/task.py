from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class Task:
    """Learning task kind: ``binary``, ``multiclass`` or ``regression``."""

    kind: str
    n_classes: int | None = None

    def __post_init__(self):
        if self.kind not in ("binary", "multiclass", "regression"):
            raise ParameterError(f"unknown task kind {self.kind!r}")
        if self.kind == "binary" and self.n_classes not in (None, 2):
            raise ParameterError("binary task has exactly 2 classes")
        if self.kind == "multiclass" and (self.n_classes is None or self.n_classes < 2):
            raise ParameterError("multiclass task needs n_classes >= 2")
        if self.kind == "regression" and self.n_classes is not None:
            raise ParameterError("regression task has no classes")
        if self.kind == "binary" and self.n_classes is None:
            object.__setattr__(self, "n_classes", 2)

    @property
    def is_classification(self) -> bool:
        return self.kind != "regression"

    @property
    def n_outputs(self) -> int:
        return self.n_classes if self.kind == "multiclass" else 1

    def to_str(self) -> str:
        if self.kind == "multiclass":
            return f"multiclass:{self.n_classes}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "Task":
        if text.startswith("multiclass"):
            _, _, n = text.partition(":")
            if not n:
                raise ParameterError("multiclass task must be written 'multiclass:N'")
            return cls("multiclass", int(n))
        return cls(text)

    def __str__(self):
        return self.to_str()
