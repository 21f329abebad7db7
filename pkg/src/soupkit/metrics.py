"""Binary confusion counts and accuracy / precision / recall / F1.

Label 1 (check-worthy) is the positive class. Ratios with a zero
denominator are reported as 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

from soupkit.errors import DomainError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def confusion(predictions: Sequence[int], golds: Sequence[int]) -> ConfusionCounts:
    if len(predictions) != len(golds):
        raise DomainError(f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise DomainError("cannot score an empty prediction list")
    tp = fp = fn = tn = 0
    for p, g in zip(predictions, golds):
        if p not in (0, 1) or g not in (0, 1):
            raise DomainError(f"labels must be 0 or 1, got prediction {p!r} / gold {g!r}")
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics(c: ConfusionCounts) -> Metrics:
    if c.total < 1:
        raise DomainError("metrics need at least one evaluated item")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics((c.tp + c.tn) / c.total, precision, recall, f1)


def metrics_report(c: ConfusionCounts, split: str, model: str) -> dict:
    m = metrics(c)
    return {
        "split": split,
        "model": model,
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "confusion": asdict(c),
    }
