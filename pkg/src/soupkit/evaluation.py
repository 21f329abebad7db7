"""Checkpoint-level evaluation: predictions, confusion counts and mean dev loss."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from soupkit.checkpoint import Checkpoint
from soupkit.data import LabeledSentence
from soupkit.entities import GazetteerSet
from soupkit.errors import CompatibilityError, DomainError
from soupkit.metrics import ConfusionCounts, confusion, metrics_report
from soupkit.trainer import THRESHOLD, EncodedSplit, ModelSpec, bce, encode_split, predict_proba


def check_compatible(ckpt: Checkpoint, spec: ModelSpec) -> None:
    if ckpt.signature.canonical != spec.signature().canonical:
        raise CompatibilityError(
            f"checkpoint architecture {ckpt.signature.canonical!r} does not match {spec.kind} "
            f"({spec.signature().canonical!r})"
        )


def _encoded(data, spec, gazetteers) -> EncodedSplit:
    if isinstance(data, EncodedSplit):
        split = data
    else:
        split = encode_split(list(data), spec, gazetteers)
    if len(split) == 0:
        raise DomainError("cannot evaluate on empty data")
    return split


def probabilities(ckpt: Checkpoint, data: Sequence[LabeledSentence] | EncodedSplit, spec: ModelSpec,
                  gazetteers: GazetteerSet | None = None) -> np.ndarray:
    check_compatible(ckpt, spec)
    return predict_proba(ckpt.tensors, _encoded(data, spec, gazetteers).X, spec)


def mean_loss(ckpt: Checkpoint, data: Sequence[LabeledSentence] | EncodedSplit, spec: ModelSpec,
              gazetteers: GazetteerSet | None = None) -> float:
    """Mean binary cross-entropy of ``ckpt`` over ``data``."""
    check_compatible(ckpt, spec)
    split = _encoded(data, spec, gazetteers)
    return bce(predict_proba(ckpt.tensors, split.X, spec), split.y)


def evaluate(ckpt: Checkpoint, data: Sequence[LabeledSentence] | EncodedSplit, spec: ModelSpec,
             gazetteers: GazetteerSet | None = None) -> ConfusionCounts:
    check_compatible(ckpt, spec)
    split = _encoded(data, spec, gazetteers)
    preds = (predict_proba(ckpt.tensors, split.X, spec) >= THRESHOLD).astype(int).tolist()
    return confusion(preds, split.y.astype(int).tolist())


def evaluation_report(ckpt: Checkpoint, data, spec: ModelSpec, gazetteers=None, split: str = "", model: str = "") -> dict:
    return metrics_report(evaluate(ckpt, data, spec, gazetteers), split, model)
