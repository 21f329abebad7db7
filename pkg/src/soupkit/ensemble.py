"""Stacking baseline and an inference-cost benchmark against souped models.

A stack of N members needs N member forwards plus one meta-classifier
forward per item; a souped master needs one. The benchmark counts forward
calls as they happen rather than deriving them from N.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from soupkit.checkpoint import Checkpoint
from soupkit.entities import GazetteerSet
from soupkit.errors import DomainError
from soupkit.evaluation import check_compatible, probabilities
from soupkit.soup import check_signatures
from soupkit.trainer import THRESHOLD, EncodedSplit, ModelSpec, TrainConfig, encode, encode_split, fit, forward, to_matrix

ForwardFn = Callable[[Mapping[str, np.ndarray], Mapping[int, float], ModelSpec], float]


def meta_spec(n_members: int) -> ModelSpec:
    """Logistic regression over ``n_members`` probabilities."""
    return ModelSpec(kind="text_linear", feature_dim=n_members)


@dataclass
class SingleModel:
    """A plain or souped checkpoint used on its own: one forward per item."""

    checkpoint: Checkpoint
    name: str = "single"

    def predict(self, features, spec: ModelSpec, forward_fn: ForwardFn = forward) -> int:
        return int(forward_fn(self.checkpoint.tensors, features, spec) >= THRESHOLD)


@dataclass
class StackedEnsemble:
    members: list[Checkpoint]
    meta_params: dict[str, np.ndarray]
    name: str = "stacking"

    def __post_init__(self):
        if self.meta_params["linear.weight"].shape != (len(self.members),):
            raise DomainError("meta input dimension must equal the number of members")

    @property
    def meta_spec(self) -> ModelSpec:
        return meta_spec(len(self.members))

    def predict(self, features, spec: ModelSpec, forward_fn: ForwardFn = forward) -> int:
        probs = {i: forward_fn(m.tensors, features, spec) for i, m in enumerate(self.members)}
        return int(forward_fn(self.meta_params, probs, self.meta_spec) >= THRESHOLD)


def _member_features(members, split: EncodedSplit, spec: ModelSpec) -> EncodedSplit:
    P = np.column_stack([probabilities(m, split, spec) for m in members])
    return EncodedSplit(to_matrix([dict(enumerate(row)) for row in P], len(members)), split.y)


def train_stacking(members: Sequence[Checkpoint], dev, spec: ModelSpec, config: TrainConfig,
                   gazetteers: GazetteerSet | None = None) -> StackedEnsemble:
    """Fit the meta logistic regression on member dev probabilities.

    The meta model starts as a mean-probability vote (equal weights, bias
    placing the boundary at mean probability 0.5) and is refined with Adam.
    """
    if len(members) < 2:
        raise DomainError("stacking needs at least two members")
    check_signatures(members)
    for m in members:
        check_compatible(m, spec)
    items = dev["dev"] if hasattr(dev, "splits") else list(dev)
    if not items:
        raise DomainError("dev data must be non-empty")
    feats = _member_features(members, encode_split(items, spec, gazetteers), spec)
    n = len(members)
    init = {"linear.weight": np.full(n, 4.0 / n), "linear.bias": np.array([-2.0])}
    result = fit(feats, feats, meta_spec(n), config, init=init)
    meta = {k: v.astype(np.float32) for k, v in result.params.items()}
    return StackedEnsemble(list(members), meta)


class _CountingForward:
    def __init__(self):
        self.calls = 0

    def __call__(self, params, features, spec):
        self.calls += 1
        return forward(params, features, spec)


def predict_stacked(ensemble: StackedEnsemble, sentence, spec: ModelSpec,
                    gazetteers: GazetteerSet | None = None) -> tuple[int, int]:
    """(label, forwards used) for one sentence (text or LabeledSentence)."""
    text = getattr(sentence, "text", sentence)
    counter = _CountingForward()
    label = ensemble.predict(encode(text, spec, gazetteers), spec, counter)
    return label, counter.calls


def predict_single(model: SingleModel | Checkpoint, sentence, spec: ModelSpec,
                   gazetteers: GazetteerSet | None = None) -> tuple[int, int]:
    if isinstance(model, Checkpoint):
        model = SingleModel(model)
    text = getattr(sentence, "text", sentence)
    counter = _CountingForward()
    label = model.predict(encode(text, spec, gazetteers), spec, counter)
    return label, counter.calls


@dataclass
class SystemResult:
    name: str
    forwards: int
    wall_time_ns: int
    items: int
    predictions: list[int] = field(default_factory=list, repr=False)


@dataclass
class BenchReport:
    systems: list[SystemResult]

    def __getitem__(self, name: str) -> SystemResult:
        for s in self.systems:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"systems": [{k: v for k, v in asdict(s).items() if k != "predictions"} for s in self.systems]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def bench_inference(systems: Sequence, data, spec: ModelSpec, gazetteers: GazetteerSet | None = None,
                    parallel: bool = False, workers: int = 4) -> BenchReport:
    """Run every system over the same items, counting forwards and wall time.

    ``systems`` holds :class:`SingleModel`, :class:`StackedEnsemble` or bare
    checkpoints. Timing includes featurization. With ``parallel=True`` items
    are scored on a thread pool; counts are unaffected, timings are not
    comparable with the sequential mode.
    """
    items = list(data)
    if not items:
        raise DomainError("benchmark data must be non-empty")
    results = []
    for k, system in enumerate(systems):
        if isinstance(system, Checkpoint):
            system = SingleModel(system, name=f"model{k}")

        def run(item, system=system):
            counter = _CountingForward()
            label = system.predict(encode(getattr(item, "text", item), spec, gazetteers), spec, counter)
            return label, counter.calls

        start = time.perf_counter_ns()
        if parallel:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(run, items))
        else:
            outcomes = [run(item) for item in items]
        elapsed = time.perf_counter_ns() - start
        results.append(SystemResult(system.name, sum(c for _, c in outcomes), elapsed, len(items),
                                    [lab for lab, _ in outcomes]))
    return BenchReport(results)
