"""Seeded training of small binary classifiers with Adam and best-on-dev retention.

Three model kinds share one training loop:

``ner_logreg``
    logistic regression on the six parent-type entity counts,
    ``p = sigmoid(w . x + b)`` with ``w`` of length 6.
``text_linear``
    the same formula over hashed bag-of-words counts of length ``feature_dim``.
``text_mlp``
    ``p = sigmoid(w2 . tanh(W1 x + b1) + b2)`` with ``W1`` of shape
    ``(hidden_dim, feature_dim)``.

Everything is a pure function of (data, spec, config): initialization and
per-epoch shuffling draw from one SplitMix64 stream seeded by ``config.seed``.
"""
from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from soupkit._rng import SplitMix64, fnv1a64
from soupkit.checkpoint import Checkpoint, CheckpointMeta, arch_signature
from soupkit.data import Dataset, LabeledSentence
from soupkit.entities import GazetteerSet, count_features, extract_entities, substitute_tokens
from soupkit.errors import CompatibilityError, DomainError
from soupkit.metrics import confusion, metrics

KINDS = ("ner_logreg", "text_linear", "text_mlp")
PREPROCESS = ("raw", "ner_tokens")
NER_DIM = 6
PROB_CLAMP = 1e-7
INIT_SCALE = 0.05
THRESHOLD = 0.5


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "text_linear"
    feature_dim: int = 2**18
    hidden_dim: int = 64
    hash_seed: int = 0
    preprocess: str = "raw"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown model kind {self.kind!r}")
        if self.preprocess not in PREPROCESS:
            raise DomainError(f"unknown preprocess mode {self.preprocess!r}")
        if self.feature_dim < 1 or self.hidden_dim < 1:
            raise DomainError("feature_dim and hidden_dim must be positive")
        if not 0 <= self.hash_seed < 2**64:
            raise DomainError("hash_seed must be an unsigned 64-bit integer")

    @property
    def input_dim(self) -> int:
        return NER_DIM if self.kind == "ner_logreg" else self.feature_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "text_mlp":
            return {
                "hidden.weight": (self.hidden_dim, self.input_dim),
                "hidden.bias": (self.hidden_dim,),
                "out.weight": (self.hidden_dim,),
                "out.bias": (1,),
            }
        return {"linear.weight": (self.input_dim,), "linear.bias": (1,)}

    @property
    def spec_id(self) -> str:
        return (f"kind={self.kind};feature_dim={self.feature_dim};hidden_dim={self.hidden_dim};"
                f"hash_seed={self.hash_seed};preprocess={self.preprocess}")

    @classmethod
    def from_id(cls, spec_id: str) -> "ModelSpec":
        try:
            fields_ = dict(part.split("=", 1) for part in spec_id.split(";"))
            return cls(
                kind=fields_["kind"],
                feature_dim=int(fields_["feature_dim"]),
                hidden_dim=int(fields_["hidden_dim"]),
                hash_seed=int(fields_["hash_seed"]),
                preprocess=fields_["preprocess"],
            )
        except (KeyError, ValueError) as exc:
            raise DomainError(f"unparseable model spec id {spec_id!r}") from exc

    def signature(self):
        return arch_signature({n: np.empty(s, dtype=np.float32) for n, s in self.param_shapes().items()})


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0004
    epochs: int = 5
    batch_size: int = 24
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({n: np.zeros(p.shape) for n, p in params.items()}, {n: np.zeros(p.shape) for n, p in params.items()})


# -- features ---------------------------------------------------------------

_TOKEN_RE = re.compile(r"<(?:NUM|DATE|GPE|LOC|PER|ORG)>|[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; parent tokens such as ``<NUM>`` stay atomic."""
    return [tok if tok[0] == "<" else tok.lower() for tok in _TOKEN_RE.findall(text)]


@functools.lru_cache(maxsize=1 << 18)
def _token_hash(token: str, seed: int) -> int:
    return fnv1a64(token.encode("utf-8"), seed)


def featurize_text(text: str, spec: ModelSpec) -> dict[int, int]:
    features: dict[int, int] = {}
    for tok in tokenize(text):
        idx = _token_hash(tok, spec.hash_seed) % spec.feature_dim
        features[idx] = features.get(idx, 0) + 1
    return features


@functools.lru_cache(maxsize=1)
def _default_gazetteers() -> GazetteerSet:
    return GazetteerSet.default()


def encode(text: str, spec: ModelSpec, gazetteers: GazetteerSet | None = None) -> dict[int, int]:
    """Sparse model input for ``text`` under the spec's preprocessing.

    ``gazetteers=None`` uses the bundled default gazetteer.
    """
    gaz = _default_gazetteers() if gazetteers is None else gazetteers
    if spec.kind == "ner_logreg":
        return {i: c for i, c in enumerate(count_features(extract_entities(text, gaz))) if c}
    if spec.preprocess == "ner_tokens":
        text = substitute_tokens(text, extract_entities(text, gaz))
    return featurize_text(text, spec)


def to_matrix(rows: Sequence[Mapping[int, float]], dim: int) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for row in rows:
        for i in sorted(row):
            if not 0 <= i < dim:
                raise CompatibilityError(f"feature index {i} outside input dimension {dim}")
            indices.append(i)
            data.append(row[i])
        indptr.append(len(indices))
    return sp.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                          np.asarray(indptr, dtype=np.int64)), shape=(len(rows), dim))


@dataclass
class EncodedSplit:
    """Featurized sentences ready for batched forward passes."""

    X: sp.csr_matrix
    y: np.ndarray

    def __len__(self):
        return self.X.shape[0]


def encode_split(items: Sequence[LabeledSentence], spec: ModelSpec, gazetteers: GazetteerSet | None = None) -> EncodedSplit:
    X = to_matrix([encode(s.text, spec, gazetteers) for s in items], spec.input_dim)
    return EncodedSplit(X, np.array([s.label for s in items], dtype=np.float64))


# -- model ------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def check_params(params: Mapping[str, np.ndarray], spec: ModelSpec) -> None:
    shapes = {n: tuple(p.shape) for n, p in params.items()}
    if shapes != spec.param_shapes():
        raise CompatibilityError(f"parameters {shapes} do not match {spec.kind} shapes {spec.param_shapes()}")


def _f64(params):
    return {n: np.asarray(p, dtype=np.float64) for n, p in params.items()}


def _logits(params, X, spec, cache=None):
    if spec.kind == "text_mlp":
        h = np.tanh(X @ params["hidden.weight"].T + params["hidden.bias"])
        if cache is not None:
            cache["h"] = h
        return h @ params["out.weight"] + params["out.bias"][0]
    return X @ params["linear.weight"] + params["linear.bias"][0]


def predict_proba(params: Mapping[str, np.ndarray], X: sp.csr_matrix, spec: ModelSpec) -> np.ndarray:
    check_params(params, spec)
    if X.shape[1] != spec.input_dim:
        raise CompatibilityError(f"input dimension {X.shape[1]} != model dimension {spec.input_dim}")
    return _sigmoid(_logits(_f64(params), X, spec))


def forward(params: Mapping[str, np.ndarray], features: Mapping[int, float], spec: ModelSpec) -> float:
    """Probability of the positive class for one sparse input."""
    return float(predict_proba(params, to_matrix([features], spec.input_dim), spec)[0])


def bce(p: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(pc) + (1 - y) * np.log(1 - pc))))


def loss_and_grad(params: Mapping[str, np.ndarray], batch, spec: ModelSpec) -> tuple[float, dict[str, np.ndarray]]:
    """Mean BCE over ``batch`` and its exact gradient.

    ``batch`` is an :class:`EncodedSplit` or a list of ``(features, label)``.
    Items whose probability sits on the clamp contribute zero gradient.
    """
    if not isinstance(batch, EncodedSplit):
        batch = list(batch)
        if not batch:
            raise DomainError("empty batch")
        batch = EncodedSplit(to_matrix([f for f, _ in batch], spec.input_dim), np.array([y for _, y in batch], dtype=np.float64))
    if len(batch) == 0:
        raise DomainError("empty batch")
    check_params(params, spec)
    P = _f64(params)
    X, y = batch.X, batch.y
    cache: dict = {}
    z = _logits(P, X, spec, cache)
    p = _sigmoid(z)
    loss = bce(p, y)
    live = (p > PROB_CLAMP) & (p < 1 - PROB_CLAMP)
    dz = np.where(live, p - y, 0.0) / len(y)
    if spec.kind == "text_mlp":
        h = cache["h"]
        dh = np.outer(dz, P["out.weight"]) * (1.0 - h * h)
        grads = {
            "hidden.weight": np.asarray((X.T @ dh).T),
            "hidden.bias": dh.sum(axis=0),
            "out.weight": h.T @ dz,
            "out.bias": np.array([dz.sum()]),
        }
    else:
        grads = {"linear.weight": np.asarray(X.T @ dz).ravel(), "linear.bias": np.array([dz.sum()])}
    return loss, grads


def adam_step(params, state: AdamState, grads, config: TrainConfig):
    """One bias-corrected Adam update; returns fresh ``(params, state)``."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        m_new[name], v_new[name] = m, v
    return new_params, AdamState(m_new, v_new, t)


def init_params(spec: ModelSpec, rng: SplitMix64) -> dict[str, np.ndarray]:
    """Weights uniform in [-0.05, 0.05), biases zero, drawn in parameter order."""
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(math.prod(shape), -INIT_SCALE, INIT_SCALE).reshape(shape)
    return params


# -- training loop ----------------------------------------------------------

def evaluate_params(params, split: EncodedSplit, spec: ModelSpec) -> tuple[float, float]:
    """(mean dev loss, dev F1) for raw parameters on an encoded split."""
    p = predict_proba(params, split.X, spec)
    preds = (p >= THRESHOLD).astype(int).tolist()
    return bce(p, split.y), metrics(confusion(preds, split.y.astype(int).tolist())).f1


@dataclass
class FitResult:
    params: dict[str, np.ndarray]
    best_epoch: int
    dev_loss: float
    dev_f1: float
    history: list[dict] = field(default_factory=list)


def fit(train_split: EncodedSplit, dev_split: EncodedSplit, spec: ModelSpec, config: TrainConfig,
        init: Mapping[str, np.ndarray] | None = None) -> FitResult:
    """Train on encoded splits; keep the epoch snapshot with the best dev F1."""
    if len(train_split) == 0 or len(dev_split) == 0:
        raise DomainError("train and dev splits must be non-empty")
    rng = SplitMix64(config.seed)
    params = init_params(spec, rng) if init is None else _f64(init)
    check_params(params, spec)
    state = AdamState.zeros_like(params)
    order = list(range(len(train_split)))
    best = None
    history = []
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        loss_sum = 0.0
        for lo in range(0, len(order), config.batch_size):
            rows = order[lo:lo + config.batch_size]
            batch = EncodedSplit(train_split.X[rows], train_split.y[rows])
            loss, grads = loss_and_grad(params, batch, spec)
            loss_sum += loss * len(rows)
            params, state = adam_step(params, state, grads, config)
        dev_loss, dev_f1 = evaluate_params(params, dev_split, spec)
        history.append({"epoch": epoch, "train_loss": loss_sum / len(order), "dev_loss": dev_loss, "dev_f1": dev_f1})
        if best is None or dev_f1 > best.dev_f1:
            best = FitResult(params, epoch, dev_loss, dev_f1)
    best.history = history
    return best


def train(dataset: Dataset, spec: ModelSpec, config: TrainConfig, gazetteers: GazetteerSet | None = None,
          history: list | None = None) -> Checkpoint:
    """Train a model of ``spec`` on ``dataset["train"]`` selecting on ``dataset["dev"]``.

    If ``history`` is given, one record per epoch is appended to it.
    """
    if not dataset["train"] or not dataset["dev"]:
        raise DomainError("dataset needs non-empty train and dev splits")
    result = fit(encode_split(dataset["train"], spec, gazetteers), encode_split(dataset["dev"], spec, gazetteers), spec, config)
    if history is not None:
        history.extend(result.history)
    meta = CheckpointMeta(
        seed=config.seed,
        dev_loss=result.dev_loss,
        model_spec_id=spec.spec_id,
        extra={"preprocess": spec.preprocess, "best_epoch": result.best_epoch, "dev_f1": result.dev_f1},
    )
    return Checkpoint.create(result.params, meta)


def train_ner_logreg(dataset: Dataset, gazetteers: GazetteerSet | None, config: TrainConfig,
                     history: list | None = None) -> Checkpoint:
    return train(dataset, ModelSpec(kind="ner_logreg"), config, gazetteers, history)

