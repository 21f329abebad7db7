"""Model souping: weighted parameter averaging of same-architecture checkpoints.

Influence weights come from each member's mean dev loss ``L_i``:

``paper_as_written``
    ``I_i = L_i / sum_j L_j``. Taken literally this gives *high*-loss
    members *more* weight.
``inverse_loss`` (default)
    ``I_i = (1 / L_i) / sum_j (1 / L_j)``, so better members weigh more.
``uniform``
    ``I_i = 1 / N``.

Both ratio schemes are shipped because the literal formula and the intent
stated alongside it (weak models should matter less) disagree.
"""
from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from soupkit.checkpoint import Checkpoint, CheckpointMeta
from soupkit.entities import GazetteerSet
from soupkit.errors import CompatibilityError, DomainError
from soupkit.evaluation import check_compatible, evaluate, mean_loss
from soupkit.metrics import metrics
from soupkit.trainer import ModelSpec, encode_split

WEIGHT_TOL = 1e-9


class Scheme(str, enum.Enum):
    UNIFORM = "uniform"
    PAPER_AS_WRITTEN = "paper_as_written"
    INVERSE_LOSS = "inverse_loss"
    EXPLICIT = "explicit"
    GREEDY = "greedy"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        try:
            return cls(value.replace("-", "_"))
        except ValueError:
            raise DomainError(f"unknown weighting scheme {value!r}") from None


def influence_scores(dev_losses: Sequence[float], scheme: str | Scheme = Scheme.INVERSE_LOSS) -> list[float]:
    scheme = Scheme.parse(scheme)
    losses = [float(x) for x in dev_losses]
    if not losses:
        raise DomainError("need at least one loss")
    if any(not (math.isfinite(x) and x > 0) for x in losses):
        raise DomainError(f"losses must be finite and positive, got {losses}")
    if scheme is Scheme.UNIFORM:
        return [1.0 / len(losses)] * len(losses)
    if scheme is Scheme.PAPER_AS_WRITTEN:
        total = math.fsum(losses)
        return [x / total for x in losses]
    if scheme is Scheme.INVERSE_LOSS:
        inv = [1.0 / x for x in losses]
        total = math.fsum(inv)
        return [x / total for x in inv]
    raise DomainError(f"scheme {scheme.value!r} does not derive weights from losses")


def check_weights(weights: Sequence[float], n: int) -> list[float]:
    weights = [float(w) for w in weights]
    if len(weights) != n:
        raise DomainError(f"{len(weights)} weights for {n} checkpoints")
    if any(not math.isfinite(w) or w < 0 for w in weights):
        raise DomainError(f"weights must be finite and nonnegative, got {weights}")
    if abs(math.fsum(weights) - 1.0) > WEIGHT_TOL:
        raise DomainError(f"weights sum to {math.fsum(weights)!r}, expected 1")
    return weights


def check_signatures(checkpoints: Sequence[Checkpoint]) -> None:
    if not checkpoints:
        raise DomainError("need at least one checkpoint")
    ref = checkpoints[0].signature
    for i, c in enumerate(checkpoints[1:], 1):
        if c.signature.canonical != ref.canonical:
            raise CompatibilityError(f"checkpoint {i} architecture {c.signature.canonical!r} != {ref.canonical!r}")


def _mix_tensor(tensors: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    # Fixed member order, f64 accumulator: bitwise identical however tensors are scheduled.
    acc = np.zeros(tensors[0].shape, dtype=np.float64)
    for t, w in zip(tensors, weights):
        acc += w * t.astype(np.float64)
    return acc.astype(np.float32)


def soup(checkpoints: Sequence[Checkpoint], weights: Sequence[float], names: Sequence[str] | None = None,
         workers: int = 1) -> Checkpoint:
    """Elementwise ``sum_i weights[i] * member_i`` for every tensor."""
    check_signatures(checkpoints)
    weights = check_weights(weights, len(checkpoints))
    names = list(names) if names is not None else [str(i) for i in range(len(checkpoints))]
    keys = list(checkpoints[0].tensors)

    def job(key):
        return _mix_tensor([c.tensors[key] for c in checkpoints], weights)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mixed = list(pool.map(job, keys))
    else:
        mixed = [job(k) for k in keys]

    first = checkpoints[0].meta
    meta = CheckpointMeta(
        seed=first.seed,
        model_spec_id=first.model_spec_id,
        label_map=dict(first.label_map),
        extra={
            "preprocess": first.extra.get("preprocess"),
            "soup": {"members": names, "member_seeds": [c.meta.seed for c in checkpoints], "weights": weights},
        },
    )
    return Checkpoint.create(dict(zip(keys, mixed)), meta)


@dataclass(frozen=True)
class SoupMember:
    path: str
    dev_loss: float


@dataclass
class SoupRecipe:
    scheme: str
    members: list[SoupMember]
    weights: list[float]
    dev_f1: float | None = field(default=None, compare=False)

    def __post_init__(self):
        check_weights(self.weights, len(self.members))

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "members": [{"path": m.path, "dev_loss": m.dev_loss} for m in self.members],
            "weights": list(self.weights),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SoupRecipe":
        members = [SoupMember(str(m["path"]), float(m["dev_loss"])) for m in obj["members"]]
        return cls(str(obj["scheme"]), members, [float(w) for w in obj["weights"]])

    def dump(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SoupRecipe":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _dev_items(dev):
    # Accept a Dataset (use its dev split) or a plain sequence of sentences.
    return dev["dev"] if hasattr(dev, "splits") else dev


def build_master(candidates: Sequence[Checkpoint], dev, model_spec: ModelSpec, scheme: str | Scheme = Scheme.INVERSE_LOSS,
                 gazetteers: GazetteerSet | None = None, names: Sequence[str] | None = None,
                 workers: int = 1) -> tuple[Checkpoint, SoupRecipe]:
    """Measure each candidate's mean dev loss, derive influence weights, soup."""
    scheme = Scheme.parse(scheme)
    if scheme in (Scheme.EXPLICIT, Scheme.GREEDY):
        raise DomainError(f"build_master derives weights from losses; got scheme {scheme.value!r}")
    check_signatures(candidates)
    for c in candidates:
        check_compatible(c, model_spec)
    names = list(names) if names is not None else [str(i) for i in range(len(candidates))]
    split = encode_split(list(_dev_items(dev)), model_spec, gazetteers)
    losses = [mean_loss(c, split, model_spec) for c in candidates]
    weights = influence_scores(losses, scheme)
    master = soup(candidates, weights, names, workers)
    recipe = SoupRecipe(scheme.value, [SoupMember(n, l) for n, l in zip(names, losses)], weights)
    recipe.dev_f1 = metrics(evaluate(master, split, model_spec)).f1
    return master, recipe


def greedy_master(candidates: Sequence[Checkpoint], dev, model_spec: ModelSpec, gazetteers: GazetteerSet | None = None,
                  names: Sequence[str] | None = None, workers: int = 1) -> tuple[Checkpoint, SoupRecipe]:
    """Greedy soup: add candidates one at a time, keeping those that raise dev F1.

    Candidates are visited best first (dev F1 descending, then dev loss
    ascending); a candidate is kept only on a strict F1 improvement of the
    uniform soup of everything kept so far.
    """
    check_signatures(candidates)
    for c in candidates:
        check_compatible(c, model_spec)
    names = list(names) if names is not None else [str(i) for i in range(len(candidates))]
    split = encode_split(list(_dev_items(dev)), model_spec, gazetteers)
    if len(split) == 0:
        raise DomainError("dev data must be non-empty")
    losses = [mean_loss(c, split, model_spec) for c in candidates]
    f1s = [metrics(evaluate(c, split, model_spec)).f1 for c in candidates]
    order = sorted(range(len(candidates)), key=lambda i: (-f1s[i], losses[i], i))

    kept = [order[0]]
    best_ckpt, best_f1 = candidates[order[0]], f1s[order[0]]
    for i in order[1:]:
        trial = kept + [i]
        w = [1.0 / len(trial)] * len(trial)
        ckpt = soup([candidates[j] for j in trial], w, [names[j] for j in trial], workers)
        f1 = metrics(evaluate(ckpt, split, model_spec)).f1
        if f1 > best_f1:
            kept, best_ckpt, best_f1 = trial, ckpt, f1

    weights = [1.0 / len(kept)] * len(kept)
    if len(kept) == 1:
        best_ckpt = soup([candidates[kept[0]]], [1.0], [names[kept[0]]], workers)
    recipe = SoupRecipe(Scheme.GREEDY.value, [SoupMember(names[j], losses[j]) for j in kept], weights, best_f1)
    return best_ckpt, recipe


def greedy_soup(candidates: Sequence[Checkpoint], dev, model_spec: ModelSpec, gazetteers: GazetteerSet | None = None,
                names: Sequence[str] | None = None) -> SoupRecipe:
    return greedy_master(candidates, dev, model_spec, gazetteers, names)[1]
