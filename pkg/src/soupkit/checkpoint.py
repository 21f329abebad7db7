"""Checkpoint container: named float32 tensors plus JSON metadata.

File layout (all integers little-endian)::

    0..3    b"SOUP"
    4..7    u32 format version (1)
    8..15   u64 metadata length M
    16..    M bytes of UTF-8 JSON {"arch": [...], "meta": {...}}
    ...     raw f32 values of every arch entry, in arch order

Nothing follows the last tensor.
"""
from __future__ import annotations

import io
import json
import math
import os
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import BinaryIO, Mapping

import numpy as np

from soupkit._rng import fnv1a64
from soupkit.errors import FormatError, LengthError, ValidityError

MAGIC = b"SOUP"
VERSION = 1
DTYPE = "f32"
EPOCH_TIMESTAMP = "1970-01-01T00:00:00+00:00"


def default_timestamp() -> str:
    """``SOURCE_DATE_EPOCH`` as ISO-8601 if set, else the Unix epoch.

    Checkpoint files must be byte-identical across reruns, so wall-clock time
    is never used implicitly.
    """
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    if not raw:
        return EPOCH_TIMESTAMP
    return datetime.fromtimestamp(int(raw), tz=timezone.utc).isoformat()


NamedTensorMap = dict  # name -> np.ndarray[float32], insertion-ordered


@dataclass(frozen=True)
class ArchSignature:
    canonical: str
    hash: int

    @property
    def hex(self) -> str:
        return f"{self.hash:016x}"


def _shape_str(shape) -> str:
    return "x".join(str(int(d)) for d in shape)


def arch_signature(tensors: Mapping[str, np.ndarray]) -> ArchSignature:
    """Canonical ``name:f32:d1xd2`` entries joined by ``;`` plus their FNV-1a hash."""
    canonical = ";".join(f"{name}:{DTYPE}:{_shape_str(t.shape)}" for name, t in tensors.items())
    return ArchSignature(canonical, fnv1a64(canonical.encode("utf-8")))


def freeze_tensors(tensors: Mapping[str, np.ndarray]) -> NamedTensorMap:
    """Copy ``tensors`` into read-only little-endian float32 arrays, validating values."""
    frozen = {}
    for name, values in tensors.items():
        if not isinstance(name, str) or not name:
            raise ValidityError(f"tensor name must be a non-empty string, got {name!r}")
        arr = np.array(values, dtype="<f4", copy=True)
        if any(d <= 0 for d in arr.shape):
            raise ValidityError(f"tensor {name!r} has non-positive dimension in {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidityError(f"tensor {name!r} contains NaN or Inf")
        arr.setflags(write=False)
        frozen[name] = arr
    return frozen


@dataclass(frozen=True)
class CheckpointMeta:
    seed: int = 0
    dev_loss: float | None = None
    model_spec_id: str = ""
    label_map: dict = field(default_factory=lambda: {"No": 0, "Yes": 1})
    created_at: str = field(default_factory=default_timestamp)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValidityError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.dev_loss is not None and not (math.isfinite(self.dev_loss) and self.dev_loss >= 0):
            raise ValidityError(f"dev_loss must be finite and nonnegative, got {self.dev_loss}")
        if sorted(self.label_map.values()) != [0, 1]:
            raise ValidityError(f"label_map must be a bijection onto {{0, 1}}, got {self.label_map}")

    def to_json(self) -> dict:
        return {
            "seed": int(self.seed),
            "dev_loss": None if self.dev_loss is None else float(self.dev_loss),
            "model_spec_id": self.model_spec_id,
            "label_map": dict(self.label_map),
            "created_at": self.created_at,
            "extra": self.extra,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CheckpointMeta":
        try:
            return cls(
                seed=int(obj["seed"]),
                dev_loss=obj.get("dev_loss"),
                model_spec_id=obj.get("model_spec_id", ""),
                label_map=dict(obj.get("label_map", {"No": 0, "Yes": 1})),
                created_at=obj.get("created_at", EPOCH_TIMESTAMP),
                extra=dict(obj.get("extra", {})),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad checkpoint metadata: {exc}") from exc


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Immutable tensors + metadata. Construct via :meth:`create` to validate."""

    tensors: NamedTensorMap
    meta: CheckpointMeta

    @classmethod
    def create(cls, tensors: Mapping[str, np.ndarray], meta: CheckpointMeta | None = None) -> "Checkpoint":
        return cls(freeze_tensors(tensors), meta or CheckpointMeta())

    @property
    def signature(self) -> ArchSignature:
        return arch_signature(self.tensors)

    def same_values(self, other: "Checkpoint") -> bool:
        if list(self.tensors) != list(other.tensors):
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors.values(), other.tensors.values())
        )

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return self.meta == other.meta and self.same_values(other)

    __hash__ = None


def _header_json(ckpt: Checkpoint) -> bytes:
    arch = [{"name": n, "dtype": DTYPE, "shape": [int(d) for d in t.shape]} for n, t in ckpt.tensors.items()]
    doc = {"arch": arch, "meta": ckpt.meta.to_json()}
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    write_checkpoint(ckpt, buf)
    return buf.getvalue()


def write_checkpoint(ckpt: Checkpoint, dest: BinaryIO | str | os.PathLike) -> None:
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "wb") as fh:
            write_checkpoint(ckpt, fh)
        return
    header = _header_json(ckpt)
    dest.write(MAGIC)
    dest.write(struct.pack("<IQ", VERSION, len(header)))
    dest.write(header)
    for arr in ckpt.tensors.values():
        dest.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(src: BinaryIO, n: int, what: str) -> bytes:
    data = src.read(n)
    if len(data) != n:
        raise LengthError(f"truncated {what}: expected {n} bytes, got {len(data)}")
    return data


def read_checkpoint(src: BinaryIO | bytes | str | os.PathLike) -> Checkpoint:
    if isinstance(src, (bytes, bytearray)):
        return read_checkpoint(io.BytesIO(src))
    if isinstance(src, (str, os.PathLike)):
        with open(src, "rb") as fh:
            return read_checkpoint(fh)

    magic = src.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, meta_len = struct.unpack("<IQ", _read_exact(src, 12, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    try:
        doc = json.loads(_read_exact(src, meta_len, "metadata").decode("utf-8"))
        arch = doc["arch"]
        meta = CheckpointMeta.from_json(doc["meta"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable metadata: {exc}") from exc

    tensors = {}
    for entry in arch:
        name, shape = entry.get("name"), entry.get("shape")
        if entry.get("dtype") != DTYPE or not isinstance(shape, list):
            raise FormatError(f"bad arch entry {entry!r}")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        count = math.prod(shape)
        raw = _read_exact(src, 4 * count, f"tensor {name!r}")
        values = np.frombuffer(raw, dtype="<f4").reshape(shape)
        if not np.all(np.isfinite(values)):
            raise ValidityError(f"tensor {name!r} contains NaN or Inf")
        tensors[name] = values
    if src.read(1):
        raise LengthError("trailing bytes after last tensor")
    return Checkpoint(freeze_tensors(tensors), meta)
