"""Labeled sentences, split datasets and the CheckThat TSV format."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from soupkit.errors import FormatError

SPLITS = ("train", "dev", "dev_test", "test")
LABELS = {"Yes": 1, "No": 0}
LABEL_NAMES = {v: k for k, v in LABELS.items()}
COLUMNS = ("Sentence_id", "Text", "class_label")


@dataclass(frozen=True)
class LabeledSentence:
    id: str
    text: str
    label: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"sentence {self.id!r} has empty text")
        if self.label not in (0, 1):
            raise ValueError(f"sentence {self.id!r} has label {self.label!r}, expected 0 or 1")


@dataclass
class Dataset:
    splits: dict[str, list[LabeledSentence]] = field(default_factory=dict)

    def __post_init__(self):
        for name, items in self.splits.items():
            seen = set()
            for s in items:
                if s.id in seen:
                    raise ValueError(f"duplicate id {s.id!r} in split {name!r}")
                seen.add(s.id)

    def __getitem__(self, split: str) -> list[LabeledSentence]:
        return self.splits.get(split, [])

    @classmethod
    def from_tsv(cls, paths: dict[str, str | os.PathLike]) -> "Dataset":
        return cls({name: load_tsv(path, name) for name, path in paths.items()})


class ValueErrorWithLine(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def load_tsv(path: str | os.PathLike, split_name: str = "") -> list[LabeledSentence]:
    """Parse a ``Sentence_id<TAB>Text<TAB>class_label`` file, keeping row order."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file")
        header = [h.strip().lstrip("\ufeff") for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in COLUMNS]
        out = []
        for lineno, row in enumerate(reader, 2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) <= max(idx):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            sid, text, raw_label = (row[i] for i in idx)
            label = LABELS.get(raw_label.strip())
            if label is None:
                raise ValueErrorWithLine(path, lineno, f"unknown label {raw_label!r} (split {split_name or '?'})")
            try:
                out.append(LabeledSentence(sid.strip(), text, label))
            except ValueError as exc:
                raise ValueErrorWithLine(path, lineno, str(exc)) from None
    return out


def write_tsv(path: str | os.PathLike, sentences: Iterable[LabeledSentence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(COLUMNS) + "\n")
        for s in sentences:
            if "\t" in s.text or "\n" in s.text:
                raise ValueError(f"sentence {s.id!r} contains a tab or newline")
            fh.write(f"{s.id}\t{s.text}\t{LABEL_NAMES[s.label]}\n")


class SplitCounts(NamedTuple):
    total: int
    yes: int
    no: int


def split_counts(sentences: Iterable[LabeledSentence]) -> SplitCounts:
    yes = no = 0
    for s in sentences:
        if s.label == 1:
            yes += 1
        else:
            no += 1
    return SplitCounts(yes + no, yes, no)


def class_distribution(dataset: Dataset) -> dict[str, SplitCounts]:
    return {name: split_counts(items) for name, items in dataset.splits.items()}
