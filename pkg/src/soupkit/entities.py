"""Rule and gazetteer based entity recognition, parent-type grouping,
entity-count features and token substitution.

The recognizer covers numeric and temporal expressions with regular
expressions and everything name-like (people, organisations, places,
nationalities, events) with user-supplied gazetteers.
"""
from __future__ import annotations

import enum
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from soupkit.errors import DomainError, FormatError


class ParentType(enum.IntEnum):
    NUM = 0
    DATE = 1
    GPE = 2
    LOC = 3
    PER = 4
    ORG = 5

    @property
    def token(self) -> str:
        return f"<{self.name}>"


PARENT_TOKENS = tuple(p.token for p in ParentType)

FINE_TO_PARENT = {
    "ORDINAL": ParentType.NUM,
    "CARDINAL": ParentType.NUM,
    "QUANTITY": ParentType.NUM,
    "PERCENT": ParentType.NUM,
    "MONEY": ParentType.NUM,
    "TIME": ParentType.DATE,
    "DATE": ParentType.DATE,
    "NORP": ParentType.GPE,
    "GPE": ParentType.GPE,
    "LOC": ParentType.LOC,
    "FAC": ParentType.LOC,
    "EVENT": ParentType.LOC,
    "PERSON": ParentType.PER,
    "ORG": ParentType.ORG,
}

GAZETTEER_TYPES = frozenset({"PERSON", "ORG", "GPE", "NORP", "LOC", "FAC", "EVENT"})

# Lower rank wins when two candidates cover exactly the same span.
_PRIORITY = {"PERCENT": 0, "MONEY": 1, "QUANTITY": 2, "ORDINAL": 3, "TIME": 4, "DATE": 5, "CARDINAL": 6}
_GAZETTEER_PRIORITY = 7


def parent_of(fine_type: str) -> ParentType:
    try:
        return FINE_TO_PARENT[fine_type]
    except KeyError:
        raise DomainError(f"unsupported fine entity type {fine_type!r}") from None


@dataclass(frozen=True)
class EntityMention:
    start: int
    end: int
    surface: str
    fine_type: str

    @property
    def parent(self) -> ParentType:
        return FINE_TO_PARENT[self.fine_type]


class GazetteerSet:
    """Case-sensitive surface -> fine type lookup table."""

    def __init__(self, entries: dict[str, str] | None = None):
        self.entries: dict[str, str] = {}
        self._pattern = None
        for surface, fine_type in (entries or {}).items():
            self.add(surface, fine_type)

    def add(self, surface: str, fine_type: str) -> None:
        if fine_type not in FINE_TO_PARENT:
            raise DomainError(f"unsupported fine entity type {fine_type!r}")
        self.entries[surface] = fine_type
        self._pattern = None

    def __len__(self):
        return len(self.entries)

    def __contains__(self, surface):
        return surface in self.entries

    @classmethod
    def from_files(cls, paths: Iterable[str | os.PathLike]) -> "GazetteerSet":
        gaz = cls()
        for path in paths:
            gaz.load(path)
        return gaz

    @classmethod
    def from_dir(cls, directory: str | os.PathLike) -> "GazetteerSet":
        files = sorted(p for p in Path(directory).iterdir() if p.is_file() and p.suffix in {".tsv", ".txt"})
        return cls.from_files(files)

    @classmethod
    def default(cls) -> "GazetteerSet":
        """The bundled US-politics gazetteer."""
        gaz = cls()
        text = resources.files("soupkit.resources.gazetteers").joinpath("default.tsv").read_text("utf-8")
        gaz._load_lines(text.splitlines(), "default.tsv")
        return gaz

    def load(self, path: str | os.PathLike) -> None:
        with open(path, encoding="utf-8") as fh:
            self._load_lines(fh, str(path))

    def _load_lines(self, lines: Iterable[str], origin: str) -> None:
        for lineno, line in enumerate(lines, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise FormatError(f"{origin}:{lineno}: expected 'surface<TAB>fine_type'")
            surface, fine_type = parts[0], parts[1].strip()
            if fine_type not in FINE_TO_PARENT:
                raise FormatError(f"{origin}:{lineno}: unsupported fine type {fine_type!r}")
            self.add(surface, fine_type)

    def pattern(self) -> re.Pattern | None:
        # Zero-width lookahead so that every start position is tried; longest
        # alternatives first so each position reports its longest entry.
        if self._pattern is None and self.entries:
            alts = "|".join(re.escape(s) for s in sorted(self.entries, key=lambda s: (-len(s), s)))
            self._pattern = re.compile(rf"(?<!\w)(?=({alts})(?!\w))")
        return self._pattern


_UNITS = ("zero|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|thirteen|"
          "fourteen|fifteen|sixteen|seventeen|eighteen|nineteen")
_TENS = "twenty|thirty|forty|fifty|sixty|seventy|eighty|ninety"
_SCALE = r"(?:hundred|thousand|million|billion|trillion)"
_DIGITS = r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+"
_WORDNUM = rf"(?:(?:{_TENS})(?:[- ](?:one|two|three|four|five|six|seven|eight|nine))?|{_UNITS})"
_NUMBER = rf"(?:{_DIGITS}|{_WORDNUM})(?:[ -]{_SCALE})*"
_ORDINAL_WORDS = ("first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|eleventh|twelfth|"
                  "thirteenth|fourteenth|fifteenth|sixteenth|seventeenth|eighteenth|nineteenth|twentieth|"
                  "thirtieth|fortieth|fiftieth|sixtieth|seventieth|eightieth|ninetieth|hundredth|thousandth|"
                  "millionth")
_MONTHS = ("January|February|March|April|May|June|July|August|September|October|November|December|"
           "Jan\\.|Feb\\.|Aug\\.|Sept\\.|Sep\\.|Oct\\.|Nov\\.|Dec\\.")
_WEEKDAYS = "Monday|Tuesday|Wednesday|Thursday|Friday|Saturday|Sunday"
_YEAR = r"(?:19|20)\d{2}"
_UNIT_WORDS = (r"(?:miles?|kilometers?|kilometres?|meters?|metres?|feet|foot|inches|inch|pounds?|tons?|"
               r"tonnes?|acres?|gallons?|barrels?|degrees?|square (?:miles?|feet))")

_L = r"(?<![\w.$])"
_R = r"(?!\w)"

# Keywords are case-insensitive via inline flags; month and weekday names are
# proper nouns and stay case-sensitive so that "may" and "march" as verbs do
# not become dates.
_PATTERNS = [
    ("PERCENT", rf"{_L}(?i:{_NUMBER})(?:\s*%|\s+(?i:percent|per cent|percentage points?){_R})"),
    ("MONEY", rf"(?<![\w$])\$\s?(?:{_DIGITS})(?:[ -](?i:{_SCALE}))*{_R}"),
    ("MONEY", rf"{_L}(?i:{_NUMBER})\s+(?i:dollars?|cents?|bucks){_R}"),
    ("QUANTITY", rf"{_L}(?i:{_NUMBER})\s+(?i:{_UNIT_WORDS}){_R}"),
    ("ORDINAL", rf"{_L}(?:\d+(?i:st|nd|rd|th)|(?i:{_ORDINAL_WORDS})){_R}"),
    ("TIME", rf"{_L}\d{{1,2}}:\d{{2}}(?:\s*(?i:a\.m\.|p\.m\.|am|pm)(?![\w]))?(?!\w)"),
    ("TIME", rf"{_L}(?i:{_NUMBER})\s+(?i:o'clock){_R}"),
    ("DATE", rf"{_L}(?:{_MONTHS})(?:\s+\d{{1,2}}(?i:st|nd|rd|th)?)?(?:,?\s+{_YEAR})?(?![\w])"),
    ("DATE", rf"{_L}\d{{1,2}}(?i:st|nd|rd|th)?\s+(?:{_MONTHS})(?:,?\s+{_YEAR})?(?![\w])"),
    ("DATE", rf"{_L}(?:{_WEEKDAYS}){_R}"),
    ("DATE", rf"{_L}{_YEAR}s?{_R}"),
    ("CARDINAL", rf"{_L}(?i:{_NUMBER}){_R}"),
]
_COMPILED = [(fine, re.compile(rx)) for fine, rx in _PATTERNS]


def _candidates(text: str, gazetteers: GazetteerSet | None):
    for fine, rx in _COMPILED:
        for m in rx.finditer(text):
            if m.end() > m.start():
                yield m.start(), m.end(), _PRIORITY[fine], fine
    pattern = gazetteers.pattern() if gazetteers is not None else None
    if pattern is not None:
        for m in pattern.finditer(text):
            surface = m.group(1)
            yield m.start(), m.start() + len(surface), _GAZETTEER_PRIORITY, gazetteers.entries[surface]


def extract_entities(text: str, gazetteers: GazetteerSet | None = None) -> list[EntityMention]:
    """Non-overlapping mentions, leftmost first, longest on ties, sorted by start.

    Offsets are Python string (code point) indices into ``text``.
    """
    cands = sorted(set(_candidates(text, gazetteers)), key=lambda c: (c[0], -(c[1] - c[0]), c[2], c[3]))
    mentions = []
    cursor = 0
    for start, end, _, fine in cands:
        if start >= cursor:
            mentions.append(EntityMention(start, end, text[start:end], fine))
            cursor = end
    return mentions


def substitute_tokens(text: str, mentions: Sequence[EntityMention]) -> str:
    """Replace every mention by its parent token (``<NUM>``, ``<GPE>``, ...)."""
    pieces = []
    cursor = 0
    for m in sorted(mentions, key=lambda m: m.start):
        if m.start < cursor:
            raise DomainError(f"overlapping mentions at offset {m.start}")
        if not 0 <= m.start < m.end <= len(text) or text[m.start:m.end] != m.surface:
            raise DomainError(f"mention {m!r} does not match the text")
        pieces.append(text[cursor:m.start])
        pieces.append(m.parent.token)
        cursor = m.end
    pieces.append(text[cursor:])
    return "".join(pieces)


def count_features(mentions: Iterable[EntityMention]) -> list[int]:
    """Mention counts per parent type, in ``ParentType`` order."""
    counts = [0] * len(ParentType)
    for m in mentions:
        counts[m.parent] += 1
    return counts


@dataclass(frozen=True)
class ClassEntityStats:
    label: int
    n_texts: int
    mean_mentions: float
    type_distribution: tuple[float, ...]
    no_entities: bool  # distribution is all zeros because no mention was found

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "texts": self.n_texts,
            "mean_mentions": self.mean_mentions,
            "type_distribution": dict(zip([p.name for p in ParentType], self.type_distribution)),
            "no_entities": self.no_entities,
        }


def corpus_entity_stats(sentences, gazetteers: GazetteerSet | None = None, labels=(1, 0)) -> dict[int, ClassEntityStats]:
    """Per-class mean mention count and normalized parent-type histogram."""
    totals = {lab: [0] * len(ParentType) for lab in labels}
    n_texts = dict.fromkeys(labels, 0)
    for s in sentences:
        if s.label not in totals:
            continue
        n_texts[s.label] += 1
        for i, c in enumerate(count_features(extract_entities(s.text, gazetteers))):
            totals[s.label][i] += c
    stats = {}
    for lab in labels:
        if n_texts[lab] == 0:
            raise DomainError(f"class {lab} has no texts")
        n_mentions = sum(totals[lab])
        dist = tuple(c / n_mentions for c in totals[lab]) if n_mentions else (0.0,) * len(ParentType)
        stats[lab] = ClassEntityStats(lab, n_texts[lab], n_mentions / n_texts[lab], dist, n_mentions == 0)
    return stats
