"""Factual factor extraction.

A factual factor is a character-addressed span of a single sentence that
states a fact: a named entity or a noun phrase.  Taggers are plain callables
``sentence -> [(start, end, category), ...]``; this module ships only a
deterministic rule-based tagger so everything runs without an NER service.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

UNK = "<unk>"


class Category(str, enum.Enum):
    PERSON = "PERSON"
    ORG = "ORG"
    LOC = "LOC"
    DATE = "DATE"
    NUMBER = "NUMBER"
    OTHER = "OTHER"
    NOUN_PHRASE = "NOUN_PHRASE"

    @property
    def is_entity(self) -> bool:
        return self is not Category.NOUN_PHRASE


ENTITY_CATEGORIES = frozenset(c for c in Category if c.is_entity)

Tagger = Callable[[str], Sequence[tuple[int, int, "Category | str"]]]


class ExtractionError(RuntimeError):
    """Raised when a tagger fails or returns spans that do not fit the sentence."""

    def __init__(self, message: str, diagnostics: object = None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FactualFactor:
    surface: str
    start: int
    end: int
    category: Category
    index: int = 0

    def overlaps(self, other: "FactualFactor") -> bool:
        return self.start < other.end and other.start < self.end

    def to_dict(self) -> dict:
        return {
            "surface": self.surface,
            "start": self.start,
            "end": self.end,
            "category": self.category.value,
            "index": self.index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FactualFactor":
        return cls(d["surface"], int(d["start"]), int(d["end"]), Category(d["category"]), int(d.get("index", 0)))


@dataclass(frozen=True)
class Sentence:
    text: str
    start: int
    end: int


_SENT_END = re.compile(r"(?<=[.!?])[\"')\]]*\s+(?=\S)")


def split_sentences(text: str) -> list[Sentence]:
    """Naive punctuation-based splitter; offsets index into ``text``."""
    out = []
    pos = 0
    for m in _SENT_END.finditer(text):
        # keep closing quotes/brackets with the sentence they end
        cut = m.start() + len(m.group(0).rstrip())
        chunk = text[pos:cut]
        if chunk.strip():
            lead = len(chunk) - len(chunk.lstrip())
            out.append(Sentence(chunk.strip(), pos + lead, pos + lead + len(chunk.strip())))
        pos = m.end()
    chunk = text[pos:]
    if chunk.strip():
        lead = len(chunk) - len(chunk.lstrip())
        out.append(Sentence(chunk.strip(), pos + lead, pos + lead + len(chunk.strip())))
    return out


@dataclass(frozen=True)
class SourceDocument:
    id: str
    text: str
    sentences: tuple[Sentence, ...] = field(default=())

    def __post_init__(self):
        if not self.sentences and self.text.strip():
            object.__setattr__(self, "sentences", tuple(split_sentences(self.text)))
        prev_end = 0
        for s in self.sentences:
            if not (prev_end <= s.start < s.end <= len(self.text)):
                raise ValueError(f"document {self.id!r}: sentence offsets out of order or bounds at {s.start}..{s.end}")
            if self.text[s.start:s.end] != s.text:
                raise ValueError(f"document {self.id!r}: sentence text does not match offsets {s.start}..{s.end}")
            prev_end = s.end


@dataclass(frozen=True)
class Hypothesis:
    id: str
    doc_id: str
    text: str


# --- rule-based tagger -------------------------------------------------------

_TOKEN = re.compile(r"(?P<num>\d+(?:[.,]\d+)*)|(?P<word>[^\W\d_]+(?:-[^\W\d_]+)*)")

MONTHS = frozenset(
    "january february march april may june july august september october november december".split()
)


def _is_capitalized(word: str) -> bool:
    return word[0].isupper()


def _is_title(word: str) -> bool:
    return word[0].isupper() and (len(word) == 1 or word[1:].replace("-", "").islower())


def rule_based_tag(sentence: str) -> list[tuple[int, int, Category]]:
    """Deterministic fallback tagger.

    Emits maximal runs of capitalized words (a single capitalized word at the
    start of the sentence is skipped), numbers including decimals, and dates
    (month names, four-digit years).  Runs of two or more title-case words are
    tagged PERSON, other capitalized runs OTHER.
    """
    tokens = list(_TOKEN.finditer(sentence))
    spans: list[tuple[int, int, Category]] = []
    run: list[re.Match] = []
    first_word_start = tokens[0].start() if tokens else -1

    def flush():
        if not run:
            return
        words = [m.group(0) for m in run]
        if len(run) == 1 and run[0].start() == first_word_start:
            pass
        elif len(run) == 1 and words[0].lower() in MONTHS:
            spans.append((run[0].start(), run[0].end(), Category.DATE))
        elif len(run) >= 2 and all(_is_title(w) for w in words):
            spans.append((run[0].start(), run[-1].end(), Category.PERSON))
        else:
            spans.append((run[0].start(), run[-1].end(), Category.OTHER))
        run.clear()

    for m in tokens:
        if m.group("word") is not None and _is_capitalized(m.group(0)):
            # runs only continue across whitespace
            if run and not sentence[run[-1].end():m.start()].isspace():
                flush()
            run.append(m)
            continue
        flush()
        if m.group("num") is not None:
            text = m.group(0)
            cat = Category.DATE if len(text) == 4 and text.isdigit() else Category.NUMBER
            spans.append((m.start(), m.end(), cat))
    flush()
    return spans


# --- extraction --------------------------------------------------------------

def _priority(f: FactualFactor) -> tuple:
    return (0 if f.category.is_entity else 1, -(f.end - f.start), f.start)


def resolve_overlaps(factors: Iterable[FactualFactor]) -> list[FactualFactor]:
    """Make spans pairwise disjoint.

    Entities beat noun phrases, then longer spans win, then the earlier start.
    Survivors are returned in start order with indices renumbered from 0.
    """
    kept: list[FactualFactor] = []
    for f in sorted(factors, key=_priority):
        if not any(f.overlaps(k) for k in kept):
            kept.append(f)
    kept.sort(key=lambda f: f.start)
    return [FactualFactor(f.surface, f.start, f.end, f.category, i) for i, f in enumerate(kept)]


def extract_factors(sentence: str, tagger: Tagger = rule_based_tag) -> list[FactualFactor]:
    if not sentence:
        raise ExtractionError("cannot extract factors from an empty sentence")
    try:
        triples = list(tagger(sentence))
    except Exception as e:  # tagger is foreign code
        raise ExtractionError(f"tagger failed: {e}", diagnostics=e) from e

    factors = []
    for triple in triples:
        try:
            start, end, cat = triple
            cat = Category(cat)
        except (TypeError, ValueError) as e:
            raise ExtractionError(f"malformed tagger output {triple!r}", diagnostics=triple) from e
        if not (0 <= start < end <= len(sentence)):
            raise ExtractionError(f"tagger span {start}..{end} outside sentence of length {len(sentence)}", diagnostics=triple)
        surface = sentence[start:end]
        if surface == UNK:
            continue
        factors.append(FactualFactor(surface, start, end, cat))
    return resolve_overlaps(factors)
