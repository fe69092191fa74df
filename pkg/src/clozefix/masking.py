"""Masked hypotheses: placeholder templates, backend input rendering, merging
fills back in, and recovering fills from a fully regenerated sentence."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Collection, Sequence

from .factors import UNK, FactualFactor, Hypothesis, SourceDocument

SEPARATOR = "⟨SEP⟩"
PLACEHOLDER_RE = re.compile(r"⟨M(\d+)⟩")


def placeholder(k: int) -> str:
    return f"⟨M{k}⟩"


class CorrectionMode(str, enum.Enum):
    FULL_SEQUENCE = "FULL_SEQUENCE"
    SLOT_FILL = "SLOT_FILL"


class MaskError(ValueError):
    pass


class MergeError(ValueError):
    pass


@dataclass(frozen=True)
class MaskedHypothesis:
    original: str
    factors: tuple[FactualFactor, ...]
    template: str
    mode_hint: CorrectionMode = CorrectionMode.SLOT_FILL

    @property
    def slot_count(self) -> int:
        return len(self.factors)

    def segments(self) -> list[str]:
        return split_template(self.template)


@dataclass(frozen=True)
class FillResult:
    fills: tuple[str, ...]
    raw_output: str
    mode: CorrectionMode
    alignment_ok: bool = True

    def has_unk(self) -> bool:
        return any(f.strip() == UNK for f in self.fills) or UNK in self.raw_output


@dataclass(frozen=True)
class Change:
    slot: int
    index: int
    old: str
    new: str
    changed: bool

    def to_dict(self) -> dict:
        return {"slot": self.slot, "index": self.index, "old": self.old, "new": self.new, "changed": self.changed}


def normalize(text: str) -> str:
    return " ".join(text.lower().split())


def split_template(template: str) -> list[str]:
    """K+1 literal context segments around the K placeholders."""
    return PLACEHOLDER_RE.split(template)[::2]


def build_masked(
    hypothesis: Hypothesis | str,
    factors: Sequence[FactualFactor],
    selection: Collection[int] | None = None,
    mode: CorrectionMode = CorrectionMode.SLOT_FILL,
) -> MaskedHypothesis:
    """Replace the selected factors (by position in ``factors``) with ⟨Mi⟩."""
    text = hypothesis.text if isinstance(hypothesis, Hypothesis) else hypothesis
    if PLACEHOLDER_RE.search(text) or SEPARATOR in text:
        raise MaskError("sentence already contains reserved placeholder or separator markup")
    ordered = sorted(factors, key=lambda f: f.start)
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            raise MaskError(f"overlapping factors {a.surface!r} and {b.surface!r}")
    for f in ordered:
        if text[f.start:f.end] != f.surface:
            raise MaskError(f"factor {f.surface!r} does not slice from {f.start}..{f.end}")
    if selection is None:
        selection = range(len(factors))
    bad = [i for i in selection if not 0 <= i < len(factors)]
    if bad:
        raise MaskError(f"selection indices out of range: {bad}")

    chosen = sorted((factors[i] for i in set(selection)), key=lambda f: f.start)
    parts, pos = [], 0
    for k, f in enumerate(chosen):
        parts.append(text[pos:f.start])
        parts.append(placeholder(k))
        pos = f.end
    parts.append(text[pos:])
    return MaskedHypothesis(text, tuple(chosen), "".join(parts), mode)


def truncate_words(text: str, max_chars: int) -> str:
    if len(text) <= max_chars:
        return text
    if text[max_chars].isspace():
        return text[:max_chars].rstrip()
    cut = text[:max_chars]
    ws = max((i for i, c in enumerate(cut) if c.isspace()), default=-1)
    # a single token longer than the budget gets a hard cut
    return cut[:ws].rstrip() if ws > 0 else cut


def render_input(document: SourceDocument | str, masked: MaskedHypothesis | str, max_doc_chars: int = 4000) -> str:
    if max_doc_chars <= 0:
        raise ValueError("max_doc_chars must be positive")
    doc = document.text if isinstance(document, SourceDocument) else document
    template = masked.template if isinstance(masked, MaskedHypothesis) else masked
    return f"{truncate_words(doc, max_doc_chars)}\n{SEPARATOR}\n{template}"


def parse_rendered(rendered: str) -> tuple[str, str]:
    """Inverse of :func:`render_input`: (document text, template)."""
    marker = f"\n{SEPARATOR}\n"
    doc, sep, template = rendered.rpartition(marker)
    if not sep:
        raise ValueError("rendered input has no separator line")
    return doc, template


def fill_template(template: str, fills: Sequence[str]) -> str:
    segments = split_template(template)
    if len(segments) - 1 != len(fills):
        raise MergeError(f"template has {len(segments) - 1} placeholders but got {len(fills)} fills")
    out = [segments[0]]
    for fill, seg in zip(fills, segments[1:]):
        out.append(fill)
        out.append(seg)
    return "".join(out)


def merge_fills(masked: MaskedHypothesis, fills: FillResult) -> tuple[str, list[Change]]:
    if not fills.alignment_ok:
        raise MergeError("cannot merge an unaligned fill result")
    if len(fills.fills) != masked.slot_count:
        raise MergeError(f"expected {masked.slot_count} fills, got {len(fills.fills)}")
    corrected = fill_template(masked.template, fills.fills)
    changes = [
        Change(k, f.index, f.surface, new, normalize(f.surface) != normalize(new))
        for k, (f, new) in enumerate(zip(masked.factors, fills.fills))
    ]
    return corrected, changes


# --- full-sequence alignment -------------------------------------------------

def _normalized_with_map(text: str) -> tuple[str, list[int]]:
    """Lowercased, whitespace-collapsed text plus a map from each normalized
    character back to its index in ``text`` (len(map) == len(norm) + 1)."""
    out: list[str] = []
    idx: list[int] = []
    for i, c in enumerate(text):
        if c.isspace():
            if out and out[-1] != " ":
                out.append(" ")
                idx.append(i)
            continue
        for lc in c.lower():
            out.append(lc)
            idx.append(i)
    if out and out[-1] == " ":
        out.pop()
        idx.pop()
    idx.append(len(text))
    return "".join(out), idx


def _at_boundary(norm: str, start: int, end: int) -> bool:
    # a segment starting/ending in a word character must not cut a word
    if start > 0 and norm[start].isalnum() and norm[start - 1].isalnum():
        return False
    if end < len(norm) and norm[end - 1].isalnum() and norm[end].isalnum():
        return False
    return True


def _find(norm: str, needle: str, cursor: int) -> int:
    pos = norm.find(needle, cursor)
    while pos >= 0 and not _at_boundary(norm, pos, pos + len(needle)):
        pos = norm.find(needle, pos + 1)
    return pos


def align_template(template: str, regenerated: str, mode: CorrectionMode = CorrectionMode.FULL_SEQUENCE) -> FillResult:
    segments = [normalize(s) for s in split_template(template)]
    raw_segments = split_template(template)
    k = len(segments) - 1
    norm, idx = _normalized_with_map(regenerated)

    # (start, end) of each segment match in norm
    bounds: list[tuple[int, int]] = []
    cursor = 0
    for i, seg in enumerate(segments):
        if seg:
            pos = _find(norm, seg, cursor)
            if i == k and pos >= 0:
                # prefer the last occurrence for the trailing context
                nxt = _find(norm, seg, pos + 1)
                while nxt >= 0:
                    pos, nxt = nxt, _find(norm, seg, nxt + 1)
            if pos < 0:
                return FillResult((), regenerated, mode, alignment_ok=False)
            bounds.append((pos, pos + len(seg)))
        elif i == 0:
            bounds.append((0, 0))
        elif i == k:
            bounds.append((len(norm), len(norm)))
        elif raw_segments[i]:
            # whitespace-only separator: the left slot takes one token
            sp = norm.find(" ", cursor + 1)
            if sp < 0:
                return FillResult((), regenerated, mode, alignment_ok=False)
            bounds.append((sp, sp + 1))
        else:
            bounds.append((cursor, cursor))
        cursor = bounds[-1][1]

    fills = []
    for (_, left_end), (right_start, _) in zip(bounds, bounds[1:]):
        fills.append(regenerated[idx[left_end]:idx[right_start]].strip())
    return FillResult(tuple(fills), regenerated, mode, alignment_ok=True)


def align_full_sequence(masked: MaskedHypothesis, regenerated: str) -> FillResult:
    """Recover per-slot fills from a regenerated sentence by matching the
    template's literal context segments left to right (case-insensitive,
    whitespace-normalized).  A context segment that cannot be found yields
    ``alignment_ok=False`` with the raw output preserved."""
    if masked.mode_hint is not CorrectionMode.FULL_SEQUENCE:
        raise ValueError("align_full_sequence needs a FULL_SEQUENCE masked hypothesis")
    return align_template(masked.template, regenerated)
