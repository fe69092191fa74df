"""Training examples for an external cloze model.

Base examples mask a seeded random subset of a faithful sentence's factors;
alert examples mask every factor and expect ``<unk>`` for each.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .factors import UNK, FactualFactor, SourceDocument
from .masking import CorrectionMode, build_masked, fill_template, placeholder, render_input

DEFAULT_MASK_RATE = 0.5


@dataclass(frozen=True)
class TrainingExample:
    id: str
    input: str
    target: str
    mode: CorrectionMode
    mask_indices: tuple[int, ...]
    is_alert: bool = False

    def to_dict(self) -> dict:
        return {"id": self.id, "input": self.input, "target": self.target, "mode": self.mode.value,
                "mask_indices": list(self.mask_indices), "is_alert": self.is_alert}


class Skip:
    """Returned instead of an example when a sentence has no factors."""

    def __init__(self, reason: str):
        self.reason = reason

    def __repr__(self):
        return f"Skip({self.reason!r})"


def slot_target(fills: Sequence[str]) -> str:
    return " ".join(f"{placeholder(k)} {fill}" for k, fill in enumerate(fills))


def mask_count(k: int, mask_rate: float) -> int:
    # half-up rounding, at least one factor
    return min(k, max(1, math.floor(mask_rate * k + 0.5)))


def _example(example_id, document, sentence, factors, selection, fills, mode, is_alert, max_doc_chars):
    masked = build_masked(sentence, factors, selection, mode)
    if mode is CorrectionMode.SLOT_FILL:
        target = slot_target(fills)
    else:
        target = fill_template(masked.template, fills)
    return TrainingExample(example_id, render_input(document, masked, max_doc_chars), target, mode,
                           tuple(f.index for f in masked.factors), is_alert)


def make_training_example(
    document: SourceDocument | str,
    summary_sentence: str,
    factors: Sequence[FactualFactor],
    mask_rate: float = DEFAULT_MASK_RATE,
    seed: int | str = 0,
    mode: CorrectionMode = CorrectionMode.SLOT_FILL,
    example_id: str = "",
    max_doc_chars: int = 4000,
) -> TrainingExample | Skip:
    if not 0 < mask_rate <= 1:
        raise ValueError(f"mask_rate must be in (0, 1], got {mask_rate}")
    if not factors:
        return Skip("no factual factors")
    n = mask_count(len(factors), mask_rate)
    selection = sorted(random.Random(seed).sample(range(len(factors)), n))
    fills = [factors[i].surface for i in selection]
    return _example(example_id, document, summary_sentence, factors, selection, fills, mode, False, max_doc_chars)


def make_alert_example(
    document: SourceDocument | str,
    summary_sentence: str,
    factors: Sequence[FactualFactor],
    mode: CorrectionMode = CorrectionMode.SLOT_FILL,
    example_id: str = "",
    max_doc_chars: int = 4000,
) -> TrainingExample | Skip:
    if not factors:
        return Skip("no factual factors")
    selection = range(len(factors))
    return _example(example_id, document, summary_sentence, factors, selection, [UNK] * len(factors), mode, True,
                    max_doc_chars)


def record_seed(seed: int, record_id: str) -> str:
    # string seeds hash deterministically in random.Random
    return f"{seed}:{record_id}"


def select_alerts(alert_ids: Iterable[str], fraction: float, seed: int) -> set[str]:
    """Deterministic subset of alert record ids used for mixing."""
    ids = sorted(alert_ids)
    if fraction >= 1:
        return set(ids)
    n = round(fraction * len(ids))
    return set(random.Random(f"{seed}:alerts").sample(ids, n))


def dumps(example: TrainingExample) -> str:
    return json.dumps(example.to_dict(), ensure_ascii=False)
