"""Mask-and-fill correction of a single hypothesis sentence."""
from __future__ import annotations

import enum
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backends import BackendError, BackendRequest, ClozeBackend
from .factors import (
    UNK,
    Category,
    FactualFactor,
    Hypothesis,
    SourceDocument,
    Tagger,
    extract_factors,
    rule_based_tag,
)
from .masking import (
    Change,
    CorrectionMode,
    FillResult,
    MaskedHypothesis,
    build_masked,
    merge_fills,
    normalize,
    render_input,
)


class AlertReason(str, enum.Enum):
    NONE = "NONE"
    UNK_FILL = "UNK_FILL"
    ALIGNMENT_FAILURE = "ALIGNMENT_FAILURE"


class CorrectionError(RuntimeError):
    def __init__(self, message: str, doc_id: str | None = None, hypothesis_id: str | None = None):
        super().__init__(message)
        self.doc_id = doc_id
        self.hypothesis_id = hypothesis_id


@dataclass(frozen=True)
class CorrectionOptions:
    mode: CorrectionMode = CorrectionMode.SLOT_FILL
    self_diagnosis: bool = True
    alert_on_alignment_failure: bool = False
    max_doc_chars: int = 4000
    factor_categories: frozenset[Category] = frozenset(Category)
    probe_workers: int = 1

    def __post_init__(self):
        if self.max_doc_chars <= 0:
            raise ValueError("max_doc_chars must be positive")
        if not self.factor_categories:
            raise ValueError("factor_categories must not be empty")


@dataclass
class CorrectionResult:
    corrected: str
    changes: list[Change] = field(default_factory=list)
    # None means every factor was masked (self-diagnosis off)
    diagnosis_kept: tuple[int, ...] | None = None
    alert: bool = False
    alert_reason: AlertReason = AlertReason.NONE
    raw_backend_output: str = ""
    factors: list[FactualFactor] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "corrected": self.corrected,
            "changes": [c.to_dict() for c in self.changes],
            "diagnosis_kept": "ALL" if self.diagnosis_kept is None else list(self.diagnosis_kept),
            "alert": self.alert,
            "alert_reason": self.alert_reason.value,
        }


# Backends that cannot take concurrent calls get one lock each.
_serial_locks: dict[int, threading.Lock] = {}
_serial_guard = threading.Lock()


def call_backend(backend: ClozeBackend, request: BackendRequest) -> FillResult:
    if backend.capabilities.supports_concurrent_calls:
        return backend.fill(request)
    with _serial_guard:
        lock = _serial_locks.setdefault(id(backend), threading.Lock())
    with lock:
        return backend.fill(request)


def _request(document, masked: MaskedHypothesis, options: CorrectionOptions, prefilled=()) -> BackendRequest:
    return BackendRequest(
        render_input(document, masked, options.max_doc_chars),
        masked.slot_count,
        options.mode,
        tuple(prefilled),
        slot_categories=tuple(f.category for f in masked.factors),
        source_sentence=masked.original,
    )


def detect_alert(outcome: FillResult | str, options: CorrectionOptions | None = None) -> tuple[bool, AlertReason]:
    """Post-alert: any ``<unk>`` fill (or ``<unk>`` in the text) raises an
    alert; an unaligned full-sequence output does so only when the options
    ask for it."""
    options = options or CorrectionOptions()
    if isinstance(outcome, str):
        return (True, AlertReason.UNK_FILL) if UNK in outcome else (False, AlertReason.NONE)
    if outcome.has_unk():
        return True, AlertReason.UNK_FILL
    if not outcome.alignment_ok and options.alert_on_alignment_failure:
        return True, AlertReason.ALIGNMENT_FAILURE
    return False, AlertReason.NONE


def self_diagnose(
    document: SourceDocument,
    hypothesis: Hypothesis,
    factors: Sequence[FactualFactor],
    backend: ClozeBackend,
    options: CorrectionOptions,
    candidates: Sequence[int] | None = None,
) -> tuple[int, ...]:
    """Probe each factor alone and keep those the backend would change.

    Each probe masks only factor i, leaving the others as literal text; a
    factor is kept when the answer differs from its surface after lowercasing
    and whitespace collapsing.
    """
    candidates = list(range(len(factors))) if candidates is None else list(candidates)

    def probe(i: int) -> bool:
        masked = build_masked(hypothesis, factors, [i], options.mode)
        try:
            result = call_backend(backend, _request(document, masked, options))
        except BackendError as e:
            raise CorrectionError(
                f"diagnosis probe for factor {i} failed: {e}", document.id, hypothesis.id
            ) from e
        if not result.alignment_ok:
            # a probe that cannot be read back is treated as a disagreement
            return True
        return normalize(result.fills[0]) != normalize(factors[i].surface)

    if options.probe_workers > 1 and backend.capabilities.supports_concurrent_calls and len(candidates) > 1:
        with ThreadPoolExecutor(options.probe_workers) as pool:
            verdicts = list(pool.map(probe, candidates))
    else:
        verdicts = [probe(i) for i in candidates]
    return tuple(i for i, keep in zip(candidates, verdicts) if keep)


def correct(
    document: SourceDocument,
    hypothesis: Hypothesis,
    backend: ClozeBackend,
    options: CorrectionOptions | None = None,
    tagger: Tagger = rule_based_tag,
    prefilled: Sequence[tuple[int, str]] = (),
) -> CorrectionResult:
    """Correct one hypothesis sentence against its document.

    ``prefilled`` pins fills for slots of the joint pass (slot numbers refer
    to the masked factors in order); it is used to disturb decoding.
    """
    options = options or CorrectionOptions()
    if hypothesis.doc_id != document.id:
        raise CorrectionError(
            f"hypothesis {hypothesis.id!r} refers to {hypothesis.doc_id!r}, not {document.id!r}",
            document.id, hypothesis.id,
        )
    factors = extract_factors(hypothesis.text, tagger)
    targets = [f.index for f in factors if f.category in options.factor_categories]
    if not targets:
        return CorrectionResult(hypothesis.text, factors=factors,
                                diagnosis_kept=() if options.self_diagnosis else None)

    kept: tuple[int, ...] | None = None
    if options.self_diagnosis:
        kept = self_diagnose(document, hypothesis, factors, backend, options, targets)
        if not kept:
            return CorrectionResult(hypothesis.text, diagnosis_kept=kept, factors=factors)
    selection = kept if kept is not None else targets

    masked = build_masked(hypothesis, factors, selection, options.mode)
    try:
        result = call_backend(backend, _request(document, masked, options, prefilled))
    except BackendError as e:
        raise CorrectionError(f"backend failed: {e}", document.id, hypothesis.id) from e

    alert, reason = detect_alert(result, options)
    if result.alignment_ok:
        try:
            corrected, changes = merge_fills(masked, result)
        except ValueError as e:
            raise CorrectionError(f"merge failed: {e}", document.id, hypothesis.id) from e
    else:
        corrected, changes = hypothesis.text, []
        if UNK in result.raw_output:
            corrected = result.raw_output
    if not alert:
        alert, reason = detect_alert(corrected, options)
    return CorrectionResult(corrected, changes, kept, alert, reason, result.raw_output, factors)
