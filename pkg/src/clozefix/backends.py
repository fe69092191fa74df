"""Cloze backends.

Every backend turns a :class:`BackendRequest` into a :class:`FillResult`,
producing fills in ascending slot order; the fill for slot k may look at
earlier fills but never at later ones.  Three in-process backends are
provided (document-retrieval oracle, identity, scripted) plus two that speak
the text wire format to an external model (subprocess, HTTP).
"""
from __future__ import annotations

import re
import subprocess
import threading
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .factors import (
    UNK,
    Category,
    FactualFactor,
    SourceDocument,
    Tagger,
    extract_factors,
    rule_based_tag,
)
from .masking import (
    PLACEHOLDER_RE,
    CorrectionMode,
    FillResult,
    align_template,
    fill_template,
    parse_rendered,
    placeholder,
    split_template,
)


class BackendError(RuntimeError):
    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class ProtocolError(BackendError):
    """The backend broke the contract (wrong fill count, malformed response)."""


@dataclass(frozen=True)
class BackendRequest:
    rendered_input: str
    slot_count: int
    mode: CorrectionMode = CorrectionMode.SLOT_FILL
    prefilled: tuple[tuple[int, str], ...] = ()
    # In-process hints; never serialized onto the wire.
    slot_categories: tuple[Category, ...] | None = None
    source_sentence: str | None = None

    def __post_init__(self):
        if self.slot_count < 1:
            raise ValueError("slot_count must be >= 1")
        idx = [i for i, _ in self.prefilled]
        if any(b <= a for a, b in zip(idx, idx[1:])) or any(not 0 <= i < self.slot_count for i in idx):
            raise ValueError(f"prefilled slots must be strictly ascending and < {self.slot_count}: {idx}")
        if self.slot_categories is not None and len(self.slot_categories) != self.slot_count:
            raise ValueError("slot_categories length must equal slot_count")

    @property
    def template(self) -> str:
        return parse_rendered(self.rendered_input)[1]

    @property
    def document_text(self) -> str:
        return parse_rendered(self.rendered_input)[0]


@dataclass(frozen=True)
class BackendCapabilities:
    supports_concurrent_calls: bool = True
    supports_prefill: bool = True
    max_input_chars: int = 1_000_000

    def __post_init__(self):
        if self.max_input_chars <= 0:
            raise ValueError("max_input_chars must be positive")


class ClozeBackend:
    capabilities = BackendCapabilities()

    def fill(self, request: BackendRequest) -> FillResult:
        caps = self.capabilities
        if len(request.rendered_input) > caps.max_input_chars:
            raise ProtocolError(
                f"rendered input has {len(request.rendered_input)} chars, backend accepts {caps.max_input_chars}"
            )
        if request.prefilled and not caps.supports_prefill:
            raise ProtocolError(f"{type(self).__name__} does not support prefilled slots")
        result = self._fill(request)
        if result.alignment_ok and len(result.fills) != request.slot_count:
            raise ProtocolError(f"backend returned {len(result.fills)} fills for {request.slot_count} slots")
        return result

    def _fill(self, request: BackendRequest) -> FillResult:
        raise NotImplementedError


def _finish(request: BackendRequest, fills: Sequence[str]) -> FillResult:
    """Package slot fills according to the request mode."""
    fills = tuple(fills)
    if request.mode is CorrectionMode.SLOT_FILL:
        return FillResult(fills, "\n".join(fills), request.mode)
    regenerated = fill_template(request.template, fills)
    return align_template(request.template, regenerated, request.mode)


def recover_originals(template: str, sentence: str) -> tuple[str, ...] | None:
    """Surfaces that turn ``template`` back into ``sentence``, if any."""
    pattern = "(.*?)".join(re.escape(s) for s in split_template(template))
    m = re.fullmatch(pattern, sentence, flags=re.DOTALL)
    return m.groups() if m else None


# --- identity ----------------------------------------------------------------

class IdentityBackend(ClozeBackend):
    """Answers every slot with the hypothesis's own surface."""

    def _fill(self, request):
        if request.source_sentence is None:
            raise BackendError("identity backend needs request.source_sentence")
        originals = recover_originals(request.template, request.source_sentence)
        if originals is None:
            raise BackendError("template does not match the source sentence")
        fills = list(originals)
        for k, fixed in request.prefilled:
            fills[k] = fixed
        if request.mode is CorrectionMode.FULL_SEQUENCE and not request.prefilled:
            return FillResult(tuple(fills), request.source_sentence, request.mode)
        return _finish(request, fills)


# --- scripted ----------------------------------------------------------------

SlotResponder = Callable[[BackendRequest, int, tuple[str, ...]], str]


@dataclass
class ScriptedCall:
    request: BackendRequest
    # (slot, fills visible when the slot was produced)
    steps: list[tuple[int, tuple[str, ...]]] = field(default_factory=list)

    @property
    def slot_order(self) -> list[int]:
        return [s for s, _ in self.steps]


class ScriptedBackend(ClozeBackend):
    """Test double that replays programmed answers and logs every call.

    ``script`` is either a per-slot responder ``(request, slot, previous) ->
    fill`` or a sequence of canned responses, one per call; a canned response
    is a list of slot fills or, for FULL_SEQUENCE, a regenerated sentence.
    """

    def __init__(self, script: SlotResponder | Sequence[Sequence[str] | str]):
        self._responder = script if callable(script) else None
        self._queue = None if callable(script) else list(script)
        self._lock = threading.Lock()
        self.calls: list[ScriptedCall] = []

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def _fill(self, request):
        call = ScriptedCall(request)
        with self._lock:
            self.calls.append(call)
            canned = None
            if self._queue is not None:
                if not self._queue:
                    raise BackendError("scripted backend ran out of responses")
                canned = self._queue.pop(0)

        if isinstance(canned, str):
            call.steps = [(k, ()) for k in range(request.slot_count)]
            return align_template(request.template, canned, request.mode)

        fixed = dict(request.prefilled)
        fills: list[str] = []
        for k in range(request.slot_count):
            call.steps.append((k, tuple(fills)))
            if k in fixed:
                fills.append(fixed[k])
            elif canned is not None:
                if len(canned) != request.slot_count:
                    raise ProtocolError(f"scripted response has {len(canned)} fills for {request.slot_count} slots")
                fills.append(canned[k])
            else:
                fills.append(self._responder(request, k, tuple(fills)))
        return _finish(request, fills)


def substitute(mapping: dict[str, str], default: str | None = None) -> SlotResponder:
    """Responder that maps each slot's original surface through ``mapping``.

    Unmapped surfaces are echoed back, or replaced by ``default`` if given.
    """

    def respond(request: BackendRequest, slot: int, previous: tuple[str, ...]) -> str:
        originals = recover_originals(request.template, request.source_sentence or "")
        if originals is None:
            raise BackendError("substitute responder needs a matching source_sentence")
        orig = originals[slot]
        return mapping.get(orig, orig if default is None else default)

    return respond


# --- document-retrieval oracle -----------------------------------------------

CONTEXT_WINDOW = 6
REUSE_PENALTY = 0.5
_SLOT = "\x00SLOT"
_TOK = re.compile(r"\w+|[^\w\s]")


def _tokens(text: str) -> list[str]:
    return [t.lower() for t in _TOK.findall(text)]


def _bigrams(seq: Sequence[str]) -> Counter:
    return Counter(zip(seq, seq[1:]))


def compatible(slot_cat: Category | None, cand_cat: Category) -> bool:
    if slot_cat is None or slot_cat is cand_cat:
        return True
    if Category.NOUN_PHRASE in (slot_cat, cand_cat):
        return True
    return Category.OTHER in (slot_cat, cand_cat)


def document_factors(document: SourceDocument, tagger: Tagger = rule_based_tag) -> list[FactualFactor]:
    """Factors of every document sentence, offsets shifted to document level."""
    out = []
    for sent in document.sentences:
        for f in extract_factors(sent.text, tagger):
            out.append(FactualFactor(f.surface, sent.start + f.start, sent.start + f.end, f.category, len(out)))
    return out


@dataclass(frozen=True)
class _Candidate:
    factor: FactualFactor
    context: Counter


def _candidates(document: SourceDocument, doc_factors: Sequence[FactualFactor]) -> list[_Candidate]:
    spans = [(m.start(), m.end(), m.group(0).lower()) for m in _TOK.finditer(document.text)]
    out = []
    for f in sorted(doc_factors, key=lambda f: f.start):
        if f.surface == UNK:
            continue
        inside = [i for i, (s, e, _) in enumerate(spans) if s >= f.start and e <= f.end]
        if not inside:
            continue
        lo, hi = inside[0], inside[-1] + 1
        left = [t for _, _, t in spans[max(0, lo - CONTEXT_WINDOW):lo]]
        right = [t for _, _, t in spans[hi:hi + CONTEXT_WINDOW]]
        out.append(_Candidate(f, _bigrams(left + [_SLOT] + right)))
    return out


def _slot_context(template: str, fills: Sequence[str], slot: int) -> Counter:
    pieces = PLACEHOLDER_RE.split(template)
    seq: list[str] = []
    for i, piece in enumerate(pieces):
        if i % 2 == 0:
            seq.extend(_tokens(piece))
            continue
        k = int(piece)
        if k < slot:
            seq.extend(_tokens(fills[k]))
        elif k == slot:
            at = len(seq)
            seq.append(_SLOT)
        else:
            seq.append(placeholder(k))  # opaque: later slots are invisible
    left = seq[max(0, at - CONTEXT_WINDOW):at]
    right = seq[at + 1:at + 1 + CONTEXT_WINDOW]
    return _bigrams(left + [_SLOT] + right)


def oracle_fill(
    request: BackendRequest,
    document: SourceDocument,
    doc_factors: Sequence[FactualFactor],
) -> FillResult:
    """Fill each slot with the document factor whose surrounding bigrams best
    match the slot's surrounding bigrams.

    Slots are resolved in order and each one sees the fills already chosen
    for earlier slots.  A surface already used by an earlier slot has its
    score halved; ties go to the earliest document position; a best score of
    zero yields ``<unk>``.
    """
    template = request.template
    candidates = _candidates(document, doc_factors)
    fixed = dict(request.prefilled)
    fills: list[str] = []
    used: set[str] = set()
    for k in range(request.slot_count):
        if k in fixed:
            fills.append(fixed[k])
            used.add(fixed[k].lower())
            continue
        ctx = _slot_context(template, fills, k)
        want = request.slot_categories[k] if request.slot_categories else None
        best, best_score = None, 0.0
        for cand in candidates:
            if not compatible(want, cand.factor.category):
                continue
            score = float(sum((ctx & cand.context).values()))
            if cand.factor.surface.lower() in used:
                score *= REUSE_PENALTY
            if score > best_score:
                best, best_score = cand, score
        if best is None:
            fills.append(UNK)
        else:
            fills.append(best.factor.surface)
            used.add(best.factor.surface.lower())
    return _finish(request, fills)


class OracleBackend(ClozeBackend):
    """Runs :func:`oracle_fill` against the document carried in the request."""

    def __init__(self, tagger: Tagger = rule_based_tag):
        self.tagger = tagger
        self._cache: dict[str, tuple[SourceDocument, list[FactualFactor]]] = {}
        self._lock = threading.Lock()

    def _document(self, text: str):
        with self._lock:
            hit = self._cache.get(text)
        if hit is None:
            doc = SourceDocument("request", text)
            hit = (doc, document_factors(doc, self.tagger))
            with self._lock:
                self._cache[text] = hit
        return hit

    def _fill(self, request):
        doc, factors = self._document(request.document_text)
        return oracle_fill(request, doc, factors)


# --- wire format ---------------------------------------------------------------

def encode_request(request: BackendRequest) -> str:
    return f"SLOTS={request.slot_count} MODE={request.mode.value}\n{request.rendered_input}"


_HEADER = re.compile(r"SLOTS=(\d+) MODE=(FULL_SEQUENCE|SLOT_FILL)")


def decode_request(text: str) -> BackendRequest:
    header, _, rendered = text.partition("\n")
    m = _HEADER.fullmatch(header.strip())
    if not m:
        raise ProtocolError(f"bad request header {header!r}")
    return BackendRequest(rendered, int(m.group(1)), CorrectionMode(m.group(2)))


def encode_response(result: FillResult) -> str:
    if result.mode is CorrectionMode.FULL_SEQUENCE:
        return "FULL:" + " ".join(result.raw_output.split("\n"))
    return "SLOTS:\n" + "\n".join(" ".join(f.split("\n")) for f in result.fills)


def decode_response(text: str, request: BackendRequest) -> FillResult:
    if text.startswith("FULL:"):
        regenerated = text[len("FULL:"):].strip()
        return align_template(request.template, regenerated, CorrectionMode.FULL_SEQUENCE)
    if text.startswith("SLOTS:"):
        body = text[len("SLOTS:"):]
        if body.startswith("\n"):
            body = body[1:]
        lines = body.split("\n")
        if lines and lines[-1] == "" and len(lines) == request.slot_count + 1:
            lines.pop()
        if len(lines) != request.slot_count:
            raise ProtocolError(f"response carries {len(lines)} fills for {request.slot_count} slots")
        return FillResult(tuple(l.strip() for l in lines), text, CorrectionMode.SLOT_FILL)
    raise ProtocolError(f"response must start with FULL: or SLOTS:, got {text[:40]!r}")


class CommandBackend(ClozeBackend):
    """One subprocess invocation per request; request on stdin, response on stdout."""

    def __init__(self, argv: Sequence[str], timeout: float = 120.0, capabilities: BackendCapabilities | None = None):
        self.argv = list(argv)
        self.timeout = timeout
        self.capabilities = capabilities or BackendCapabilities(supports_prefill=False)

    def _fill(self, request):
        try:
            proc = subprocess.run(
                self.argv, input=encode_request(request), capture_output=True,
                text=True, encoding="utf-8", timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as e:
            raise BackendError(f"backend command timed out after {self.timeout}s", retryable=True) from e
        except OSError as e:
            raise BackendError(f"cannot run backend command: {e}") from e
        if proc.returncode != 0:
            raise BackendError(f"backend command exited {proc.returncode}: {proc.stderr.strip()[:500]}", retryable=True)
        return decode_response(proc.stdout, request)


class HttpBackend(ClozeBackend):
    """POSTs the wire request as text/plain and reads the wire response."""

    def __init__(self, url: str, timeout: float = 120.0, capabilities: BackendCapabilities | None = None):
        self.url = url
        self.timeout = timeout
        self.capabilities = capabilities or BackendCapabilities(supports_concurrent_calls=False, supports_prefill=False)

    def _fill(self, request):
        req = urllib.request.Request(
            self.url, data=encode_request(request).encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"}, method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = resp.read().decode("utf-8")
        except urllib.error.HTTPError as e:
            raise BackendError(f"backend HTTP {e.code}", retryable=e.code >= 500) from e
        except (urllib.error.URLError, TimeoutError) as e:
            raise BackendError(f"backend unreachable: {e}", retryable=True) from e
        return decode_response(body, request)
