"""Dataset distillation: keep (document, summary sentence) pairs that clear
every factual-consistency threshold, and route discarded pairs with low
ROUGE-2 precision into an alert set whose factors become ``<unk>``."""
from __future__ import annotations

import enum
import json
import string
import subprocess
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .factors import FactualFactor, Tagger, extract_factors, rule_based_tag

FILTER_METRICS = ("dae", "summac", "cloze")
ROUGE_METRIC = "rouge2p"


class ConfigError(ValueError):
    pass


class AdapterError(RuntimeError):
    def __init__(self, adapter: str, message: str):
        super().__init__(f"{adapter}: {message}")
        self.adapter = adapter


class Decision(str, enum.Enum):
    KEPT = "KEPT"
    DISCARDED = "DISCARDED"
    ALERT = "ALERT"
    UNSCORED = "UNSCORED"


# --- ROUGE-2 precision -----------------------------------------------------------

def _is_punct(c: str) -> bool:
    return c in string.punctuation or unicodedata.category(c).startswith("P")


def rouge_tokens(text: str) -> list[str]:
    out = []
    for tok in text.lower().split():
        i, j = 0, len(tok)
        while i < j and _is_punct(tok[i]):
            i += 1
        while j > i and _is_punct(tok[j - 1]):
            j -= 1
        if i < j:
            out.append(tok[i:j])
    return out


def rouge2_precision(candidate: str, reference: str) -> float:
    """Clipped bigram precision of ``candidate`` against ``reference``."""
    cand = rouge_tokens(candidate)
    if len(cand) < 2:
        return 0.0
    ref = rouge_tokens(reference)
    cand_bigrams = Counter(zip(cand, cand[1:]))
    ref_bigrams = Counter(zip(ref, ref[1:]))
    overlap = sum((cand_bigrams & ref_bigrams).values())
    return overlap / sum(cand_bigrams.values())


# --- thresholds --------------------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    alpha_dae: float
    alpha_summac: float
    alpha_cloze: float
    alpha_rouge: float
    dataset_label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.alpha_rouge <= 1.0:
            raise ConfigError(f"alpha_rouge must lie in [0, 1], got {self.alpha_rouge}")

    def for_metric(self, metric: str) -> float:
        return {"dae": self.alpha_dae, "summac": self.alpha_summac, "cloze": self.alpha_cloze,
                ROUGE_METRIC: self.alpha_rouge}[metric]

    def to_dict(self) -> dict:
        return {"dataset_label": self.dataset_label, "alpha_dae": self.alpha_dae, "alpha_summac": self.alpha_summac,
                "alpha_cloze": self.alpha_cloze, "alpha_rouge": self.alpha_rouge}


CNNDM = Thresholds(0.70, 0.45, 0.70, 0.30, "cnndm")
XSUM = Thresholds(0.50, 0.02, 0.60, 0.15, "xsum")
PRESETS = {"cnndm": CNNDM, "xsum": XSUM}


def load_thresholds(path: str | Path) -> Thresholds:
    """Read a flat ``key = value`` file (``#`` comments allowed)."""
    values: dict[str, str] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=") if "=" in line else line.partition(":")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key = value")
        values[key.strip()] = value.strip()
    missing = [k for k in ("alpha_dae", "alpha_summac", "alpha_cloze", "alpha_rouge") if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing {', '.join(missing)}")
    try:
        return Thresholds(
            float(values["alpha_dae"]), float(values["alpha_summac"]), float(values["alpha_cloze"]),
            float(values["alpha_rouge"]), values.get("dataset_label", ""),
        )
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


# --- filtering ----------------------------------------------------------------------

def filter_record(scores: Mapping[str, float], thresholds: Thresholds) -> Decision:
    """KEPT iff no filtering metric falls strictly below its threshold."""
    for metric in FILTER_METRICS:
        if metric not in scores:
            raise ConfigError(f"missing metric {metric!r}")
    if all(scores[m] >= thresholds.for_metric(m) for m in FILTER_METRICS):
        return Decision.KEPT
    return Decision.DISCARDED


def failed_metrics(scores: Mapping[str, float], thresholds: Thresholds) -> list[str]:
    return [m for m in FILTER_METRICS if scores[m] < thresholds.for_metric(m)]


# --- metric adapters --------------------------------------------------------------

class MetricAdapter:
    """One record in, one score out.  ``score_range`` is informational."""

    name = "metric"
    score_range: tuple[float, float] = (0.0, 1.0)

    def score(self, record_id: str, document: str, summary_sentence: str) -> float:
        raise NotImplementedError


class ConstantAdapter(MetricAdapter):
    def __init__(self, name: str, value: float = 1.0):
        self.name = name
        self.value = value
        self.calls = 0

    def score(self, record_id, document, summary_sentence):
        self.calls += 1
        return self.value


class CommandAdapter(MetricAdapter):
    """Runs an external scorer per record.

    The command reads one JSON object ``{"id", "document", "summary_sentence"}``
    on stdin and prints ``{"metric", "value"}`` on stdout.
    """

    def __init__(self, name: str, argv: Sequence[str], score_range=(0.0, 1.0), timeout: float = 300.0):
        self.name = name
        self.argv = list(argv)
        self.score_range = tuple(score_range)
        self.timeout = timeout

    def score(self, record_id, document, summary_sentence):
        payload = json.dumps({"id": record_id, "document": document, "summary_sentence": summary_sentence},
                             ensure_ascii=False)
        try:
            proc = subprocess.run(self.argv, input=payload, capture_output=True, text=True,
                                  encoding="utf-8", timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise AdapterError(self.name, str(e)) from e
        if proc.returncode != 0:
            raise AdapterError(self.name, f"exit {proc.returncode}: {proc.stderr.strip()[:300]}")
        try:
            out = json.loads(proc.stdout)
            return float(out["value"])
        except (ValueError, KeyError, TypeError) as e:
            raise AdapterError(self.name, f"bad response {proc.stdout[:200]!r}") from e


@dataclass(frozen=True)
class Pair:
    id: str
    doc_id: str
    summary_sentence: str
    document: str = ""


def score_record(pair: Pair, adapters: Iterable[MetricAdapter]) -> dict[str, float]:
    """Scores from every adapter plus in-core ROUGE-2 precision against the
    document.  Raises :class:`AdapterError` naming the failing adapter."""
    scores: dict[str, float] = {}
    for adapter in adapters:
        try:
            scores[adapter.name] = float(adapter.score(pair.id, pair.document, pair.summary_sentence))
        except AdapterError:
            raise
        except Exception as e:
            raise AdapterError(adapter.name, str(e)) from e
    scores[ROUGE_METRIC] = rouge2_precision(pair.summary_sentence, pair.document)
    return scores


@dataclass
class DistillationRecord:
    id: str
    doc_id: str
    summary_sentence: str
    scores: dict[str, float]
    decision: Decision
    factors: list[FactualFactor] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"id": self.id, "doc_id": self.doc_id, "summary_sentence": self.summary_sentence,
             "scores": self.scores, "decision": self.decision.value,
             "factors": [f.to_dict() for f in self.factors]}
        if self.error:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistillationRecord":
        return cls(str(d["id"]), str(d["doc_id"]), d["summary_sentence"], dict(d.get("scores", {})),
                   Decision(d.get("decision", "KEPT")), [FactualFactor.from_dict(f) for f in d.get("factors", [])],
                   d.get("error"))


def score_pairs(pairs: Iterable[Pair], adapters: Sequence[MetricAdapter]) -> list[DistillationRecord]:
    """Score every pair; adapter failures mark the record UNSCORED instead of
    aborting the batch."""
    out = []
    for pair in pairs:
        try:
            scores = score_record(pair, adapters)
            out.append(DistillationRecord(pair.id, pair.doc_id, pair.summary_sentence, scores, Decision.DISCARDED))
        except AdapterError as e:
            out.append(DistillationRecord(pair.id, pair.doc_id, pair.summary_sentence, {}, Decision.UNSCORED,
                                          error=str(e)))
    return out


@dataclass
class DistillStats:
    total: int = 0
    kept: int = 0
    discarded: int = 0
    alert: int = 0
    unscored: int = 0
    rejections: dict[str, int] = field(default_factory=lambda: {m: 0 for m in FILTER_METRICS})

    @property
    def retention(self) -> float:
        return self.kept / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"total": self.total, "kept": self.kept, "discarded": self.discarded, "alert": self.alert,
                "unscored": self.unscored, "retention": self.retention, "rejections": dict(self.rejections)}


def build_summdsc(
    records: Iterable[DistillationRecord],
    thresholds: Thresholds,
    tagger: Tagger = rule_based_tag,
) -> tuple[list[DistillationRecord], list[DistillationRecord], DistillStats]:
    """Partition scored records into the faithful base set and the alert set.

    Alert records are discarded records whose ROUGE-2 precision is strictly
    below ``alpha_rouge``; their summary factors are extracted for ``<unk>``
    replacement.  Records are processed in id order.  UNSCORED records are
    counted but belong to neither set.
    """
    base, alert = [], []
    stats = DistillStats()
    for rec in sorted(records, key=lambda r: r.id):
        stats.total += 1
        if rec.decision is Decision.UNSCORED:
            stats.unscored += 1
            continue
        try:
            decision = filter_record(rec.scores, thresholds)
        except ConfigError as e:
            raise ConfigError(f"record {rec.id}: {e}") from e
        if decision is Decision.KEPT:
            stats.kept += 1
            base.append(DistillationRecord(rec.id, rec.doc_id, rec.summary_sentence, rec.scores, Decision.KEPT))
            continue
        stats.discarded += 1
        for m in failed_metrics(rec.scores, thresholds):
            stats.rejections[m] += 1
        if ROUGE_METRIC not in rec.scores:
            raise ConfigError(f"record {rec.id}: missing metric {ROUGE_METRIC!r}")
        if rec.scores[ROUGE_METRIC] < thresholds.alpha_rouge:
            stats.alert += 1
            factors = extract_factors(rec.summary_sentence, tagger) if rec.summary_sentence else []
            alert.append(DistillationRecord(rec.id, rec.doc_id, rec.summary_sentence, rec.scores,
                                            Decision.ALERT, factors))
    return base, alert, stats
