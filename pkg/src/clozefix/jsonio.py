"""JSON-lines reading/writing and the record schemas used by the CLI."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .factors import Hypothesis, Sentence, SourceDocument


@dataclass(frozen=True)
class LineError:
    path: str
    line: int
    error: str

    def to_dict(self) -> dict:
        return {"path": self.path, "line": self.line, "error": self.error}


def iter_jsonl(path: str | Path, errors: list[LineError]) -> Iterator[tuple[int, dict]]:
    """Yield (line number, object); malformed lines are appended to ``errors``."""
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                errors.append(LineError(str(path), n, f"invalid JSON: {e}"))
                continue
            if not isinstance(obj, dict):
                errors.append(LineError(str(path), n, "expected a JSON object"))
                continue
            yield n, obj


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def _require(obj: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise KeyError(f"missing field(s): {', '.join(missing)}")


def document_from_dict(obj: dict) -> SourceDocument:
    _require(obj, "id", "text")
    sentences = tuple(Sentence(s["text"], int(s["start"]), int(s["end"])) for s in obj.get("sentences") or ())
    return SourceDocument(str(obj["id"]), obj["text"], sentences)


def document_to_dict(doc: SourceDocument) -> dict:
    return {"id": doc.id, "text": doc.text,
            "sentences": [{"text": s.text, "start": s.start, "end": s.end} for s in doc.sentences]}


def load_documents(path: str | Path, errors: list[LineError]) -> dict[str, SourceDocument]:
    docs = {}
    for n, obj in iter_jsonl(path, errors):
        try:
            doc = document_from_dict(obj)
        except (KeyError, ValueError, TypeError) as e:
            errors.append(LineError(str(path), n, str(e)))
            continue
        docs[doc.id] = doc
    return docs


def hypothesis_from_dict(obj: dict) -> Hypothesis:
    _require(obj, "id", "doc_id", "text")
    return Hypothesis(str(obj["id"]), str(obj["doc_id"]), obj["text"])


def load_scores(path: str | Path, errors: list[LineError]) -> dict[str, dict[str, float]]:
    """Long-format ``{id, metric, value}`` rows folded into id -> {metric: value}."""
    out: dict[str, dict[str, float]] = {}
    for n, obj in iter_jsonl(path, errors):
        try:
            _require(obj, "id", "metric", "value")
            out.setdefault(str(obj["id"]), {})[str(obj["metric"])] = float(obj["value"])
        except (KeyError, ValueError, TypeError) as e:
            errors.append(LineError(str(path), n, str(e)))
    return out
