"""Command-line entry point: ``clozefix {correct,distill,build-train,report,rouge2p}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import distill as ds
from .backends import (
    ClozeBackend,
    CommandBackend,
    HttpBackend,
    IdentityBackend,
    OracleBackend,
    decode_request,
    encode_response,
)
from .factors import Category, FactualFactor, extract_factors
from .jsonio import LineError, hypothesis_from_dict, iter_jsonl, load_documents, load_scores, write_jsonl
from .masking import CorrectionMode
from .pipeline import CorrectionError, CorrectionOptions, correct
from .reports import ScoredSample, bins_csv, error_type_averages, error_type_csv, percentile_bins
from .training import DEFAULT_MASK_RATE, Skip, make_alert_example, make_training_example, record_seed, select_alerts

log = logging.getLogger("clozefix")

BACKEND_CMD_ENV = "CLOZEFIX_BACKEND_CMD"
BACKEND_URL_ENV = "CLOZEFIX_BACKEND_URL"
ALERT_DISPOSITIONS = ("flag", "drop", "separate-file")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    docs: Path | None = None
    hypotheses: Path | None = None
    pairs: Path | None = None
    scores: Path | None = None
    base: Path | None = None
    alert: Path | None = None
    out: Path | None = None
    out_dir: Path | None = None
    alerts_out: Path | None = None
    errors_out: Path | None = None
    backend: str = "oracle"
    backend_cmd: str | None = None
    backend_url: str | None = None
    mode: CorrectionMode = CorrectionMode.SLOT_FILL
    self_diagnosis: bool = True
    alert_on_alignment_failure: bool = False
    max_doc_chars: int = 4000
    categories: frozenset[Category] = frozenset(Category)
    thresholds: ds.Thresholds = ds.CNNDM
    adapters: list[ds.MetricAdapter] = field(default_factory=list)
    seed: int = 0
    mask_rate: float = DEFAULT_MASK_RATE
    alert_fraction: float = 1.0
    workers: int = 1
    alert_disposition: str = "flag"

    def check_inputs(self, *names: str) -> None:
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise UsageError(f"--{name.replace('_', '-')} is required")
            if not Path(path).exists():
                raise UsageError(f"{path}: no such file")


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}.{suffix}.jsonl")


def make_backend(config: RunConfig) -> ClozeBackend:
    if config.backend == "oracle":
        return OracleBackend()
    if config.backend == "identity":
        return IdentityBackend()
    if config.backend == "command":
        cmd = config.backend_cmd or os.environ.get(BACKEND_CMD_ENV)
        if not cmd:
            raise UsageError(f"command backend needs --backend-cmd or ${BACKEND_CMD_ENV}")
        return CommandBackend(shlex.split(cmd))
    if config.backend == "http":
        url = config.backend_url or os.environ.get(BACKEND_URL_ENV)
        if not url:
            raise UsageError(f"http backend needs --backend-url or ${BACKEND_URL_ENV}")
        return HttpBackend(url)
    raise UsageError(f"unknown backend {config.backend!r}")


def _ordered_map(fn, items: Sequence, workers: int) -> list:
    # executor.map yields in input order, so output never depends on scheduling
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


# --- correct ------------------------------------------------------------------------

def cmd_correct(config: RunConfig, backend: ClozeBackend | None = None) -> dict:
    config.check_inputs("docs", "hypotheses")
    if config.out is None:
        raise UsageError("--out is required")
    if config.alert_disposition not in ALERT_DISPOSITIONS:
        raise UsageError(f"alert disposition must be one of {ALERT_DISPOSITIONS}")
    backend = backend or make_backend(config)
    options = CorrectionOptions(config.mode, config.self_diagnosis, config.alert_on_alignment_failure,
                                config.max_doc_chars, config.categories)

    line_errors: list[LineError] = []
    docs = load_documents(config.docs, line_errors)
    items: list[dict] = []
    for n, obj in iter_jsonl(config.hypotheses, line_errors):
        try:
            items.append({"hyp": hypothesis_from_dict(obj), "line": n})
        except (KeyError, TypeError) as e:
            items.append({"error": str(e), "id": str(obj.get("id", f"line:{n}")), "doc_id": obj.get("doc_id")})

    def run(item: dict) -> dict:
        if "error" in item:
            return {"id": item["id"], "doc_id": item["doc_id"], "error": item["error"]}
        hyp = item["hyp"]
        doc = docs.get(hyp.doc_id)
        if doc is None:
            return {"id": hyp.id, "doc_id": hyp.doc_id, "error": f"unknown doc_id {hyp.doc_id!r}"}
        try:
            result = correct(doc, hyp, backend, options)
        except (CorrectionError, ValueError) as e:
            return {"id": hyp.id, "doc_id": hyp.doc_id, "error": str(e)}
        return {"id": hyp.id, "doc_id": hyp.doc_id, "original": hyp.text, **result.to_dict()}

    results = _ordered_map(run, items, config.workers)
    hyp_errors = [e for e in line_errors if Path(e.path) == Path(config.hypotheses)]
    errors = [r for r in results if "error" in r] + [
        {"id": f"line:{e.line}", "doc_id": None, "error": e.error} for e in hyp_errors
    ]
    ok = [r for r in results if "error" not in r]
    alerts = [r for r in ok if r["alert"]]
    clean = [r for r in ok if not r["alert"]]

    errors_out = config.errors_out or _sibling(config.out, "errors")
    main = ok
    if config.alert_disposition != "flag":
        main = clean
    write_jsonl(config.out, main)
    if config.alert_disposition == "separate-file":
        write_jsonl(config.alerts_out or _sibling(config.out, "alerts"), alerts)
    write_jsonl(errors_out, errors)

    summary = {
        "total": len(results) + len(hyp_errors),
        "corrected": sum(r["corrected"] != r["original"] for r in clean),
        "unchanged": sum(r["corrected"] == r["original"] for r in clean),
        "alerts": len(alerts),
        "errors": len(errors),
        "dropped_alerts": len(alerts) if config.alert_disposition == "drop" else 0,
        "document_errors": [e.to_dict() for e in line_errors if e not in hyp_errors],
    }
    return summary


# --- distill --------------------------------------------------------------------------

def _load_pairs(config: RunConfig, errors: list[LineError]) -> list[ds.Pair]:
    docs = load_documents(config.docs, errors) if config.docs else {}
    pairs = []
    for n, obj in iter_jsonl(config.pairs, errors):
        if not all(k in obj for k in ("id", "doc_id", "summary_sentence")):
            errors.append(LineError(str(config.pairs), n, "pair needs id, doc_id, summary_sentence"))
            continue
        doc = docs.get(str(obj["doc_id"]))
        pairs.append(ds.Pair(str(obj["id"]), str(obj["doc_id"]), obj["summary_sentence"], doc.text if doc else ""))
    return pairs


def cmd_distill(config: RunConfig) -> dict:
    config.check_inputs("pairs")
    if config.out_dir is None:
        raise UsageError("--out-dir is required")
    if config.scores is None and not config.adapters:
        raise UsageError("distill needs precomputed --scores or at least one --adapter")
    line_errors: list[LineError] = []
    pairs = _load_pairs(config, line_errors)

    if config.scores is not None:
        config.check_inputs("scores")
        table = load_scores(config.scores, line_errors)
        records = []
        for p in pairs:
            scores = dict(table.get(p.id, {}))
            if ds.ROUGE_METRIC not in scores and p.document:
                scores[ds.ROUGE_METRIC] = ds.rouge2_precision(p.summary_sentence, p.document)
            missing = [m for m in (*ds.FILTER_METRICS, ds.ROUGE_METRIC) if m not in scores]
            if missing:
                records.append(ds.DistillationRecord(p.id, p.doc_id, p.summary_sentence, scores,
                                                     ds.Decision.UNSCORED, error=f"missing metric(s) {missing}"))
            else:
                records.append(ds.DistillationRecord(p.id, p.doc_id, p.summary_sentence, scores,
                                                     ds.Decision.DISCARDED))
    else:
        records = [r for chunk in _ordered_map(lambda p: ds.score_pairs([p], config.adapters), pairs, config.workers)
                   for r in chunk]

    base, alert, stats = ds.build_summdsc(records, config.thresholds)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "base.jsonl", (r.to_dict() for r in base))
    write_jsonl(out / "alert.jsonl", (r.to_dict() for r in alert))
    report = {
        **stats.to_dict(),
        "thresholds": config.thresholds.to_dict(),
        "unscored_records": [{"id": r.id, "error": r.error} for r in sorted(records, key=lambda r: r.id)
                             if r.decision is ds.Decision.UNSCORED],
        "line_errors": [e.to_dict() for e in line_errors],
    }
    (out / "stats.json").write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return report


# --- build-train ----------------------------------------------------------------------

def cmd_build_train(config: RunConfig) -> dict:
    config.check_inputs("base", "docs")
    if config.alert is not None:
        config.check_inputs("alert")
    if config.out is None:
        raise UsageError("--out is required")
    line_errors: list[LineError] = []
    docs = load_documents(config.docs, line_errors)

    def load(path):
        return [ds.DistillationRecord.from_dict(obj) for _, obj in iter_jsonl(path, line_errors)]

    base = sorted(load(config.base), key=lambda r: r.id)
    alert = sorted(load(config.alert), key=lambda r: r.id) if config.alert else []
    chosen = select_alerts((r.id for r in alert), config.alert_fraction, config.seed)

    examples, skipped, missing_docs = [], 0, []
    for rec in base:
        doc = docs.get(rec.doc_id)
        if doc is None:
            missing_docs.append(rec.id)
            continue
        factors = extract_factors(rec.summary_sentence)
        ex = make_training_example(doc, rec.summary_sentence, factors, config.mask_rate,
                                   record_seed(config.seed, rec.id), config.mode, rec.id, config.max_doc_chars)
        if isinstance(ex, Skip):
            skipped += 1
        else:
            examples.append(ex)
    for rec in alert:
        if rec.id not in chosen:
            continue
        doc = docs.get(rec.doc_id)
        if doc is None:
            missing_docs.append(rec.id)
            continue
        factors: list[FactualFactor] = rec.factors or extract_factors(rec.summary_sentence)
        ex = make_alert_example(doc, rec.summary_sentence, factors, config.mode, f"alert:{rec.id}",
                                config.max_doc_chars)
        if isinstance(ex, Skip):
            skipped += 1
        else:
            examples.append(ex)

    examples.sort(key=lambda e: e.id)
    write_jsonl(config.out, (e.to_dict() for e in examples))
    return {
        "examples": len(examples),
        "alert_examples": sum(e.is_alert for e in examples),
        "skipped": skipped,
        "missing_docs": missing_docs,
        "line_errors": [e.to_dict() for e in line_errors],
    }


# --- report / rouge2p -----------------------------------------------------------------

def _load_samples(path: Path) -> tuple[list[ScoredSample], list[LineError]]:
    errors: list[LineError] = []
    samples = []
    for n, obj in iter_jsonl(path, errors):
        try:
            samples.append(ScoredSample.from_dict(obj))
        except (KeyError, TypeError, ValueError) as e:
            errors.append(LineError(str(path), n, str(e)))
    return samples, errors


def cmd_report(kind: str, samples_path: Path, out: Path | None, anchor: str | None = None, n_bins: int = 5) -> str:
    samples, errors = _load_samples(samples_path)
    if errors:
        raise UsageError("; ".join(f"line {e.line}: {e.error}" for e in errors))
    if kind == "error-types":
        text = error_type_csv(error_type_averages(samples))
    else:
        if not anchor:
            raise UsageError("--anchor is required for bins")
        text = bins_csv(percentile_bins(samples, anchor, n_bins))
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    return text


def _serve_stdio(backend_name: str) -> None:
    backend = {"oracle": OracleBackend}[backend_name]()
    request = decode_request(sys.stdin.read())
    sys.stdout.write(encode_response(backend.fill(request)))


# --- argument parsing -----------------------------------------------------------------

def _categories(value: str) -> frozenset[Category]:
    try:
        return frozenset(Category(v.strip().upper()) for v in value.split(",") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clozefix", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("correct", help="correct hypothesis sentences against their documents")
    c.add_argument("--docs", type=Path, required=True)
    c.add_argument("--hypotheses", "--hyps", type=Path, required=True)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--alerts-out", type=Path)
    c.add_argument("--errors-out", type=Path)
    c.add_argument("--backend", choices=("oracle", "identity", "command", "http"), default="oracle")
    c.add_argument("--backend-cmd", help=f"command for the wire backend (or ${BACKEND_CMD_ENV})")
    c.add_argument("--backend-url", help=f"URL for the wire backend (or ${BACKEND_URL_ENV})")
    c.add_argument("--mode", type=CorrectionMode, default=CorrectionMode.SLOT_FILL,
                   metavar="{" + ",".join(m.value for m in CorrectionMode) + "}")
    c.add_argument("--no-self-diagnosis", dest="self_diagnosis", action="store_false")
    c.add_argument("--alert-on-alignment-failure", action="store_true")
    c.add_argument("--max-doc-chars", type=int, default=4000)
    c.add_argument("--categories", type=_categories, default=frozenset(Category))
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--alerts", dest="alert_disposition", choices=ALERT_DISPOSITIONS, default="flag")

    d = sub.add_parser("distill", help="filter scored pairs into base and alert sets")
    d.add_argument("--pairs", type=Path, required=True)
    d.add_argument("--docs", type=Path)
    d.add_argument("--scores", type=Path)
    d.add_argument("--adapter", action="append", default=[], metavar="NAME=COMMAND")
    g = d.add_mutually_exclusive_group()
    g.add_argument("--thresholds", type=Path, help="flat key = value file")
    g.add_argument("--preset", choices=sorted(ds.PRESETS), default="cnndm")
    d.add_argument("--out-dir", type=Path, required=True)
    d.add_argument("--workers", type=int, default=1)

    t = sub.add_parser("build-train", help="emit cloze training examples as JSON lines")
    t.add_argument("--base", type=Path, required=True)
    t.add_argument("--alert", type=Path)
    t.add_argument("--docs", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--mask-rate", type=float, default=DEFAULT_MASK_RATE)
    t.add_argument("--alert-fraction", type=float, default=1.0)
    t.add_argument("--mode", type=CorrectionMode, default=CorrectionMode.SLOT_FILL,
                   metavar="{" + ",".join(m.value for m in CorrectionMode) + "}")
    t.add_argument("--max-doc-chars", type=int, default=4000)

    r = sub.add_parser("report", help="metric analysis tables as CSV")
    r.add_argument("kind", choices=("error-types", "bins"))
    r.add_argument("--samples", type=Path, required=True, help="JSONL {id, scores: {metric: value}, label}")
    r.add_argument("--anchor")
    r.add_argument("--bins", type=int, default=5)
    r.add_argument("--out", type=Path)

    q = sub.add_parser("rouge2p", help="ROUGE-2 precision of candidate(s) against reference(s)")
    q.add_argument("--candidate")
    q.add_argument("--reference")
    q.add_argument("--pairs", type=Path, help="JSONL {id, candidate, reference}")

    s = sub.add_parser("backend-stdio", help="answer one wire-format request from stdin")
    s.add_argument("--backend", choices=("oracle",), default="oracle")
    return p


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    for key, value in vars(args).items():
        if hasattr(cfg, key):
            setattr(cfg, key, value)
    if getattr(args, "thresholds", None):
        cfg.thresholds = ds.load_thresholds(args.thresholds)
    elif getattr(args, "preset", None):
        cfg.thresholds = ds.PRESETS[args.preset]
    adapters = []
    for spec in getattr(args, "adapter", []) or []:
        name, sep, cmd = spec.partition("=")
        if not sep or not cmd:
            raise UsageError(f"--adapter expects NAME=COMMAND, got {spec!r}")
        adapters.append(ds.CommandAdapter(name, shlex.split(cmd)))
    cfg.adapters = adapters
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "backend-stdio":
            _serve_stdio(args.backend)
            return 0
        if args.command == "rouge2p":
            if args.pairs:
                errors: list[LineError] = []
                for _, obj in iter_jsonl(args.pairs, errors):
                    value = ds.rouge2_precision(obj.get("candidate", ""), obj.get("reference", ""))
                    print(json.dumps({"id": obj.get("id"), "rouge2p": value}))
                for e in errors:
                    log.warning("%s:%d: %s", e.path, e.line, e.error)
            elif args.candidate is not None and args.reference is not None:
                print(ds.rouge2_precision(args.candidate, args.reference))
            else:
                raise UsageError("give --candidate and --reference, or --pairs")
            return 0
        if args.command == "report":
            text = cmd_report(args.kind, args.samples, args.out, args.anchor, args.bins)
            if args.out is None:
                sys.stdout.write(text)
            return 0

        cfg = _config(args)
        run = {"correct": cmd_correct, "distill": cmd_distill, "build-train": cmd_build_train}[args.command]
        print(json.dumps(run(cfg), ensure_ascii=False))
        return 0
    except (UsageError, ds.ConfigError, OSError, ValueError) as e:
        print(f"clozefix: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
