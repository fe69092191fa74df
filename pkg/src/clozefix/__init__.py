"""Mask-and-fill factual error correction for summary sentences, plus the
data-distillation and training-corpus tooling around it."""

from .backends import (
    BackendCapabilities,
    BackendError,
    BackendRequest,
    ClozeBackend,
    CommandBackend,
    HttpBackend,
    IdentityBackend,
    OracleBackend,
    ProtocolError,
    ScriptedBackend,
    oracle_fill,
)
from .distill import CNNDM, XSUM, Decision, Thresholds, build_summdsc, filter_record, rouge2_precision
from .factors import UNK, Category, FactualFactor, Hypothesis, SourceDocument, extract_factors, rule_based_tag
from .masking import CorrectionMode, FillResult, MaskedHypothesis, build_masked, merge_fills, render_input
from .pipeline import AlertReason, CorrectionOptions, CorrectionResult, correct, detect_alert, self_diagnose

__version__ = "0.1.0"
