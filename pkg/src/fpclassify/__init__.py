"""Incremental similarity-based labeling of browser scripts.

Scripts are compared by the set of fingerprinting-relevant browser APIs
they touch. Known fingerprinters form a growing matrix; exact Jaccard
similarity against that matrix, plus two automatic rules and a human
review loop, assigns every script one of three labels: fingerprinter,
non-fingerprinter or unknown.
"""

from .classifier import (
    AutoDecision,
    AutoUnknownProvider,
    ClassificationEngine,
    DecisionRequest,
    LabelEvent,
    LabelMethod,
    PassOutcome,
    ScriptedOracle,
    SessionState,
    auto_decide,
    classify,
)
from .evidence import EvidenceBundle, FilterSet, build_evidence
from .ingest import (
    AttributeCatalog,
    FingerprinterMatrix,
    GroundTruthManifest,
    build_corpus,
    build_matrix,
    parse_trace_file,
    parse_trace_record,
    serialize_trace,
    static_extract,
)
from .model import (
    AttributeKey,
    AttributeSet,
    AttributeSignature,
    Label,
    NetworkSend,
    ScriptRecord,
    build_attribute_set,
    canonicalize_signature,
)
from .similarity import (
    SimilarityResult,
    biggest_clean_intersection,
    jaccard,
    rank_scripts,
    score_against_matrix,
)
from .store import restore_snapshot, save_snapshot

__version__ = "0.1.0"

__all__ = [
    "AttributeCatalog",
    "AttributeKey",
    "AttributeSet",
    "AttributeSignature",
    "AutoDecision",
    "AutoUnknownProvider",
    "ClassificationEngine",
    "DecisionRequest",
    "EvidenceBundle",
    "FilterSet",
    "FingerprinterMatrix",
    "GroundTruthManifest",
    "Label",
    "LabelEvent",
    "LabelMethod",
    "NetworkSend",
    "PassOutcome",
    "ScriptedOracle",
    "ScriptRecord",
    "SessionState",
    "SimilarityResult",
    "auto_decide",
    "biggest_clean_intersection",
    "build_attribute_set",
    "build_corpus",
    "build_evidence",
    "build_matrix",
    "canonicalize_signature",
    "classify",
    "jaccard",
    "parse_trace_file",
    "parse_trace_record",
    "rank_scripts",
    "restore_snapshot",
    "save_snapshot",
    "score_against_matrix",
    "serialize_trace",
    "static_extract",
    "__version__",
]
