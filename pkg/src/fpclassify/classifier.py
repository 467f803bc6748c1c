"""The incremental labeling state machine.

A session scores every not-yet-settled script against the fingerprinter
matrix, walks the ranking best-first and applies two automatic rules: an
exact score of 1 labels the script a suspect, and a fingerprinter
intersection that equals the best clean intersection labels it clean.
Anything else goes to the decision provider (a human, a scripted oracle,
or an always-unknown stub). A manual fingerprinter answer grows the matrix
and a manual fingerprinter or non-fingerprinter answer ends the pass so
that everything left is rescored against the new knowledge. A pass that
walks its whole ranking without triggering a rescore finishes the session.

Scripts answered "unknown" keep a seat in the scoring pool: they are never
asked about again, but a later matrix row can still resolve them at score 1.
That resolution is the single case where a label is revised, and it writes
a second decision-log event for the script.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

from .evidence import EvidenceBundle, FilterSet, build_evidence
from .ingest import FingerprinterMatrix, GroundTruthManifest, build_matrix
from .model import AttributeKey, AttributeSet, Label, ScriptRecord
from .similarity import (
    EmptyMatrixError,
    SimilarityResult,
    biggest_clean_intersection,
    rank_scripts,
    score_row_sets,
)

__all__ = [
    "AlreadyLabeledError",
    "AutoDecision",
    "AutoUnknownProvider",
    "ClassificationEngine",
    "DecisionAborted",
    "DecisionRequest",
    "EmptyMatrixError",
    "LabelEvent",
    "LabelMethod",
    "PassOutcome",
    "ScriptedOracle",
    "SessionState",
    "StateConsistencyError",
    "UnknownScriptError",
    "auto_decide",
    "classify",
]


class AlreadyLabeledError(ValueError):
    """A label was submitted for a script that already has one."""


class UnknownScriptError(KeyError):
    """A label was submitted for a script outside the session."""


class StateConsistencyError(AssertionError):
    """The suspects/cleans/unknowns/unlabeled partition broke."""


class AutoDecision(Enum):
    FINGERPRINTER = "fingerprinter"
    CLEAN = "clean"
    NEEDS_MANUAL = "needs-manual"


class PassOutcome(Enum):
    RECOMPUTE = "recompute"
    FINISHED = "finished"


class LabelMethod(str, Enum):
    AUTO_SCORE1 = "auto-score-1"
    AUTO_INTERSECTION = "auto-intersection"
    MANUAL = "manual"


def auto_decide(result: SimilarityResult, clean_intersection: frozenset[AttributeKey]) -> AutoDecision:
    """The automatic labeling rules.

    Score exactly 1 means the script's attribute set equals a known
    fingerprinter's. Otherwise, a fingerprinter intersection already fully
    explained by clean scripts is not discriminating, so the script is
    clean; a differing intersection needs a human.
    """
    if result.score == 1:
        return AutoDecision.FINGERPRINTER
    if result.intersection == clean_intersection:
        return AutoDecision.CLEAN
    return AutoDecision.NEEDS_MANUAL


@dataclass(frozen=True)
class LabelEvent:
    """One append-only decision-log entry."""

    seq: int
    script_id: str
    label: Label
    method: LabelMethod
    pass_index: int
    score: Fraction | None = None
    evidence_ref: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "script_id": self.script_id,
            "label": self.label.value,
            "method": self.method.value,
            "pass_index": self.pass_index,
            "score": None if self.score is None else str(self.score),
            "evidence_ref": self.evidence_ref,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> LabelEvent:
        return cls(
            seq=data["seq"],
            script_id=data["script_id"],
            label=Label(data["label"]),
            method=LabelMethod(data["method"]),
            pass_index=data["pass_index"],
            score=None if data.get("score") is None else Fraction(data["score"]),
            evidence_ref=data.get("evidence_ref"),
        )


@dataclass(frozen=True)
class DecisionRequest:
    """What a decision provider gets to look at for one pending script."""

    script_id: str
    record: ScriptRecord
    similarity: SimilarityResult
    clean_intersection: frozenset[AttributeKey]
    evidence: EvidenceBundle | None
    position: int
    pass_index: int
    queue_length: int


DecisionProvider = Callable[[DecisionRequest], Label]


class DecisionAborted(RuntimeError):
    """The decision provider gave up (shutdown, EOF, injected failure).

    The session state stays valid and resumable; a later run picks up with
    a fresh scoring pass.
    """


class ScriptedOracle:
    """Decision provider backed by a script_id to label mapping.

    Ids missing from the mapping answer "unknown" and are recorded in
    ``missing_ids`` so callers can warn about incomplete oracles.
    """

    def __init__(self, mapping: Mapping[str, Label | str]) -> None:
        self.mapping = {k: Label(v) for k, v in mapping.items()}
        self.missing_ids: list[str] = []
        self.asked: list[str] = []

    def __call__(self, request: DecisionRequest) -> Label:
        self.asked.append(request.script_id)
        if request.script_id not in self.mapping:
            self.missing_ids.append(request.script_id)
            return Label.UNKNOWN
        return self.mapping[request.script_id]


class AutoUnknownProvider:
    """Fully unattended mode: every manual request answers "unknown"."""

    def __init__(self) -> None:
        self.asked: list[str] = []

    def __call__(self, request: DecisionRequest) -> Label:
        self.asked.append(request.script_id)
        return Label.UNKNOWN


_UNLABELED = "unlabeled"
_SUSPECT = "suspect"
_CLEAN = "clean"
_UNKNOWN = "unknown"

STATE_FORMAT_VERSION = 1


class SessionState:
    """All durable facts of one classification session.

    The four buckets (suspects, cleans, unknowns, unlabeled) partition the
    session's script ids at all times. The matrix holds the ground-truth
    rows plus one row per manual fingerprinter label.
    """

    def __init__(
        self,
        matrix: FingerprinterMatrix,
        dataset_ids: Iterable[str],
        *,
        corpus_digest: str = "",
        manifest_digest: str = "",
        identity_mode: str = "name-args",
        rescore_labeled: bool = False,
    ) -> None:
        self.matrix = matrix
        self.initial_matrix_size = len(matrix)
        self.suspects: list[str] = []
        self.cleans: list[tuple[str, AttributeSet]] = []
        self.unknowns: list[str] = []
        self._unlabeled: dict[str, None] = dict.fromkeys(dataset_ids)
        self._suspect_ids: set[str] = set()
        self._clean_ids: set[str] = set()
        self._unknown_ids: set[str] = set()
        self.pass_count = 0
        self.manual_decision_count = 0
        self.decision_log: list[LabelEvent] = []
        self.evidence: dict[str, EvidenceBundle] = {}
        self.completed = False
        self.corpus_digest = corpus_digest
        self.manifest_digest = manifest_digest
        self.identity_mode = identity_mode
        self.rescore_labeled = rescore_labeled

    # -- views ---------------------------------------------------------

    @property
    def unlabeled(self) -> list[str]:
        return list(self._unlabeled)

    def all_ids(self) -> list[str]:
        return self.suspects + [sid for sid, _ in self.cleans] + self.unknowns + list(self._unlabeled)

    def bucket_of(self, script_id: str) -> str:
        if script_id in self._unlabeled:
            return _UNLABELED
        if script_id in self._suspect_ids:
            return _SUSPECT
        if script_id in self._clean_ids:
            return _CLEAN
        if script_id in self._unknown_ids:
            return _UNKNOWN
        raise UnknownScriptError(script_id)

    def counts(self) -> dict[str, int]:
        return {
            "total": len(self.suspects) + len(self.cleans) + len(self.unknowns) + len(self._unlabeled),
            "suspects": len(self.suspects),
            "cleans": len(self.cleans),
            "unknowns": len(self.unknowns),
            "unlabeled": len(self._unlabeled),
        }

    def final_label_of(self, script_id: str) -> Label | None:
        bucket = self.bucket_of(script_id)
        return {
            _SUSPECT: Label.FINGERPRINTER,
            _CLEAN: Label.NON_FINGERPRINTER,
            _UNKNOWN: Label.UNKNOWN,
            _UNLABELED: None,
        }[bucket]

    def last_event_for(self, script_id: str) -> LabelEvent | None:
        for event in reversed(self.decision_log):
            if event.script_id == script_id:
                return event
        return None

    def check_partition(self) -> None:
        """Raise unless the four buckets are pairwise disjoint and the
        matrix grew by exactly the manual fingerprinter labels."""
        buckets = [self._suspect_ids, self._clean_ids, self._unknown_ids, set(self._unlabeled)]
        if (len(self.suspects), len(self.cleans), len(self.unknowns)) != (
            len(self._suspect_ids),
            len(self._clean_ids),
            len(self._unknown_ids),
        ):
            raise StateConsistencyError("a label bucket contains duplicate ids")
        total = sum(len(b) for b in buckets)
        merged: set[str] = set()
        for bucket in buckets:
            merged |= bucket
        if len(merged) != total:
            raise StateConsistencyError("script ids overlap between label buckets")
        expected = self.initial_matrix_size + sum(
            1
            for e in self.decision_log
            if e.method is LabelMethod.MANUAL and e.label is Label.FINGERPRINTER
        )
        if len(self.matrix) != expected:
            raise StateConsistencyError(f"matrix has {len(self.matrix)} rows, expected {expected}")

    # -- mutations (single-writer; the engine serializes via its lock) --

    def _log(
        self,
        script_id: str,
        label: Label,
        method: LabelMethod,
        pass_index: int,
        score: Fraction | None,
        evidence_ref: str | None = None,
    ) -> None:
        self.decision_log.append(
            LabelEvent(
                seq=len(self.decision_log) + 1,
                script_id=script_id,
                label=label,
                method=method,
                pass_index=pass_index,
                score=score,
                evidence_ref=evidence_ref,
            )
        )

    def auto_label_suspect(self, script_id: str, pass_index: int, score: Fraction) -> None:
        del self._unlabeled[script_id]
        self.suspects.append(script_id)
        self._suspect_ids.add(script_id)
        self._log(script_id, Label.FINGERPRINTER, LabelMethod.AUTO_SCORE1, pass_index, score)

    def auto_label_clean(
        self, script_id: str, attributes: AttributeSet, pass_index: int, score: Fraction
    ) -> None:
        del self._unlabeled[script_id]
        self.cleans.append((script_id, attributes))
        self._clean_ids.add(script_id)
        self._log(script_id, Label.NON_FINGERPRINTER, LabelMethod.AUTO_INTERSECTION, pass_index, score)

    def resolve_unknown_to_suspect(self, script_id: str, pass_index: int, score: Fraction) -> None:
        """Upgrade a previously-unknown script that now scores exactly 1.

        The one sanctioned label revision; it appends a second log event
        for the script.
        """
        self.unknowns.remove(script_id)
        self._unknown_ids.discard(script_id)
        self.suspects.append(script_id)
        self._suspect_ids.add(script_id)
        self._log(script_id, Label.FINGERPRINTER, LabelMethod.AUTO_SCORE1, pass_index, score)

    def apply_manual_label(
        self,
        script_id: str,
        label: Label,
        *,
        pass_index: int,
        attributes: AttributeSet | None = None,
        score: Fraction | None = None,
        evidence_ref: str | None = None,
    ) -> bool:
        """Record a reviewer decision; returns True when a rescore is due.

        Fingerprinter grows the matrix, non-fingerprinter grows the clean
        pool, and both schedule a rescore; unknown does neither.
        """
        if script_id not in self._unlabeled:
            if (
                script_id in self._suspect_ids
                or script_id in self._clean_ids
                or script_id in self._unknown_ids
            ):
                raise AlreadyLabeledError(f"script already labeled: {script_id!r}")
            raise UnknownScriptError(script_id)
        if label in (Label.FINGERPRINTER, Label.NON_FINGERPRINTER) and attributes is None:
            raise ValueError("fingerprinter / non-fingerprinter labels need the attribute set")
        del self._unlabeled[script_id]
        if label is Label.FINGERPRINTER:
            self.suspects.append(script_id)
            self._suspect_ids.add(script_id)
            self.matrix.append(script_id, attributes)
            recompute = True
        elif label is Label.NON_FINGERPRINTER:
            self.cleans.append((script_id, attributes))
            self._clean_ids.add(script_id)
            recompute = True
        else:
            self.unknowns.append(script_id)
            self._unknown_ids.add(script_id)
            recompute = False
        self._log(script_id, label, LabelMethod.MANUAL, pass_index, score, evidence_ref)
        return recompute

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "format_version": STATE_FORMAT_VERSION,
            "matrix": self.matrix.to_json(),
            "initial_matrix_size": self.initial_matrix_size,
            "suspects": list(self.suspects),
            "cleans": [
                {"id": sid, "attributes": attrs.to_json_entries()} for sid, attrs in self.cleans
            ],
            "unknowns": list(self.unknowns),
            "unlabeled": list(self._unlabeled),
            "pass_count": self.pass_count,
            "manual_decision_count": self.manual_decision_count,
            "decision_log": [event.to_json() for event in self.decision_log],
            "evidence": {sid: bundle.to_json() for sid, bundle in self.evidence.items()},
            "completed": self.completed,
            "corpus_digest": self.corpus_digest,
            "manifest_digest": self.manifest_digest,
            "identity_mode": self.identity_mode,
            "rescore_labeled": self.rescore_labeled,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> SessionState:
        state = cls(
            FingerprinterMatrix.from_json(data["matrix"]),
            data["unlabeled"],
            corpus_digest=data.get("corpus_digest", ""),
            manifest_digest=data.get("manifest_digest", ""),
            identity_mode=data.get("identity_mode", "name-args"),
            rescore_labeled=data.get("rescore_labeled", False),
        )
        state.initial_matrix_size = data["initial_matrix_size"]
        state.suspects = list(data["suspects"])
        state.cleans = [
            (row["id"], AttributeSet.from_json_entries(row["attributes"])) for row in data["cleans"]
        ]
        state.unknowns = list(data["unknowns"])
        state._suspect_ids = set(state.suspects)
        state._clean_ids = {sid for sid, _ in state.cleans}
        state._unknown_ids = set(state.unknowns)
        state.pass_count = data["pass_count"]
        state.manual_decision_count = data["manual_decision_count"]
        state.decision_log = [LabelEvent.from_json(e) for e in data["decision_log"]]
        state.evidence = {
            sid: EvidenceBundle.from_json(bundle) for sid, bundle in data.get("evidence", {}).items()
        }
        state.completed = data.get("completed", False)
        return state


class _CleanPool:
    """Distinct clean key sets in first-labeled order.

    Duplicate sets cannot change the biggest-intersection result, so only
    the first occurrence of each key set is kept. This keeps the walk
    linear in distinct sets rather than in labeled scripts.
    """

    def __init__(self, cleans: Iterable[tuple[str, AttributeSet]]) -> None:
        self.sets: list[frozenset[AttributeKey]] = []
        self._seen: set[frozenset[AttributeKey]] = set()
        for _, attrs in cleans:
            self.add(attrs)

    def add(self, attributes: AttributeSet) -> None:
        keys = attributes.key_set
        if keys not in self._seen:
            self._seen.add(keys)
            self.sets.append(keys)


class ClassificationEngine:
    """Drives passes over a dataset until no rescore is needed.

    The engine is the single writer of its SessionState; all mutations
    happen under ``lock`` so concurrent readers (the review API) always
    observe a consistent partition. Scoring itself is pure and runs
    outside the lock.
    """

    def __init__(
        self,
        records: Mapping[str, ScriptRecord],
        state: SessionState,
        provider: DecisionProvider,
        *,
        filters: FilterSet | None = None,
        keywords: Sequence[str] | None = None,
        build_evidence_bundles: bool = True,
        lock: Any = None,
        on_manual_decision: Callable[[SessionState], None] | None = None,
    ) -> None:
        self.records = dict(records)
        self.state = state
        self.provider = provider
        self.filters = filters
        self.keywords = keywords
        self.build_evidence_bundles = build_evidence_bundles
        self.lock = lock if lock is not None else threading.RLock()
        self.on_manual_decision = on_manual_decision
        missing = [sid for sid in state.all_ids() if sid not in self.records]
        if missing:
            raise UnknownScriptError(f"records missing for session ids: {missing[:5]}")

    # -- construction helpers -------------------------------------------

    @classmethod
    def for_corpus(
        cls,
        corpus: Mapping[str, ScriptRecord],
        manifest: GroundTruthManifest,
        provider: DecisionProvider,
        *,
        identity_mode: str = "name-args",
        rescore_labeled: bool = False,
        corpus_digest: str = "",
        manifest_digest: str = "",
        **kwargs: Any,
    ) -> ClassificationEngine:
        """Build a fresh session: matrix from the manifest, everything else
        unlabeled. ``identity_mode="name-only"`` collapses call arguments
        out of key identity before any scoring happens."""
        records = _apply_identity_mode(corpus, identity_mode)
        matrix = build_matrix(manifest, records.values())
        ground_truth = set(manifest.fingerprinter_ids)
        dataset = [sid for sid in records if sid not in ground_truth]
        state = SessionState(
            matrix,
            dataset,
            corpus_digest=corpus_digest,
            manifest_digest=manifest_digest,
            identity_mode=identity_mode,
            rescore_labeled=rescore_labeled,
        )
        return cls(records, state, provider, **kwargs)

    @classmethod
    def resume(
        cls,
        corpus: Mapping[str, ScriptRecord],
        state: SessionState,
        provider: DecisionProvider,
        **kwargs: Any,
    ) -> ClassificationEngine:
        records = _apply_identity_mode(corpus, state.identity_mode)
        return cls(records, state, provider, **kwargs)

    # -- the loop --------------------------------------------------------

    def _scoring_pool(self) -> list[str]:
        state = self.state
        if state.rescore_labeled:
            return state.all_ids()
        # Unknown-labeled scripts stay in the pool: a future matrix row can
        # still resolve them at score 1.
        return state.unlabeled + list(state.unknowns)

    def _score_pool(self, pool: Iterable[str]) -> list[SimilarityResult]:
        rows = [(row.fingerprinter_id, row.attributes.key_set) for row in self.state.matrix.rows]
        cache: dict[frozenset[AttributeKey], tuple[Fraction, str, frozenset[AttributeKey]]] = {}
        results = []
        for sid in pool:
            keys = self.records[sid].attributes.key_set
            hit = cache.get(keys)
            if hit is None:
                hit = score_row_sets(keys, rows)
                cache[keys] = hit
            score, row_id, inter = hit
            results.append(SimilarityResult(sid, score, row_id, inter))
        return results

    def run_pass(self) -> PassOutcome:
        """One scoring pass; returns RECOMPUTE when the matrix or clean
        pool changed through a manual label, FINISHED otherwise."""
        state = self.state
        if not state.matrix.rows:
            raise EmptyMatrixError("cannot classify with an empty fingerprinter matrix")
        with self.lock:
            state.pass_count += 1
            pass_index = state.pass_count
            pool = self._scoring_pool()
        ranking = rank_scripts(self._score_pool(pool))
        total = len(ranking)
        cleans = _CleanPool(state.cleans)

        for position, result in enumerate(ranking, start=1):
            sid = result.script_id
            bucket = state.bucket_of(sid)
            if bucket in (_SUSPECT, _CLEAN):
                continue  # only reachable in rescore-labeled mode
            clean_inter = biggest_clean_intersection(cleans.sets, result.intersection)
            decision = auto_decide(result, clean_inter)

            if decision is AutoDecision.FINGERPRINTER:
                with self.lock:
                    if bucket == _UNKNOWN:
                        state.resolve_unknown_to_suspect(sid, pass_index, result.score)
                    else:
                        state.auto_label_suspect(sid, pass_index, result.score)
                continue
            if bucket == _UNKNOWN:
                continue  # answered once already; never re-asked
            if decision is AutoDecision.CLEAN:
                attributes = self.records[sid].attributes
                with self.lock:
                    state.auto_label_clean(sid, attributes, pass_index, result.score)
                cleans.add(attributes)
                continue

            record = self.records[sid]
            bundle = None
            if self.build_evidence_bundles:
                bundle = build_evidence(record, result, clean_inter, self.filters, self.keywords)
                with self.lock:
                    state.evidence[sid] = bundle
            request = DecisionRequest(
                script_id=sid,
                record=record,
                similarity=result,
                clean_intersection=clean_inter,
                evidence=bundle,
                position=position,
                pass_index=pass_index,
                queue_length=total,
            )
            label = self.provider(request)
            with self.lock:
                state.manual_decision_count += 1
                recompute = state.apply_manual_label(
                    sid,
                    label,
                    pass_index=pass_index,
                    attributes=record.attributes,
                    score=result.score,
                    evidence_ref=sid if bundle is not None else None,
                )
                if self.on_manual_decision is not None:
                    self.on_manual_decision(state)
            if recompute:
                return PassOutcome.RECOMPUTE
        return PassOutcome.FINISHED

    def classify_all(self) -> SessionState:
        """Run passes to completion; every id ends up labeled."""
        state = self.state
        if state.completed:
            return state
        budget = len(state.unlabeled) + len(state.unknowns) + 2
        passes = 0
        while True:
            outcome = self.run_pass()
            passes += 1
            if outcome is PassOutcome.FINISHED:
                break
            if passes > budget:  # pragma: no cover - safety net
                raise StateConsistencyError("pass budget exceeded; loop is not converging")
        with self.lock:
            state.completed = True
            state.check_partition()
        return state


def _apply_identity_mode(
    corpus: Mapping[str, ScriptRecord], identity_mode: str
) -> dict[str, ScriptRecord]:
    if identity_mode == "name-args":
        return dict(corpus)
    if identity_mode == "name-only":
        return {
            sid: rec.with_attributes(rec.attributes.collapse_to_names())
            for sid, rec in corpus.items()
        }
    raise ValueError(f"unknown identity mode: {identity_mode!r}")


def classify(
    corpus: Mapping[str, ScriptRecord] | Iterable[ScriptRecord],
    manifest: GroundTruthManifest,
    decision_provider: DecisionProvider,
    **options: Any,
) -> SessionState:
    """One-shot convenience: build a session, run it to completion."""
    if not isinstance(corpus, Mapping):
        corpus = {record.script_id: record for record in corpus}
    engine = ClassificationEngine.for_corpus(corpus, manifest, decision_provider, **options)
    return engine.classify_all()
