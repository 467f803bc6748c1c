"""Operator command line: ingest, classify, serve, report.

Exit codes are frozen for scripting: 0 success, 2 input error,
3 persistence error. Reports go to stdout and are byte-stable across
runs; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import ingest, store
from .classifier import (
    AutoUnknownProvider,
    ClassificationEngine,
    DecisionAborted,
    DecisionRequest,
    ScriptedOracle,
    SessionState,
)
from .evidence import FilterSet, default_keywords
from .model import Label, ScriptRecord, parse_label
from .server import ReviewServer, ReviewSession

logger = logging.getLogger("fpclassify")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PERSISTENCE = 3

STATE_ENV_VAR = "FPCLASSIFY_STATE"
DEFAULT_STATE_FILE = "fpclassify-state.json"


class InputError(Exception):
    """Anything wrong with operator-provided inputs."""


def _default_state_path() -> str:
    return os.environ.get(STATE_ENV_VAR, DEFAULT_STATE_FILE)


def _trace_files(directory: Path) -> list[Path]:
    files = [
        p
        for p in directory.rglob("*")
        if p.is_file() and p.suffix in {".json", ".jsonl", ".ndjson"}
    ]
    return sorted(files)


def _load_corpus_inputs(args: argparse.Namespace) -> dict[str, ScriptRecord]:
    corpus = ingest.load_corpus_index(args.corpus)
    if not corpus:
        raise InputError(f"{args.corpus}: corpus index is empty")
    return corpus


def _load_filters(paths: Sequence[str] | None) -> FilterSet | None:
    if not paths:
        return None
    try:
        filters = FilterSet.from_files(paths)
    except OSError as exc:
        raise InputError(f"cannot read filter list: {exc}") from exc
    if filters.skipped:
        logger.warning("filter lists: %d unsupported line(s) skipped", filters.skipped)
    return filters


def _load_keywords(path: str | None) -> list[str]:
    if path is None:
        return default_keywords()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read keywords file {path}: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(k, str) for k in data):
        raise InputError(f"{path}: keywords must be a JSON array of strings")
    return data


def _interactive_provider(request: DecisionRequest) -> Label:
    err = sys.stderr
    bundle = request.evidence
    sim = request.similarity
    print(file=err)
    print(f"--- review {request.position}/{request.queue_length} "
          f"(pass {request.pass_index}) ---", file=err)
    print(f"script:   {request.script_id}", file=err)
    print(f"url:      {request.record.source_url}", file=err)
    print(f"score:    {sim.score} ({float(sim.score):.3f}) vs {sim.matched_fingerprinter_id}", file=err)
    inter = ", ".join(sorted(k.display() for k in sim.intersection)) or "(none)"
    clean = ", ".join(sorted(k.display() for k in request.clean_intersection)) or "(none)"
    print(f"shared with fingerprinter: {inter}", file=err)
    print(f"best clean overlap:        {clean}", file=err)
    attrs = list(request.record.attributes.items())
    print(f"attributes ({len(attrs)}):", file=err)
    for key, count in attrs[:20]:
        print(f"  {count:>5}x {key.display()}", file=err)
    if len(attrs) > 20:
        print(f"  ... and {len(attrs) - 20} more", file=err)
    privacy = False
    if bundle is not None:
        for hit in bundle.filter_hits:
            print(f"filter hit: [{hit.list_name}] {hit.rule}", file=err)
        for kw in bundle.keyword_hits:
            print(f"keyword hit: {kw.keyword} x{kw.count}", file=err)
        for ex in bundle.exfiltration_hits:
            print(f"exfiltration: {ex.value_excerpt!r} -> {ex.destination_url}", file=err)
        print(f"criteria met: {bundle.criteria_met}/4, suggestion: {bundle.suggested_label.value}",
              file=err)
    while True:
        print("label [f]ingerprinter / [n]on-fingerprinter / [u]nknown"
              " / [p] toggle privacy-policy flag: ", end="", file=err, flush=True)
        try:
            answer = input().strip().lower()
        except EOFError:
            print(file=err)
            raise DecisionAborted("stdin closed") from None
        if answer == "p":
            privacy = not privacy
            print(f"privacy-policy criterion {'checked' if privacy else 'unchecked'}", file=err)
            continue
        try:
            label = parse_label(answer)
        except ValueError:
            print(f"unrecognized answer: {answer!r}", file=err)
            continue
        return label


def _make_provider(mode: str, session_holder: dict[str, Any]) -> Any:
    if mode == "interactive":
        return _interactive_provider
    if mode == "auto-only":
        return AutoUnknownProvider()
    if mode.startswith("oracle="):
        path = mode[len("oracle=") :]
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read oracle file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError(f"{path}: oracle must map script ids to labels")
        try:
            oracle = ScriptedOracle(data)
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from exc
        session_holder["oracle"] = oracle
        return oracle
    raise InputError(f"unknown mode: {mode!r} (expected interactive, oracle=FILE or auto-only)")


def cmd_ingest(args: argparse.Namespace) -> int:
    directory = Path(args.traces) if args.traces else None
    if directory is not None and not directory.is_dir():
        raise InputError(f"not a directory: {directory}")
    catalog = ingest.load_catalog(args.catalog) if args.catalog else ingest.default_catalog()

    records: list[ScriptRecord] = []
    if directory is not None:
        for path in _trace_files(directory):
            records.extend(ingest.parse_trace_file(path))
    static_count = 0
    if args.static_sources:
        source_dir = Path(args.static_sources)
        if not source_dir.is_dir():
            raise InputError(f"not a directory: {source_dir}")
        for path in sorted(source_dir.rglob("*.js")):
            rel = path.relative_to(source_dir).as_posix()
            records.append(
                ingest.record_from_source(
                    path.read_text(encoding="utf-8", errors="replace"),
                    script_id=f"static://{rel}",
                    source_url=f"static://{rel}",
                    catalog=catalog,
                )
            )
            static_count += 1
    if not records:
        raise InputError("no trace or source files found")

    corpus, warnings = ingest.build_corpus(records)
    for message in warnings:
        logger.warning("%s", message)
    ingest.write_corpus_index(corpus, args.out)

    distinct = set()
    for record in corpus.values():
        distinct.update(record.attributes.key_set)
    print(f"{len(corpus)} scripts, {len(distinct)} distinct attributes, {len(warnings)} warning(s)")
    if static_count:
        print(f"{static_count} script(s) from static source scan (low confidence)")
    print(f"corpus index written to {args.out}")
    return EXIT_OK


def _prepare_session(
    args: argparse.Namespace, provider: Any
) -> tuple[ClassificationEngine, dict[str, ScriptRecord], Path]:
    corpus = _load_corpus_inputs(args)
    manifest = ingest.load_manifest(args.ground_truth)
    if not manifest.fingerprinter_ids:
        raise InputError(f"{args.ground_truth}: ground-truth manifest is empty")
    filters = _load_filters(getattr(args, "filters", None))
    keywords = _load_keywords(getattr(args, "keywords", None))
    state_path = Path(args.state)

    digest = store.corpus_digest(corpus.values())
    mdigest = store.manifest_digest(manifest)

    def on_decision(state: SessionState) -> None:
        store.save_snapshot(state, state_path)

    if state_path.exists():
        state = store.restore_snapshot(state_path, corpus.values(), manifest=manifest)
        logger.info("resumed session from %s (pass %d, %d manual decisions)",
                    state_path, state.pass_count, state.manual_decision_count)
        engine = ClassificationEngine.resume(
            corpus, state, provider,
            filters=filters, keywords=keywords, on_manual_decision=on_decision,
        )
    else:
        engine = ClassificationEngine.for_corpus(
            corpus, manifest, provider,
            identity_mode=args.identity, rescore_labeled=args.rescore_labeled,
            corpus_digest=digest, manifest_digest=mdigest,
            filters=filters, keywords=keywords, on_manual_decision=on_decision,
        )
    return engine, corpus, state_path


def _print_final_report(state: SessionState) -> None:
    counts = state.counts()
    print("label summary")
    print(f"  fingerprinter: {counts['suspects']}")
    print(f"  non-fingerprinter: {counts['cleans']}")
    print(f"  unknown: {counts['unknowns']}")
    for title, ids in (
        ("fingerprinter", state.suspects),
        ("non-fingerprinter", [sid for sid, _ in state.cleans]),
        ("unknown", state.unknowns),
    ):
        print(f"{title}:")
        for sid in ids:
            print(f"  {sid}")
    print(f"manual decisions: {state.manual_decision_count}")
    print(f"passes: {state.pass_count}")


def cmd_classify(args: argparse.Namespace) -> int:
    holder: dict[str, Any] = {}
    provider = _make_provider(args.mode, holder)
    engine, _corpus, state_path = _prepare_session(args, provider)
    try:
        state = engine.classify_all()
    except DecisionAborted:
        store.save_snapshot(engine.state, state_path)
        logger.info("session interrupted; resumable snapshot at %s", state_path)
        return 1
    store.save_snapshot(state, state_path)
    oracle = holder.get("oracle")
    if oracle is not None and oracle.missing_ids:
        logger.warning(
            "oracle had no answer for %d script(s); treated as unknown: %s",
            len(oracle.missing_ids), ", ".join(oracle.missing_ids),
        )
    _print_final_report(state)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    corpus = _load_corpus_inputs(args)
    manifest = ingest.load_manifest(args.ground_truth)
    if not manifest.fingerprinter_ids:
        raise InputError(f"{args.ground_truth}: ground-truth manifest is empty")
    filters = _load_filters(args.filters)
    keywords = _load_keywords(args.keywords)
    state_path = Path(args.state)
    digest = store.corpus_digest(corpus.values())
    mdigest = store.manifest_digest(manifest)

    def on_decision(state: SessionState) -> None:
        store.save_snapshot(state, state_path)

    def build_engine(provider: Any, lock: Any, on_manual_decision: Any) -> ClassificationEngine:
        del on_manual_decision
        if state_path.exists():
            state = store.restore_snapshot(state_path, corpus.values(), manifest=manifest)
            return ClassificationEngine.resume(
                corpus, state, provider,
                filters=filters, keywords=keywords, lock=lock, on_manual_decision=on_decision,
            )
        return ClassificationEngine.for_corpus(
            corpus, manifest, provider,
            identity_mode=args.identity, rescore_labeled=args.rescore_labeled,
            corpus_digest=digest, manifest_digest=mdigest,
            filters=filters, keywords=keywords, lock=lock, on_manual_decision=on_decision,
        )

    session = ReviewSession(build_engine, corpus)
    try:
        server = ReviewServer(session, host=args.host, port=args.port, ui_dir=args.ui_dir)
    except OSError as exc:
        raise InputError(f"cannot bind {args.host}:{args.port}: {exc}") from exc

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    server.start()
    host, port = server.address
    logger.info("review API listening on http://%s:%d", host, port)
    print(f"listening on http://{host}:{port}", file=sys.stderr, flush=True)
    stop.wait()
    logger.info("shutting down")
    server.stop()
    try:
        store.save_snapshot(session.state, state_path)
    except store.StoreError as exc:
        logger.error("final snapshot failed: %s", exc)
        return EXIT_PERSISTENCE
    logger.info("session snapshot saved to %s", state_path)
    return EXIT_OK


def _report_rows(state: SessionState) -> list[dict[str, Any]]:
    rows = []
    for sid in state.all_ids():
        label = state.final_label_of(sid)
        event = state.last_event_for(sid)
        bundle = state.evidence.get(sid)
        rows.append(
            {
                "script_id": sid,
                "label": label.value if label else "unlabeled",
                "method": event.method.value if event else "",
                "score": str(event.score) if event and event.score is not None else "",
                "criteria_met": bundle.criteria_met if bundle else None,
            }
        )
    rows.sort(key=lambda r: r["script_id"])
    return rows


def cmd_report(args: argparse.Namespace) -> int:
    document = store.load_snapshot_document(args.state)
    try:
        state = SessionState.from_json(document["state"])
    except (KeyError, TypeError, ValueError) as exc:
        raise store.CorruptSnapshotError(f"snapshot state is malformed: {exc}") from exc
    rows = _report_rows(state)
    counts = state.counts()

    if args.format == "csv":
        print("script_id,label,method,score,criteria_met")
        for row in rows:
            criteria = "" if row["criteria_met"] is None else str(row["criteria_met"])
            print(f"{row['script_id']},{row['label']},{row['method']},{row['score']},{criteria}")
    elif args.format == "json":
        print(
            json.dumps(
                {
                    "counts": counts,
                    "passes": state.pass_count,
                    "manual_decisions": state.manual_decision_count,
                    "scripts": rows,
                },
                indent=2,
                ensure_ascii=False,
            )
        )
    else:
        print(f"session: {counts['total']} scripts, {state.pass_count} passes, "
              f"{state.manual_decision_count} manual decisions")
        for row in rows:
            criteria = "-" if row["criteria_met"] is None else f"{row['criteria_met']}/4"
            score = row["score"] or "-"
            print(f"  {row['script_id']}: {row['label']} ({row['method'] or 'pending'}, "
                  f"score {score}, criteria {criteria})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpclassify",
        description="Label web scripts as fingerprinter / non-fingerprinter / unknown "
        "by incremental attribute-set similarity with a human review loop.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="index trace files into a corpus")
    p_ingest.add_argument("--traces", help="directory of trace files (.json/.jsonl/.ndjson)")
    p_ingest.add_argument("--catalog", help="attribute catalog JSON (default: built-in)")
    p_ingest.add_argument("--static-sources", help="directory of raw .js files to scan statically")
    p_ingest.add_argument("--out", default="corpus.json", help="corpus index output path")
    p_ingest.set_defaults(func=cmd_ingest)

    def add_session_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--corpus", required=True, help="corpus index from `ingest`")
        p.add_argument("--ground-truth", required=True, help="JSON array of known fingerprinter ids")
        p.add_argument("--state", default=_default_state_path(),
                       help=f"session snapshot path (default: ${STATE_ENV_VAR} or {DEFAULT_STATE_FILE})")
        p.add_argument("--filters", action="append", metavar="FILE",
                       help="filter list in Adblock format; repeatable")
        p.add_argument("--keywords", help="JSON array of evidence keywords")
        p.add_argument("--identity", choices=["name-args", "name-only"], default="name-args",
                       help="attribute identity: full (name, args) keys or API name only")
        p.add_argument("--rescore-labeled", action="store_true",
                       help="keep labeled scripts in the scoring pool (fidelity mode)")

    p_classify = sub.add_parser("classify", help="run the labeling loop to completion")
    add_session_args(p_classify)
    p_classify.add_argument("--mode", default="interactive",
                            help="interactive | oracle=FILE | auto-only")
    p_classify.set_defaults(func=cmd_classify)

    p_serve = sub.add_parser("serve", help="serve the review API (and optional UI)")
    add_session_args(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8731)
    p_serve.add_argument("--ui-dir", help="directory of static UI assets served at /")
    p_serve.set_defaults(func=cmd_serve)

    p_report = sub.add_parser("report", help="emit per-script labels from a snapshot")
    p_report.add_argument("--state", default=_default_state_path(), help="session snapshot path")
    p_report.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except InputError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except (
        ingest.MalformedTraceError,
        ingest.DuplicateScriptIdError,
        ingest.UnknownGroundTruthIdError,
        ingest.EmptyFingerprinterAttributesError,
        store.CorpusMismatchError,
        store.UnsupportedVersionError,
        store.CorruptSnapshotError,
    ) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except (store.IoFailureError, store.ConsistencyError) as exc:
        logger.error("%s", exc)
        return EXIT_PERSISTENCE
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except KeyboardInterrupt:
        logger.error("interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
