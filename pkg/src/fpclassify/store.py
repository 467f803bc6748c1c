"""Durable session snapshots.

A snapshot is a single JSON document: a format version, digests binding it
to the corpus and ground-truth manifest it was taken from, a UTC creation
timestamp and the full serialized session state. Writes are atomic (temp
file plus rename) and keep the previous snapshot as ``<path>.bak``.

Snapshots are taken after every manual decision: those are the expensive,
unrecoverable events. Auto labels are always recomputable from a prefix of
the decision log, so they do not trigger extra writes.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .classifier import SessionState, StateConsistencyError
from .ingest import GroundTruthManifest
from .model import ScriptRecord

SNAPSHOT_FORMAT_VERSION = 1


class StoreError(Exception):
    """Base class for persistence failures."""


class IoFailureError(StoreError):
    """The snapshot could not be written."""


class ConsistencyError(StoreError):
    """Refused to persist a state whose partition invariant is broken."""


class CorpusMismatchError(StoreError):
    """The snapshot was taken against a different corpus or manifest."""


class UnsupportedVersionError(StoreError):
    """The snapshot format version is not supported."""


class CorruptSnapshotError(StoreError):
    """The snapshot file is unreadable or structurally invalid."""


def corpus_digest(records: Iterable[ScriptRecord]) -> str:
    """Order-independent digest over the corpus content hashes."""
    joined = "\n".join(sorted(r.content_hash for r in records))
    return hashlib.sha256(joined.encode("ascii")).hexdigest()


def manifest_digest(manifest: GroundTruthManifest) -> str:
    """Order-sensitive digest: manifest order defines matrix row order."""
    joined = "\n".join(manifest.fingerprinter_ids)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def save_snapshot(state: SessionState, path: str | Path) -> None:
    """Atomically persist the session state.

    The previous snapshot, if any, survives as ``<path>.bak``; an
    interrupted write never damages the existing file.
    """
    try:
        state.check_partition()
    except StateConsistencyError as exc:
        raise ConsistencyError(str(exc)) from exc

    path = Path(path)
    document = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "corpus_digest": state.corpus_digest,
        "manifest_digest": state.manifest_digest,
        "state": state.to_json(),
    }
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(document, fh, ensure_ascii=False, indent=1)
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        if path.exists():
            shutil.copy2(path, path.with_name(path.name + ".bak"))
        os.replace(tmp, path)
    except OSError as exc:
        _cleanup_tmp(tmp)
        raise IoFailureError(f"cannot write snapshot {path}: {exc}") from exc


def _cleanup_tmp(tmp: Path) -> None:
    try:
        tmp.unlink()
    except OSError:
        pass


def load_snapshot_document(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot read snapshot {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptSnapshotError(f"snapshot {path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict) or "format_version" not in document:
        raise CorruptSnapshotError(f"snapshot {path} has no format_version")
    if document["format_version"] != SNAPSHOT_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"snapshot {path} has format_version {document['format_version']}, "
            f"supported: {SNAPSHOT_FORMAT_VERSION}"
        )
    return document


def restore_snapshot(
    path: str | Path,
    corpus: Iterable[ScriptRecord],
    *,
    manifest: GroundTruthManifest | None = None,
) -> SessionState:
    """Load a snapshot and verify it belongs to the given corpus."""
    document = load_snapshot_document(path)
    records = list(corpus)
    expected = corpus_digest(records)
    if document.get("corpus_digest") != expected:
        raise CorpusMismatchError(
            f"snapshot {path} was taken against a different corpus "
            f"(digest {document.get('corpus_digest', '?')[:12]}..., expected {expected[:12]}...)"
        )
    if manifest is not None and document.get("manifest_digest") != manifest_digest(manifest):
        raise CorpusMismatchError(f"snapshot {path} uses a different ground-truth manifest")
    try:
        state = SessionState.from_json(document["state"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshotError(f"snapshot {path} state is malformed: {exc}") from exc
    try:
        state.check_partition()
    except StateConsistencyError as exc:
        raise CorruptSnapshotError(f"snapshot {path} violates the partition invariant: {exc}") from exc
    return state
