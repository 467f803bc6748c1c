"""Corpus loading: trace files, ground-truth matrix, static source scan.

The trace format is newline-delimited JSON, one script object per line or
one object per file. It stands in for an instrumented browser's output:

    { "script_id": str,              # optional, defaults to source_url
      "source_url": str,
      "content_hash": hex64,
      "events": [ { "api": str, "args": [json values], "count": int >= 1,
                    "observed_values": [str] } ],
      "network_sends": [ { "url": str, "payload_b64": str } ],  # optional
      "observed_values": [str],      # optional, record-level
      "source_text": str,            # optional, inline source
      "source_path": str,            # optional, resolved relative to the file
      "origin": "trace" | "static" } # optional
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .model import (
    AttributeKey,
    AttributeSet,
    NetworkSend,
    ScriptRecord,
    canonicalize_signature,
)


class MalformedTraceError(ValueError):
    """A trace file or record violates the trace schema."""

    def __init__(self, message: str, *, source: str | None = None) -> None:
        self.source = source
        super().__init__(f"{source}: {message}" if source else message)


class MissingFieldError(MalformedTraceError):
    """A required trace field is absent."""

    def __init__(self, name: str, *, source: str | None = None) -> None:
        self.field_name = name
        super().__init__(f"missing required field {name!r}", source=source)


class DuplicateScriptIdError(ValueError):
    """Two different scripts claim the same explicit script_id."""


class UnknownGroundTruthIdError(KeyError):
    """A manifest id has no matching record in the corpus."""

    def __init__(self, script_id: str) -> None:
        self.script_id = script_id
        super().__init__(f"ground-truth id not present in corpus: {script_id!r}")


class EmptyFingerprinterAttributesError(ValueError):
    """A ground-truth fingerprinter has an empty attribute set."""

    def __init__(self, script_id: str) -> None:
        self.script_id = script_id
        super().__init__(f"known fingerprinter has no catalogued attributes: {script_id!r}")


@dataclass(frozen=True)
class AttributeCatalog:
    """Vocabulary of API paths the static scanner recognizes."""

    api_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.api_names:
            raise ValueError("attribute catalog must not be empty")
        seen: dict[str, None] = {}
        for name in self.api_names:
            if not name:
                raise ValueError("attribute catalog contains an empty name")
            seen.setdefault(name)
        object.__setattr__(self, "api_names", tuple(seen))


@dataclass(frozen=True)
class GroundTruthManifest:
    """Ordered list of script ids labeled fingerprinter by experts."""

    fingerprinter_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.fingerprinter_ids)) != len(self.fingerprinter_ids):
            raise ValueError("ground-truth manifest contains duplicate ids")


@dataclass(frozen=True)
class MatrixRow:
    fingerprinter_id: str
    attributes: AttributeSet


class FingerprinterMatrix:
    """The growing matrix of known-fingerprinter attribute sets.

    Row order is insertion order and is observable: scoring tie-breaks
    prefer earlier rows. Rows with empty attribute sets are rejected.
    """

    def __init__(self, rows: Iterable[MatrixRow] = ()) -> None:
        self._rows: list[MatrixRow] = []
        self._ids: set[str] = set()
        for row in rows:
            self.append(row.fingerprinter_id, row.attributes)

    @property
    def rows(self) -> list[MatrixRow]:
        return self._rows

    def append(self, fingerprinter_id: str, attributes: AttributeSet) -> None:
        if not attributes:
            raise EmptyFingerprinterAttributesError(fingerprinter_id)
        if fingerprinter_id in self._ids:
            raise DuplicateScriptIdError(f"duplicate matrix row id: {fingerprinter_id!r}")
        self._rows.append(MatrixRow(fingerprinter_id, attributes))
        self._ids.add(fingerprinter_id)

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, fingerprinter_id: str) -> bool:
        return fingerprinter_id in self._ids

    def to_json(self) -> list[dict[str, Any]]:
        return [
            {"id": row.fingerprinter_id, "attributes": row.attributes.to_json_entries()}
            for row in self._rows
        ]

    @classmethod
    def from_json(cls, data: Iterable[Mapping[str, Any]]) -> FingerprinterMatrix:
        matrix = cls()
        for row in data:
            matrix.append(row["id"], AttributeSet.from_json_entries(row["attributes"]))
        return matrix


def _require(obj: Mapping[str, Any], name: str, source: str | None) -> Any:
    if name not in obj:
        raise MissingFieldError(name, source=source)
    return obj[name]


def parse_trace_record(obj: Mapping[str, Any], *, source: str | None = None) -> ScriptRecord:
    """Build a ScriptRecord from one decoded trace object."""
    if not isinstance(obj, Mapping):
        raise MalformedTraceError("trace record must be a JSON object", source=source)
    source_url = _require(obj, "source_url", source)
    content_hash = _require(obj, "content_hash", source)
    events = _require(obj, "events", source)
    if not isinstance(events, list):
        raise MalformedTraceError("'events' must be a list", source=source)

    observed: dict[str, None] = {}
    for value in obj.get("observed_values", ()):
        observed.setdefault(str(value))

    signatures = []
    for i, event in enumerate(events):
        if not isinstance(event, Mapping):
            raise MalformedTraceError(f"events[{i}] must be an object", source=source)
        if "api" not in event:
            raise MissingFieldError(f"events[{i}].api", source=source)
        args = event.get("args", [])
        if not isinstance(args, list):
            raise MalformedTraceError(f"events[{i}].args must be a list", source=source)
        count = event.get("count", 1)
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise MalformedTraceError(f"events[{i}].count must be an integer >= 1", source=source)
        key = canonicalize_signature(event["api"], args)
        signatures.append((key, count))
        for value in event.get("observed_values", ()):
            observed.setdefault(str(value))

    counts: dict[AttributeKey, int] = {}
    for key, count in signatures:
        counts[key] = counts.get(key, 0) + count

    sends = []
    for i, send in enumerate(obj.get("network_sends", ())):
        if "url" not in send:
            raise MissingFieldError(f"network_sends[{i}].url", source=source)
        if "payload_b64" not in send:
            raise MissingFieldError(f"network_sends[{i}].payload_b64", source=source)
        try:
            payload = base64.b64decode(send["payload_b64"], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise MalformedTraceError(
                f"network_sends[{i}].payload_b64 is not valid base64: {exc}", source=source
            ) from exc
        sends.append(NetworkSend(url=send["url"], payload=payload))

    try:
        return ScriptRecord(
            script_id=obj.get("script_id") or source_url,
            source_url=source_url,
            content_hash=content_hash,
            attributes=AttributeSet(counts),
            network_sends=tuple(sends),
            source_text=obj.get("source_text"),
            observed_values=tuple(observed),
            origin=obj.get("origin", "trace"),
        )
    except ValueError as exc:
        raise MalformedTraceError(str(exc), source=source) from exc


def parse_trace_text(text: str, *, source: str | None = None) -> list[ScriptRecord]:
    """Parse a trace document: one JSON object, or one object per line."""
    stripped = text.strip()
    if not stripped:
        return []
    try:
        whole = json.loads(stripped)
    except json.JSONDecodeError:
        whole = None
    if isinstance(whole, Mapping):
        return [parse_trace_record(whole, source=source)]
    if whole is not None:
        raise MalformedTraceError("top-level trace value must be a JSON object", source=source)

    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{source}:{lineno}" if source else f"line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedTraceError(f"invalid JSON: {exc}", source=where) from exc
        records.append(parse_trace_record(obj, source=where))
    return records


def parse_trace_file(path: str | Path) -> list[ScriptRecord]:
    """Parse a trace file, resolving any source_path fields beside it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedTraceError(f"not valid UTF-8: {exc}", source=str(path)) from exc

    # source_path resolution needs the raw objects, so parse in two steps.
    records = []
    stripped = text.strip()
    try:
        whole = json.loads(stripped) if stripped else None
    except json.JSONDecodeError:
        whole = None
    if isinstance(whole, Mapping):
        objs: list[tuple[Mapping[str, Any], str]] = [(whole, str(path))]
    elif whole is not None:
        raise MalformedTraceError("top-level trace value must be a JSON object", source=str(path))
    else:
        objs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                objs.append((json.loads(line), where))
            except json.JSONDecodeError as exc:
                raise MalformedTraceError(f"invalid JSON: {exc}", source=where) from exc

    for obj, where in objs:
        record = parse_trace_record(obj, source=where)
        if record.source_text is None and isinstance(obj.get("source_path"), str):
            candidate = path.parent / obj["source_path"]
            if candidate.is_file():
                record = ScriptRecord(
                    script_id=record.script_id,
                    source_url=record.source_url,
                    content_hash=record.content_hash,
                    attributes=record.attributes,
                    network_sends=record.network_sends,
                    source_text=candidate.read_text(encoding="utf-8", errors="replace"),
                    observed_values=record.observed_values,
                    origin=record.origin,
                )
        records.append(record)
    return records


def serialize_trace(record: ScriptRecord) -> dict[str, Any]:
    """Inverse of parse_trace_record; parse(serialize(r)) reproduces r."""
    out: dict[str, Any] = {
        "script_id": record.script_id,
        "source_url": record.source_url,
        "content_hash": record.content_hash,
        "events": [
            {"api": key.name, "args": list(key.args), "count": count}
            for key, count in record.attributes.items()
        ],
    }
    if record.network_sends:
        out["network_sends"] = [
            {"url": send.url, "payload_b64": base64.b64encode(send.payload).decode("ascii")}
            for send in record.network_sends
        ]
    if record.observed_values:
        out["observed_values"] = list(record.observed_values)
    if record.source_text is not None:
        out["source_text"] = record.source_text
    if record.origin != "trace":
        out["origin"] = record.origin
    return out


def build_corpus(records: Iterable[ScriptRecord]) -> tuple[dict[str, ScriptRecord], list[str]]:
    """Index records by script_id, enforcing uniqueness.

    Records with identical id and content hash deduplicate to the first
    occurrence. When several records share a URL-derived id but differ in
    content, each id becomes ``url#<hash prefix>``; explicitly conflicting
    ids are an error. Returns the ordered index plus warning messages.
    """
    warnings: list[str] = []
    by_id: dict[str, list[ScriptRecord]] = {}
    for record in records:
        by_id.setdefault(record.script_id, []).append(record)

    corpus: dict[str, ScriptRecord] = {}
    for script_id, group in by_id.items():
        unique: dict[str, ScriptRecord] = {}
        for record in group:
            unique.setdefault(record.content_hash, record)
        if len(group) > len(unique):
            warnings.append(
                f"{script_id}: {len(group) - len(unique)} duplicate trace(s) with identical content dropped"
            )
        if len(unique) == 1:
            corpus[script_id] = next(iter(unique.values()))
            continue
        if any(r.script_id != r.source_url for r in unique.values()):
            raise DuplicateScriptIdError(
                f"script_id {script_id!r} is claimed by {len(unique)} different scripts"
            )
        warnings.append(f"{script_id}: {len(unique)} contents share this URL; ids disambiguated by hash")
        for content_hash, record in unique.items():
            new_id = f"{script_id}#{content_hash[:8]}"
            if new_id in corpus or new_id in by_id:
                raise DuplicateScriptIdError(f"disambiguated id collides: {new_id!r}")
            corpus[new_id] = ScriptRecord(
                script_id=new_id,
                source_url=record.source_url,
                content_hash=record.content_hash,
                attributes=record.attributes,
                network_sends=record.network_sends,
                source_text=record.source_text,
                observed_values=record.observed_values,
                origin=record.origin,
            )
    return corpus, warnings


def build_matrix(manifest: GroundTruthManifest, corpus: Iterable[ScriptRecord]) -> FingerprinterMatrix:
    """Assemble the initial matrix, one row per manifest id in order."""
    by_id = {record.script_id: record for record in corpus}
    matrix = FingerprinterMatrix()
    for script_id in manifest.fingerprinter_ids:
        if script_id not in by_id:
            raise UnknownGroundTruthIdError(script_id)
        matrix.append(script_id, by_id[script_id].attributes)
    return matrix


_IDENT_TAIL = r"(?![0-9A-Za-z_$])"


def static_extract(source_text: str, catalog: AttributeCatalog) -> AttributeSet:
    """Scan raw source for catalog APIs; a low-confidence trace fallback.

    Dotted catalog entries match on their final member segment with a
    leading dot (receiver types are invisible statically, so
    ``ctx.getImageData`` counts for ``CanvasRenderingContext2D.getImageData``).
    Bare entries match as whole identifiers. Minified or obfuscated code
    defeats this scan by construction; callers flag the result accordingly.
    """
    counts: dict[AttributeKey, int] = {}
    for name in catalog.api_names:
        tail = name.rsplit(".", 1)[-1]
        if "." in name:
            pattern = r"\." + re.escape(tail) + _IDENT_TAIL
        else:
            pattern = r"(?<![0-9A-Za-z_$])" + re.escape(tail) + _IDENT_TAIL
        found = len(re.findall(pattern, source_text))
        if found:
            counts[AttributeKey(name)] = found
    return AttributeSet(counts)


def record_from_source(
    source_text: str, *, script_id: str, source_url: str, catalog: AttributeCatalog
) -> ScriptRecord:
    """Build a static-scan ScriptRecord for a bare source file."""
    return ScriptRecord(
        script_id=script_id,
        source_url=source_url,
        content_hash=hashlib.sha256(source_text.encode("utf-8")).hexdigest(),
        attributes=static_extract(source_text, catalog),
        source_text=source_text,
        origin="static",
    )


def load_catalog(path: str | Path) -> AttributeCatalog:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise ValueError(f"{path}: attribute catalog must be a JSON array of strings")
    return AttributeCatalog(tuple(data))


def default_catalog() -> AttributeCatalog:
    text = resources.files("fpclassify.data").joinpath("attribute_catalog.json").read_text("utf-8")
    return AttributeCatalog(tuple(json.loads(text)))


def load_manifest(path: str | Path) -> GroundTruthManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise ValueError(f"{path}: ground-truth manifest must be a JSON array of script ids")
    return GroundTruthManifest(tuple(data))


CORPUS_INDEX_VERSION = 1


def write_corpus_index(corpus: Mapping[str, ScriptRecord] | Sequence[ScriptRecord], path: str | Path) -> None:
    records = list(corpus.values()) if isinstance(corpus, Mapping) else list(corpus)
    doc = {
        "format_version": CORPUS_INDEX_VERSION,
        "scripts": [serialize_trace(r) for r in records],
    }
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_corpus_index(path: str | Path) -> dict[str, ScriptRecord]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedTraceError(f"corpus index is not valid JSON: {exc}", source=str(path)) from exc
    if not isinstance(doc, Mapping) or doc.get("format_version") != CORPUS_INDEX_VERSION:
        raise MalformedTraceError("unsupported corpus index format", source=str(path))
    corpus: dict[str, ScriptRecord] = {}
    for obj in doc["scripts"]:
        record = parse_trace_record(obj, source=str(path))
        if record.script_id in corpus:
            raise DuplicateScriptIdError(f"corpus index repeats id {record.script_id!r}")
        corpus[record.script_id] = record
    return corpus
