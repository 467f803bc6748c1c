"""Value types shared across the classification pipeline.

Attribute keys, observation counts, per-script attribute sets, script
records and the label alphabet. Everything here is an immutable value;
construction validates the invariants and the rest of the package treats
instances as plain data.

A deliberate quirk to be aware of: :class:`AttributeSet` equality compares
key sets only. Observation counts are carried as evidence for reviewers but
never participate in set algebra, similarity or equality.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Iterator, Mapping


class EmptyApiNameError(ValueError):
    """An attribute key was built from an empty API name."""


class InvalidApiNameError(ValueError):
    """An API name contains control characters."""


_CONTROL_CHARS = re.compile(r"[\x00-\x1f\x7f]")
_HEX64 = re.compile(r"[0-9a-f]{64}")


def _render_arg(value: Any) -> str:
    """Render one call argument deterministically.

    Strings pass through verbatim; scalars use their shortest decimal /
    JSON form; composites become minimal JSON with all object keys sorted,
    so structurally equal values always produce byte-equal renderings.
    """
    if isinstance(value, str):
        return value
    if value is True:
        return "true"
    if value is False:
        return "false"
    if value is None:
        return "null"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return repr(value)
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class AttributeKey:
    """Identity of one observed API access: dotted name plus rendered args.

    Two keys are equal iff the name and the full argument list are
    element-wise equal. ``canonical()`` gives an injective string form.
    """

    name: str
    args: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise EmptyApiNameError("attribute API name must not be empty")
        if _CONTROL_CHARS.search(self.name):
            raise InvalidApiNameError(f"control character in API name: {self.name!r}")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    def canonical(self) -> str:
        return json.dumps([self.name, list(self.args)], separators=(",", ":"), ensure_ascii=False)

    @property
    def sort_key(self) -> tuple[str, tuple[str, ...]]:
        return (self.name, self.args)

    def display(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({', '.join(self.args)})"


def canonicalize_signature(api_name: str, raw_args: Iterable[Any] = ()) -> AttributeKey:
    """Build the canonical :class:`AttributeKey` for an observed API call.

    Idempotent: feeding a key's own rendered args back in yields an equal
    key, because rendered args are strings and strings pass through.
    """
    if not api_name:
        raise EmptyApiNameError("attribute API name must not be empty")
    return AttributeKey(api_name, tuple(_render_arg(a) for a in raw_args))


@dataclass(frozen=True)
class AttributeSignature:
    """One attribute key together with how often it was observed."""

    key: AttributeKey
    count: int

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"observation count must be >= 1, got {self.count}")


class AttributeSet:
    """The set of attribute keys a script touched, with observation counts.

    Set semantics live on the key set alone: equality, hashing and the
    intersection/union helpers ignore counts entirely, so ``{A:1}`` equals
    ``{A:99}``. Counts are retained purely as reviewer-facing evidence.
    Instances are immutable.
    """

    __slots__ = ("_entries", "_keys")

    def __init__(self, entries: Mapping[AttributeKey, int] | None = None) -> None:
        items: dict[AttributeKey, int] = {}
        for key, count in (entries or {}).items():
            if count < 1:
                raise ValueError(f"observation count must be >= 1 for {key.display()}")
            items[key] = int(count)
        self._entries = items
        self._keys = frozenset(items)

    @classmethod
    def empty(cls) -> AttributeSet:
        return cls()

    @classmethod
    def from_signatures(cls, signatures: Iterable[AttributeSignature]) -> AttributeSet:
        counts: dict[AttributeKey, int] = {}
        for sig in signatures:
            counts[sig.key] = counts.get(sig.key, 0) + sig.count
        return cls(counts)

    @property
    def key_set(self) -> frozenset[AttributeKey]:
        return self._keys

    def count(self, key: AttributeKey) -> int:
        return self._entries.get(key, 0)

    def items(self) -> Iterator[tuple[AttributeKey, int]]:
        """Entries in deterministic (name, args) order."""
        for key in sorted(self._entries, key=lambda k: k.sort_key):
            yield key, self._entries[key]

    def intersection(self, other: AttributeSet | frozenset[AttributeKey]) -> frozenset[AttributeKey]:
        other_keys = other.key_set if isinstance(other, AttributeSet) else other
        return self._keys & other_keys

    def union(self, other: AttributeSet | frozenset[AttributeKey]) -> frozenset[AttributeKey]:
        other_keys = other.key_set if isinstance(other, AttributeSet) else other
        return self._keys | other_keys

    def collapse_to_names(self) -> AttributeSet:
        """Project keys down to their API name, summing counts.

        Used by the optional name-only identity mode, where call arguments
        do not participate in key identity.
        """
        counts: dict[AttributeKey, int] = {}
        for key, count in self._entries.items():
            name_key = AttributeKey(key.name)
            counts[name_key] = counts.get(name_key, 0) + count
        return AttributeSet(counts)

    def to_json_entries(self) -> list[dict[str, Any]]:
        return [
            {"api": key.name, "args": list(key.args), "count": count}
            for key, count in self.items()
        ]

    @classmethod
    def from_json_entries(cls, entries: Iterable[Mapping[str, Any]]) -> AttributeSet:
        counts: dict[AttributeKey, int] = {}
        for entry in entries:
            key = AttributeKey(entry["api"], tuple(entry.get("args", ())))
            counts[key] = counts.get(key, 0) + int(entry.get("count", 1))
        return cls(counts)

    def __len__(self) -> int:
        return len(self._keys)

    def __bool__(self) -> bool:
        return bool(self._keys)

    def __contains__(self, key: AttributeKey) -> bool:
        return key in self._keys

    def __iter__(self) -> Iterator[AttributeKey]:
        return iter(self._keys)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, AttributeSet):
            return self._keys == other._keys
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._keys)

    def __repr__(self) -> str:
        keys = ", ".join(k.display() for k, _ in self.items())
        return f"AttributeSet({{{keys}}})"


def build_attribute_set(events: Iterable[AttributeSignature]) -> AttributeSet:
    """Aggregate raw observation events: deduplicate keys, sum counts."""
    return AttributeSet.from_signatures(events)


class Label(str, enum.Enum):
    """The three-way labeling alphabet."""

    FINGERPRINTER = "fingerprinter"
    NON_FINGERPRINTER = "non-fingerprinter"
    UNKNOWN = "unknown"


_LABEL_ALIASES = {
    "f": Label.FINGERPRINTER,
    "fp": Label.FINGERPRINTER,
    "fingerprinter": Label.FINGERPRINTER,
    "n": Label.NON_FINGERPRINTER,
    "non-fp": Label.NON_FINGERPRINTER,
    "nonfingerprinter": Label.NON_FINGERPRINTER,
    "non-fingerprinter": Label.NON_FINGERPRINTER,
    "u": Label.UNKNOWN,
    "unknown": Label.UNKNOWN,
}


def parse_label(text: str) -> Label:
    """Map a user-facing label spelling onto the enum; raises ValueError."""
    try:
        return _LABEL_ALIASES[text.strip().lower()]
    except KeyError:
        raise ValueError(f"not a label: {text!r}") from None


@dataclass(frozen=True)
class NetworkSend:
    """One observed outbound payload from a script."""

    url: str
    payload: bytes = b""


@dataclass(frozen=True)
class ScriptRecord:
    """Everything known about one script in a corpus.

    ``script_id`` is the stable identity used throughout the pipeline; it
    defaults to the source URL at ingestion time. ``origin`` records how the
    attribute set was obtained ("trace" for dynamic traces, "static" for the
    low-confidence source scan fallback).
    """

    script_id: str
    source_url: str
    content_hash: str
    attributes: AttributeSet
    network_sends: tuple[NetworkSend, ...] = ()
    source_text: str | None = None
    observed_values: tuple[str, ...] = ()
    origin: str = "trace"

    def __post_init__(self) -> None:
        if not self.script_id:
            raise ValueError("script_id must not be empty")
        digest = self.content_hash.lower()
        if not _HEX64.fullmatch(digest):
            raise ValueError(f"content_hash must be 64 hex chars, got {self.content_hash!r}")
        object.__setattr__(self, "content_hash", digest)
        if not isinstance(self.network_sends, tuple):
            object.__setattr__(self, "network_sends", tuple(self.network_sends))
        if not isinstance(self.observed_values, tuple):
            object.__setattr__(self, "observed_values", tuple(self.observed_values))

    def with_attributes(self, attributes: AttributeSet) -> ScriptRecord:
        return replace(self, attributes=attributes)
