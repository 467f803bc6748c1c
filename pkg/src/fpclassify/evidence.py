"""Reviewer evidence: filter-list hits, keywords, exfiltration, the bundle.

Four signals back a manual decision: the script URL is blocked by a filter
list, the code or URL contains a telltale keyword, observed attribute
values show up in outbound payloads, or the owner's privacy policy admits
to fingerprinting (a human checkbox; it cannot be automated). Two or more
signals suggest the fingerprinter label; the suggestion never auto-labels.

Filter support is a deliberate subset of the Adblock format: domain-anchor
(``||``), start/end anchors (``|``), ``*`` wildcards, ``^`` separators and
``@@`` exceptions. Element-hiding rules are out of scope; regex rules and
unsupported option-only constructs are skipped and tallied as warnings.
"""

from __future__ import annotations

import enum
import re
import urllib.parse
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .model import AttributeKey, Label, ScriptRecord
from .similarity import SimilarityResult

MIN_EXFIL_VALUE_LEN = 8


class InvalidUrlError(ValueError):
    """Filter matching needs an absolute URL."""


class FilterRuleKind(str, enum.Enum):
    DOMAIN_ANCHOR = "domain-anchor"
    SUBSTRING = "substring"
    EXACT_ADDRESS = "exact-address"


# A separator is anything that is not alphanumeric, "_", "-", "." or "%",
# or the end of the address.
_SEPARATOR_RE = r"(?:[^0-9A-Za-z_\-.%]|$)"
_SCHEME_RE = r"^[a-zA-Z][a-zA-Z0-9+.\-]*://"
_ELEMENT_HIDING_MARKERS = ("##", "#@#", "#?#", "#$#")


@dataclass(frozen=True)
class FilterRule:
    """One parsed block/exception rule, precompiled for matching."""

    raw: str
    kind: FilterRuleKind
    pattern_parts: tuple[str, ...]
    is_exception: bool
    options: tuple[str, ...] = ()
    domains: tuple[str, ...] = ()
    excluded_domains: tuple[str, ...] = ()
    script_only: bool = True
    regex: re.Pattern[str] = field(compare=False, repr=False, default=re.compile(""))


@dataclass
class ParsedFilterList:
    rules: list[FilterRule]
    skipped: int


def _compile_rule(kind: FilterRuleKind, parts: Sequence[str], anchor_start: bool, anchor_end: bool) -> re.Pattern[str]:
    out = []
    if kind is FilterRuleKind.DOMAIN_ANCHOR:
        # Anchor at the start of the hostname or just after a "." inside it.
        out.append(_SCHEME_RE + r"(?:[^/?#]*\.)?")
    elif anchor_start:
        out.append("^")
    for part in parts:
        if part == "*":
            out.append(".*")
        elif part == "^":
            out.append(_SEPARATOR_RE)
        else:
            out.append(re.escape(part))
    if anchor_end:
        out.append("$")
    return re.compile("".join(out), re.IGNORECASE)


def parse_filter_line(line: str) -> FilterRule | None:
    """Parse one filter line; None for blanks, comments and unsupported
    constructs (the caller distinguishes via recognized-construct checks)."""
    text = line.strip()
    if not text or text.startswith("!") or text.startswith("["):
        return None
    if any(marker in text for marker in _ELEMENT_HIDING_MARKERS):
        return None

    is_exception = text.startswith("@@")
    body = text[2:] if is_exception else text

    options: tuple[str, ...] = ()
    if "$" in body:
        candidate, _, opts = body.rpartition("$")
        # A "/" on the right of "$" means it was part of the pattern.
        if candidate and "/" not in opts:
            body, options = candidate, tuple(o.strip() for o in opts.split(",") if o.strip())

    if not body or body.startswith("$"):
        return None  # option-only line: unsupported
    if body.startswith("/") and body.endswith("/") and len(body) > 1:
        return None  # regex rule: unsupported

    script_only = True
    domains: tuple[str, ...] = ()
    excluded: tuple[str, ...] = ()
    for opt in options:
        if opt == "~script":
            script_only = False  # rule explicitly excludes script loads
        elif opt.startswith("domain="):
            values = [d for d in opt[len("domain=") :].split("|") if d]
            domains = tuple(d for d in values if not d.startswith("~"))
            excluded = tuple(d[1:] for d in values if d.startswith("~"))

    anchor_start = anchor_end = False
    if body.startswith("||"):
        kind = FilterRuleKind.DOMAIN_ANCHOR
        body = body[2:]
    else:
        if body.startswith("|"):
            anchor_start = True
            body = body[1:]
        if body.endswith("|"):
            anchor_end = True
            body = body[:-1]
        kind = FilterRuleKind.EXACT_ADDRESS if (anchor_start or anchor_end) else FilterRuleKind.SUBSTRING
    if not body:
        return None

    parts = tuple(p for p in re.split(r"([*^])", body) if p)
    return FilterRule(
        raw=line,
        kind=kind,
        pattern_parts=parts,
        is_exception=is_exception,
        options=options,
        domains=domains,
        excluded_domains=excluded,
        script_only=script_only,
        regex=_compile_rule(kind, parts, anchor_start, anchor_end),
    )


def parse_filter_list(text: str) -> ParsedFilterList:
    """Parse a filter list; skipped counts unsupported (not cosmetic) lines."""
    rules: list[FilterRule] = []
    skipped = 0
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("!") or stripped.startswith("["):
            continue
        if any(marker in stripped for marker in _ELEMENT_HIDING_MARKERS):
            continue
        rule = parse_filter_line(line)
        if rule is None:
            skipped += 1
        else:
            rules.append(rule)
    return ParsedFilterList(rules=rules, skipped=skipped)


def _host_of(url: str) -> str:
    parsed = urllib.parse.urlsplit(url)
    if not parsed.scheme or not re.match(_SCHEME_RE, url):
        raise InvalidUrlError(f"not an absolute URL: {url!r}")
    return (parsed.hostname or "").lower()


def _domain_matches(host: str, domain: str) -> bool:
    domain = domain.lower()
    return host == domain or host.endswith("." + domain)


def _rule_applies(rule: FilterRule, url: str, host: str) -> bool:
    if not rule.script_only:
        return False
    if rule.excluded_domains and any(_domain_matches(host, d) for d in rule.excluded_domains):
        return False
    if rule.domains and not any(_domain_matches(host, d) for d in rule.domains):
        # Without page context the script's own host stands in for the page.
        return False
    return rule.regex.search(url) is not None


def matches_filter(rules: Iterable[FilterRule], url: str) -> list[FilterRule]:
    """All block rules matching the URL; empty if any exception matches."""
    host = _host_of(url)
    blocks: list[FilterRule] = []
    for rule in rules:
        if _rule_applies(rule, url, host):
            if rule.is_exception:
                return []
            blocks.append(rule)
    return blocks


@dataclass(frozen=True)
class FilterHit:
    list_name: str
    rule: str


class FilterSet:
    """Named filter lists matched together; exceptions apply across lists."""

    def __init__(self, lists: Iterable[tuple[str, Sequence[FilterRule]]] = ()) -> None:
        self.lists: list[tuple[str, list[FilterRule]]] = [(n, list(r)) for n, r in lists]
        self.skipped = 0

    @classmethod
    def from_files(cls, paths: Iterable[str]) -> FilterSet:
        from pathlib import Path

        fs = cls()
        for path in paths:
            parsed = parse_filter_list(Path(path).read_text(encoding="utf-8"))
            fs.lists.append((Path(path).name, parsed.rules))
            fs.skipped += parsed.skipped
        return fs

    def match(self, url: str) -> list[FilterHit]:
        try:
            host = _host_of(url)
        except InvalidUrlError:
            return []
        hits: list[FilterHit] = []
        for list_name, rules in self.lists:
            for rule in rules:
                if _rule_applies(rule, url, host):
                    if rule.is_exception:
                        return []
                    hits.append(FilterHit(list_name, rule.raw))
        return hits


@dataclass(frozen=True)
class KeywordHit:
    keyword: str
    count: int


def keyword_hits(
    source_text: str | None,
    script_id: str,
    keywords: Sequence[str],
    source_url: str = "",
) -> list[KeywordHit]:
    """Case-insensitive substring tally over source text, id and URL."""
    haystacks = []
    if source_text:
        haystacks.append(source_text.lower())
    haystacks.append(script_id.lower())
    if source_url and source_url != script_id:
        haystacks.append(source_url.lower())
    hits = []
    for keyword in keywords:
        needle = keyword.lower()
        total = sum(h.count(needle) for h in haystacks)
        if total:
            hits.append(KeywordHit(keyword, total))
    return hits


@dataclass(frozen=True)
class ExfiltrationHit:
    value_excerpt: str
    destination_url: str


def exfiltration_signals(record: ScriptRecord) -> list[ExfiltrationHit]:
    """Observed attribute values found inside outbound payloads.

    Values shorter than MIN_EXFIL_VALUE_LEN are ignored (too likely to
    collide by chance). Each payload is checked verbatim and after percent
    decoding; hashed or otherwise transformed values are undetectable here.
    """
    values = [v for v in record.observed_values if len(v) >= MIN_EXFIL_VALUE_LEN]
    if not values:
        return []
    hits = []
    for send in record.network_sends:
        payload = send.payload.decode("utf-8", errors="replace")
        decoded = urllib.parse.unquote(payload)
        for value in values:
            if value in payload or value in decoded:
                excerpt = value if len(value) <= 80 else value[:77] + "..."
                hits.append(ExfiltrationHit(excerpt, send.url))
    return hits


@dataclass(frozen=True)
class EvidenceBundle:
    """Everything a reviewer sees for one pending script.

    criteria_met counts the four signals that currently hold; the label
    suggestion flips to fingerprinter at two or more. The privacy-policy
    flag is reviewer-controlled and defaults to unchecked.
    """

    script_id: str
    filter_hits: tuple[FilterHit, ...]
    keyword_hits: tuple[KeywordHit, ...]
    exfiltration_hits: tuple[ExfiltrationHit, ...]
    privacy_policy_checked: bool
    similarity: SimilarityResult
    clean_intersection: frozenset[AttributeKey]
    criteria_met: int
    suggested_label: Label

    @staticmethod
    def _derive(filter_hits, keyword_hits_, exfil_hits, privacy: bool) -> tuple[int, Label]:
        met = int(bool(filter_hits)) + int(bool(keyword_hits_)) + int(bool(exfil_hits)) + int(privacy)
        return met, Label.FINGERPRINTER if met >= 2 else Label.UNKNOWN

    def with_privacy_policy(self, checked: bool) -> EvidenceBundle:
        met, suggestion = self._derive(
            self.filter_hits, self.keyword_hits, self.exfiltration_hits, checked
        )
        return replace(
            self, privacy_policy_checked=checked, criteria_met=met, suggested_label=suggestion
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "script_id": self.script_id,
            "filter_hits": [{"list": h.list_name, "rule": h.rule} for h in self.filter_hits],
            "keyword_hits": [{"keyword": h.keyword, "count": h.count} for h in self.keyword_hits],
            "exfiltration_hits": [
                {"value_excerpt": h.value_excerpt, "destination_url": h.destination_url}
                for h in self.exfiltration_hits
            ],
            "privacy_policy_checked": self.privacy_policy_checked,
            "similarity": {
                "score": str(self.similarity.score),
                "score_float": float(self.similarity.score),
                "matched_fingerprinter_id": self.similarity.matched_fingerprinter_id,
                "intersection": _keys_json(self.similarity.intersection),
            },
            "clean_intersection": _keys_json(self.clean_intersection),
            "criteria_met": self.criteria_met,
            "suggested_label": self.suggested_label.value,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> EvidenceBundle:
        from fractions import Fraction

        sim = data["similarity"]
        similarity = SimilarityResult(
            script_id=data["script_id"],
            score=Fraction(sim["score"]),
            matched_fingerprinter_id=sim["matched_fingerprinter_id"],
            intersection=_keys_from_json(sim["intersection"]),
        )
        return cls(
            script_id=data["script_id"],
            filter_hits=tuple(FilterHit(h["list"], h["rule"]) for h in data["filter_hits"]),
            keyword_hits=tuple(
                KeywordHit(h["keyword"], h["count"]) for h in data["keyword_hits"]
            ),
            exfiltration_hits=tuple(
                ExfiltrationHit(h["value_excerpt"], h["destination_url"])
                for h in data["exfiltration_hits"]
            ),
            privacy_policy_checked=data["privacy_policy_checked"],
            similarity=similarity,
            clean_intersection=_keys_from_json(data["clean_intersection"]),
            criteria_met=data["criteria_met"],
            suggested_label=Label(data["suggested_label"]),
        )


def _keys_json(keys: frozenset[AttributeKey]) -> list[dict[str, Any]]:
    return [
        {"api": k.name, "args": list(k.args)}
        for k in sorted(keys, key=lambda k: k.sort_key)
    ]


def _keys_from_json(entries: Iterable[Mapping[str, Any]]) -> frozenset[AttributeKey]:
    return frozenset(AttributeKey(e["api"], tuple(e.get("args", ()))) for e in entries)


def build_evidence(
    record: ScriptRecord,
    similarity: SimilarityResult,
    clean_intersection: frozenset[AttributeKey],
    filters: FilterSet | None = None,
    keywords: Sequence[str] | None = None,
) -> EvidenceBundle:
    """Assemble the reviewer bundle; privacy starts unchecked."""
    if keywords is None:
        keywords = default_keywords()
    filter_hits = tuple(filters.match(record.source_url)) if filters else ()
    kw_hits = tuple(keyword_hits(record.source_text, record.script_id, keywords, record.source_url))
    exfil = tuple(exfiltration_signals(record))
    met, suggestion = EvidenceBundle._derive(filter_hits, kw_hits, exfil, False)
    return EvidenceBundle(
        script_id=record.script_id,
        filter_hits=filter_hits,
        keyword_hits=kw_hits,
        exfiltration_hits=exfil,
        privacy_policy_checked=False,
        similarity=similarity,
        clean_intersection=clean_intersection,
        criteria_met=met,
        suggested_label=suggestion,
    )


def default_keywords() -> list[str]:
    import json
    from importlib import resources

    text = resources.files("fpclassify.data").joinpath("keywords.json").read_text("utf-8")
    return list(json.loads(text))
