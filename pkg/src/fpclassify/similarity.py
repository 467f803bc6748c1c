"""Set-similarity mathematics for the classification loop.

Scores are exact rationals (:class:`fractions.Fraction`), never floats:
the auto-label rule for suspects fires on a score of exactly 1, and that
comparison must not depend on floating point. All tie-breaking is
deterministic so that identical inputs always replay identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .model import AttributeKey, AttributeSet, ScriptRecord


class EmptyMatrixError(ValueError):
    """Scoring was attempted against a matrix with no rows."""


@dataclass(frozen=True)
class SimilarityResult:
    """Best match of one script against the fingerprinter matrix.

    ``intersection`` is the key set shared with the winning row;
    ``matched_fingerprinter_id`` is None only when the matrix was empty,
    which the scoring entry point rejects.
    """

    script_id: str
    score: Fraction
    matched_fingerprinter_id: str | None
    intersection: frozenset[AttributeKey]


def _keys(value: AttributeSet | frozenset[AttributeKey]) -> frozenset[AttributeKey]:
    return value.key_set if isinstance(value, AttributeSet) else value


def jaccard(a: AttributeSet | frozenset[AttributeKey], b: AttributeSet | frozenset[AttributeKey]) -> Fraction:
    """|keys(a) ∩ keys(b)| / |keys(a) ∪ keys(b)| as an exact rational.

    Defined as 0 when both sets are empty, so that an attribute-less
    script can never look identical to anything.
    """
    ka, kb = _keys(a), _keys(b)
    union = len(ka | kb)
    if union == 0:
        return Fraction(0)
    return Fraction(len(ka & kb), union)


def score_row_sets(
    script_keys: frozenset[AttributeKey],
    rows: Sequence[tuple[str, frozenset[AttributeKey]]],
) -> tuple[Fraction, str, frozenset[AttributeKey]]:
    """Max-score row for a bare key set; shared by the record-level API.

    Ties break toward the larger intersection, then the earlier row; the
    earliest row therefore wins the all-zero case.
    """
    if not rows:
        raise EmptyMatrixError("cannot score against an empty fingerprinter matrix")
    if not script_keys:
        # Every row scores 0 with an empty intersection; the first row wins.
        return Fraction(0), rows[0][0], frozenset()
    best_score = Fraction(-1)
    best_inter: frozenset[AttributeKey] = frozenset()
    best_id = rows[0][0]
    for row_id, row_keys in rows:
        inter = script_keys & row_keys
        union = len(script_keys | row_keys)
        score = Fraction(len(inter), union) if union else Fraction(0)
        if score > best_score or (score == best_score and len(inter) > len(best_inter)):
            best_score, best_inter, best_id = score, inter, row_id
    return best_score, best_id, best_inter


def score_against_matrix(script: ScriptRecord, matrix) -> SimilarityResult:
    """Score one script against every matrix row and keep the best tuple."""
    rows = [(row.fingerprinter_id, row.attributes.key_set) for row in matrix.rows]
    score, row_id, inter = score_row_sets(script.attributes.key_set, rows)
    return SimilarityResult(script.script_id, score, row_id, inter)


def rank_scripts(results: Iterable[SimilarityResult]) -> list[SimilarityResult]:
    """Order results for the pass walk: best candidates first.

    Descending score, then descending intersection size, then ascending
    script id. Script ids are unique, so this is a total order and sorting
    is reproducible byte for byte.
    """
    return sorted(results, key=lambda r: (-r.score, -len(r.intersection), r.script_id))


def biggest_clean_intersection(
    clean_sets: Sequence[AttributeSet | frozenset[AttributeKey]],
    fp_intersection: frozenset[AttributeKey],
) -> frozenset[AttributeKey]:
    """Largest overlap between any known-clean set and the fingerprinter
    intersection, reusing the previously saved intersection.

    Returns a subset of ``fp_intersection``; empty when no clean scripts
    exist yet. Equal-size maxima resolve to the earliest-labeled clean.
    """
    best: frozenset[AttributeKey] = frozenset()
    if not fp_intersection:
        return best
    for clean in clean_sets:
        candidate = _keys(clean) & fp_intersection
        if len(candidate) > len(best):
            best = candidate
    return best
