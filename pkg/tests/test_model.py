from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, strategies as st

from fpclassify import (
    AttributeKey,
    AttributeSet,
    AttributeSignature,
    Label,
    ScriptRecord,
    build_attribute_set,
    canonicalize_signature,
)
from fpclassify.model import EmptyApiNameError, InvalidApiNameError, parse_label

from .conftest import attr_set, content_hash, key


class TestCanonicalizeSignature:
    def test_empty_args_identity(self):
        k = canonicalize_signature("navigator.userAgent", [])
        assert k == AttributeKey("navigator.userAgent", ())

    def test_scalar_rendering(self):
        k = canonicalize_signature(
            "CanvasRenderingContext2D.fillText", ["Cwm fjordbank", 2, 2]
        )
        assert k.args == ("Cwm fjordbank", "2", "2")

    def test_scalar_special_values(self):
        k = canonicalize_signature("x.y", [True, False, None, 2.5])
        assert k.args == ("true", "false", "null", "2.5")

    def test_composite_canonical_json(self):
        # Oracle: round-trip through the reference canonical-JSON serializer.
        raw = {"b": 1, "a": 2}
        k = canonicalize_signature("WebGLRenderingContext.getParameter", [raw])
        expected = json.dumps(json.loads(k.args[0]), sort_keys=True, separators=(",", ":"))
        assert k.args == (expected,)
        assert k.args == ('{"a":2,"b":1}',)

    def test_key_order_insensitive(self):
        a = canonicalize_signature("f", [{"b": 1, "a": 2}])
        b = canonicalize_signature("f", [{"a": 2, "b": 1}])
        assert a == b

    def test_int_and_float_render_distinctly(self):
        assert canonicalize_signature("f", [2]).args == ("2",)
        assert canonicalize_signature("f", [2.0]).args == ("2.0",)

    def test_empty_name_rejected(self):
        with pytest.raises(EmptyApiNameError):
            canonicalize_signature("", [])

    def test_control_chars_rejected(self):
        with pytest.raises(InvalidApiNameError):
            AttributeKey("navigator\x00userAgent")

    @given(
        st.lists(
            st.one_of(
                st.text(max_size=20),
                st.integers(),
                st.booleans(),
                st.none(),
                st.floats(allow_nan=False, allow_infinity=False),
                st.dictionaries(st.text(max_size=5), st.integers(), max_size=3),
            ),
            max_size=5,
        )
    )
    def test_canonicalization_idempotent(self, args):
        first = canonicalize_signature("api.name", args)
        second = canonicalize_signature("api.name", first.args)
        assert first == second

    def test_canonical_form_injective(self):
        keys = [
            key("a"),
            key("a", "b"),
            key("a", "b", "c"),
            key("a.b"),
            key("a.b", "c"),
            key("ab"),
        ]
        forms = {k.canonical() for k in keys}
        assert len(forms) == len(keys)


class TestBuildAttributeSet:
    def test_empty(self):
        assert len(build_attribute_set([])) == 0

    def test_counts_summed(self):
        a, b = key("A"), key("B")
        s = build_attribute_set(
            [AttributeSignature(a, 2), AttributeSignature(a, 3), AttributeSignature(b, 1)]
        )
        assert s.count(a) == 5
        assert s.count(b) == 1
        assert s.key_set == frozenset({a, b})

    def test_random_signatures_match_bruteforce(self):
        rng = random.Random(42)
        keys = [key(f"api.{i}") for i in range(10)]
        events = [
            AttributeSignature(rng.choice(keys), rng.randint(1, 9)) for _ in range(1000)
        ]
        built = build_attribute_set(events)

        expected: dict[AttributeKey, int] = {}
        for event in events:
            expected[event.key] = expected.get(event.key, 0) + event.count
        assert built.key_set == frozenset(expected)
        for k, count in expected.items():
            assert built.count(k) == count

    def test_count_below_one_rejected(self):
        with pytest.raises(ValueError):
            AttributeSignature(key("A"), 0)
        with pytest.raises(ValueError):
            AttributeSet({key("A"): 0})


names = st.text(alphabet="abcdefg.", min_size=1, max_size=8).filter(lambda s: s.strip("."))


@st.composite
def attribute_sets(draw, max_size=8):
    chosen = draw(st.lists(names, max_size=max_size))
    return AttributeSet({AttributeKey(n): draw(st.integers(1, 5)) for n in set(chosen)})


class TestSetAlgebra:
    @given(attribute_sets())
    def test_self_intersection_is_identity(self, s):
        assert s.intersection(s) == s.key_set

    @given(attribute_sets())
    def test_empty_intersection(self, s):
        assert s.intersection(AttributeSet.empty()) == frozenset()

    @given(attribute_sets(), attribute_sets())
    def test_union_order_independent(self, a, b):
        assert a.union(b) == b.union(a)

    def test_equality_ignores_counts(self):
        assert AttributeSet({key("A"): 1}) == AttributeSet({key("A"): 99})
        assert hash(AttributeSet({key("A"): 1})) == hash(AttributeSet({key("A"): 99}))

    def test_inequality_on_different_keys(self):
        assert attr_set("A") != attr_set("B")

    def test_items_deterministic_order(self):
        s = AttributeSet({key("b"): 1, key("a", "x"): 2, key("a"): 3})
        assert [k.display() for k, _ in s.items()] == ["a", "a(x)", "b"]

    def test_collapse_to_names(self):
        s = AttributeSet({key("f", "1"): 2, key("f", "2"): 3, key("g"): 1})
        collapsed = s.collapse_to_names()
        assert collapsed.key_set == frozenset({key("f"), key("g")})
        assert collapsed.count(key("f")) == 5

    def test_json_entries_round_trip(self):
        s = AttributeSet({key("f", "1"): 2, key("g"): 7})
        back = AttributeSet.from_json_entries(s.to_json_entries())
        assert back == s
        assert [c for _, c in back.items()] == [c for _, c in s.items()]


class TestLabel:
    def test_exactly_three_labels(self):
        assert {label.value for label in Label} == {
            "fingerprinter",
            "non-fingerprinter",
            "unknown",
        }

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("f", Label.FINGERPRINTER),
            ("fingerprinter", Label.FINGERPRINTER),
            ("N", Label.NON_FINGERPRINTER),
            ("non-fingerprinter", Label.NON_FINGERPRINTER),
            ("u", Label.UNKNOWN),
        ],
    )
    def test_parse_label(self, text, expected):
        assert parse_label(text) is expected

    def test_parse_label_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_label("maybe")


class TestScriptRecord:
    def test_content_hash_validated_and_normalized(self):
        r = ScriptRecord(
            script_id="s",
            source_url="https://x.example/s.js",
            content_hash=content_hash("s").upper(),
            attributes=attr_set(),
        )
        assert r.content_hash == content_hash("s")

    def test_bad_hash_rejected(self):
        with pytest.raises(ValueError):
            ScriptRecord(
                script_id="s",
                source_url="u",
                content_hash="abc123",
                attributes=attr_set(),
            )

    def test_attributes_may_be_empty(self):
        r = ScriptRecord(
            script_id="s",
            source_url="u",
            content_hash=content_hash("s"),
            attributes=AttributeSet.empty(),
        )
        assert len(r.attributes) == 0
