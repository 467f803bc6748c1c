from __future__ import annotations

import hashlib

import pytest

from fpclassify import (
    AttributeKey,
    AttributeSet,
    GroundTruthManifest,
    ScriptRecord,
)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    del exitstatus, config
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, ()):
            if "test_acceptance.py::" not in report.nodeid:
                continue
            name = report.nodeid.split("::")[-1]
            verdict = "PASS" if status == "passed" else "FAIL"
            lines.append((name, verdict))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}")


def content_hash(seed: str) -> str:
    return hashlib.sha256(seed.encode()).hexdigest()


def key(name: str, *args: str) -> AttributeKey:
    return AttributeKey(name, tuple(args))


def attr_set(*names: str, counts: dict[str, int] | None = None) -> AttributeSet:
    counts = counts or {}
    return AttributeSet({key(n): counts.get(n, 1) for n in names})


def record(script_id: str, *names: str, **kwargs) -> ScriptRecord:
    defaults = dict(
        script_id=script_id,
        source_url=kwargs.pop("source_url", f"https://scripts.example/{script_id}.js"),
        content_hash=kwargs.pop("content_hash", content_hash(script_id)),
        attributes=kwargs.pop("attributes", attr_set(*names)),
    )
    return ScriptRecord(**defaults, **kwargs)


@pytest.fixture
def four_script_corpus():
    """The committed fidelity fixture: matrix {f1:{A,B,C}, f2:{C,D}},
    scripts s1{A,B,C}, s2{A,B}, s3{E}, s4{C,D,E}."""
    records = [
        record("f1", "A", "B", "C"),
        record("f2", "C", "D"),
        record("s1", "A", "B", "C"),
        record("s2", "A", "B"),
        record("s3", "E"),
        record("s4", "C", "D", "E"),
    ]
    corpus = {r.script_id: r for r in records}
    manifest = GroundTruthManifest(("f1", "f2"))
    oracle = {"s2": "non-fingerprinter", "s4": "fingerprinter", "s3": "unknown"}
    return corpus, manifest, oracle
