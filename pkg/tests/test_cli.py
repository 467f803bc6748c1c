from __future__ import annotations

import json
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from fpclassify import serialize_trace
from fpclassify.cli import main

from .conftest import record


def write_traces(directory: Path, records) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for r in records:
        (directory / f"{r.script_id}.json").write_text(json.dumps(serialize_trace(r)))


@pytest.fixture
def workspace(four_script_corpus, tmp_path):
    corpus, manifest, oracle_map = four_script_corpus
    traces = tmp_path / "traces"
    write_traces(traces, corpus.values())
    (tmp_path / "ground_truth.json").write_text(json.dumps(list(manifest.fingerprinter_ids)))
    (tmp_path / "oracle.json").write_text(json.dumps(oracle_map))
    return tmp_path


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def ingest(workspace) -> Path:
    out = workspace / "corpus.json"
    code = run_cli("ingest", "--traces", workspace / "traces", "--out", out)
    assert code == 0
    return out


class TestIngest:
    def test_summary_counts(self, workspace, capsys):
        ingest(workspace)
        out = capsys.readouterr().out
        assert "6 scripts, 5 distinct attributes, 0 warning(s)" in out

    def test_malformed_trace_exits_2(self, workspace, capsys):
        bad = workspace / "traces" / "bad.json"
        bad.write_text('{"script_id": "x"}')
        code = run_cli("ingest", "--traces", workspace / "traces", "--out", workspace / "c.json")
        assert code == 2

    def test_missing_directory_exits_2(self, tmp_path):
        assert run_cli("ingest", "--traces", tmp_path / "nope", "--out", tmp_path / "c.json") == 2

    def test_static_sources(self, tmp_path, capsys):
        sources = tmp_path / "js"
        sources.mkdir()
        (sources / "probe.js").write_text(
            "var ua = navigator.userAgent; var w = screen.width; var ua2 = navigator.userAgent;"
        )
        out = tmp_path / "corpus.json"
        assert run_cli("ingest", "--static-sources", sources, "--out", out) == 0
        printed = capsys.readouterr().out
        assert "1 script(s) from static source scan" in printed

        corpus = json.loads(out.read_text())
        (entry,) = corpus["scripts"]
        assert entry["origin"] == "static"
        # Hand-checked: userAgent twice, width once.
        by_api = {e["api"]: e["count"] for e in entry["events"]}
        assert by_api == {"navigator.userAgent": 2, "screen.width": 1}


class TestClassify:
    def classify(self, workspace, state="state.json", mode=None, extra=()):
        corpus = ingest(workspace)
        argv = [
            "classify",
            "--corpus", corpus,
            "--ground-truth", workspace / "ground_truth.json",
            "--state", workspace / state,
            "--mode", mode or f"oracle={workspace / 'oracle.json'}",
        ]
        argv.extend(extra)
        return run_cli(*argv)

    def test_oracle_mode_final_partition(self, workspace, capsys):
        assert self.classify(workspace) == 0
        out = capsys.readouterr().out
        assert "fingerprinter: 2" in out
        assert "non-fingerprinter: 1" in out
        assert "unknown: 1" in out
        assert "manual decisions: 3" in out
        assert (workspace / "state.json").exists()

    def test_stdout_is_byte_stable(self, workspace, capsys):
        assert self.classify(workspace, state="a.json") == 0
        first = capsys.readouterr().out
        assert self.classify(workspace, state="b.json") == 0
        second = capsys.readouterr().out
        # ingest summaries are identical too, so whole stdout must match
        assert first == second

    def test_auto_only_all_duplicates(self, workspace, tmp_path, capsys):
        corpus_records = [record("gt", "X", "Y")] + [
            record(f"c{i}", "X", "Y") for i in range(4)
        ]
        traces = tmp_path / "dup-traces"
        write_traces(traces, corpus_records)
        (tmp_path / "gt.json").write_text('["gt"]')
        out = tmp_path / "dup-corpus.json"
        assert run_cli("ingest", "--traces", traces, "--out", out) == 0
        code = run_cli(
            "classify",
            "--corpus", out,
            "--ground-truth", tmp_path / "gt.json",
            "--state", tmp_path / "dup-state.json",
            "--mode", "auto-only",
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "fingerprinter: 4" in printed
        assert "manual decisions: 0" in printed

    def test_resume_from_mid_session_snapshot(self, workspace, capsys):
        # Build the mid-session snapshot through the library, then let the
        # CLI resume it with the full oracle.
        from fpclassify import ClassificationEngine, GroundTruthManifest, ScriptedOracle
        from fpclassify.classifier import DecisionAborted
        from fpclassify.ingest import load_corpus_index, load_manifest
        from fpclassify.store import corpus_digest, manifest_digest, save_snapshot
        from .test_store import _KillAfter

        corpus_path = ingest(workspace)
        corpus = load_corpus_index(corpus_path)
        manifest = load_manifest(workspace / "ground_truth.json")
        oracle_map = json.loads((workspace / "oracle.json").read_text())
        snap = workspace / "resume.json"
        engine = ClassificationEngine.for_corpus(
            corpus, manifest, _KillAfter(oracle_map, 1),
            corpus_digest=corpus_digest(corpus.values()),
            manifest_digest=manifest_digest(manifest),
            on_manual_decision=lambda st: save_snapshot(st, snap),
        )
        with pytest.raises(DecisionAborted):
            engine.classify_all()
        capsys.readouterr()

        code = run_cli(
            "classify",
            "--corpus", corpus_path,
            "--ground-truth", workspace / "ground_truth.json",
            "--state", snap,
            "--mode", f"oracle={workspace / 'oracle.json'}",
        )
        assert code == 0
        resumed_out = capsys.readouterr().out

        assert self.classify(workspace, state="fresh.json") == 0
        fresh_out = capsys.readouterr().out
        # Same final labels; pass/decision counters differ by the interrupted pass.
        def labels_block(text):
            return text[text.index("fingerprinter:") : text.index("manual decisions")]
        assert labels_block(resumed_out) == labels_block(fresh_out)

    def test_wrong_corpus_for_snapshot_exits_2(self, workspace, tmp_path, capsys):
        assert self.classify(workspace) == 0
        capsys.readouterr()
        other = [record("gt2", "Q"), record("x1", "Q", "R")]
        traces = tmp_path / "other-traces"
        write_traces(traces, other)
        (tmp_path / "gt2.json").write_text('["gt2"]')
        out = tmp_path / "other-corpus.json"
        assert run_cli("ingest", "--traces", traces, "--out", out) == 0
        code = run_cli(
            "classify",
            "--corpus", out,
            "--ground-truth", tmp_path / "gt2.json",
            "--state", workspace / "state.json",
            "--mode", "auto-only",
        )
        assert code == 2

    def test_snapshot_write_failure_exits_3(self, workspace):
        blocked = workspace / "blocked"
        blocked.mkdir()
        code = self.classify(workspace, state="blocked")  # path is a directory
        assert code == 3

    def test_env_var_provides_state_default(self, workspace, monkeypatch, capsys):
        corpus = ingest(workspace)
        state = workspace / "env-state.json"
        monkeypatch.setenv("FPCLASSIFY_STATE", str(state))
        code = run_cli(
            "classify",
            "--corpus", corpus,
            "--ground-truth", workspace / "ground_truth.json",
            "--mode", f"oracle={workspace / 'oracle.json'}",
        )
        assert code == 0
        assert state.exists()

    def test_missing_oracle_ids_warned_not_fatal(self, workspace, capsys):
        (workspace / "oracle.json").write_text('{"s2": "non-fingerprinter"}')
        assert self.classify(workspace) == 0
        out = capsys.readouterr().out
        assert "unknown: 1" in out


class TestReport:
    @pytest.fixture
    def finished_state(self, workspace, capsys):
        corpus = ingest(workspace)
        run_cli(
            "classify",
            "--corpus", corpus,
            "--ground-truth", workspace / "ground_truth.json",
            "--state", workspace / "state.json",
            "--mode", f"oracle={workspace / 'oracle.json'}",
        )
        capsys.readouterr()
        return workspace / "state.json"

    def test_csv_header_and_rows(self, finished_state, capsys):
        assert run_cli("report", "--state", finished_state, "--format", "csv") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "script_id,label,method,score,criteria_met"
        assert len(lines) == 1 + 4
        assert [line.split(",")[0] for line in lines[1:]] == ["s1", "s2", "s3", "s4"]

    def test_json_partition_reparses(self, finished_state, capsys):
        assert run_cli("report", "--state", finished_state, "--format", "json") == 0
        doc = json.loads(capsys.readouterr().out)
        counts = doc["counts"]
        assert counts["total"] == len(doc["scripts"]) == 4
        assert counts["total"] == (
            counts["suspects"] + counts["cleans"] + counts["unknowns"] + counts["unlabeled"]
        )
        by_id = {row["script_id"]: row for row in doc["scripts"]}
        assert by_id["s1"]["method"] == "auto-score-1"
        assert by_id["s4"]["label"] == "fingerprinter"
        assert by_id["s4"]["score"] == "2/3"

    def test_text_format(self, finished_state, capsys):
        assert run_cli("report", "--state", finished_state) == 0
        out = capsys.readouterr().out
        assert "4 scripts" in out and "3 manual decisions" in out

    def test_corrupt_snapshot_exits_2(self, workspace, capsys):
        bad = workspace / "corrupt.json"
        bad.write_text("{half a docum")
        assert run_cli("report", "--state", bad, "--format", "csv") == 2


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestServeSubprocess:
    def test_serve_sigterm_snapshot_resume(self, workspace):
        corpus = ingest(workspace)
        port = free_port()
        state = workspace / "serve-state.json"
        proc = subprocess.Popen(
            [
                sys.executable, "-m", "fpclassify.cli", "serve",
                "--corpus", str(corpus),
                "--ground-truth", str(workspace / "ground_truth.json"),
                "--state", str(state),
                "--port", str(port),
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        base = f"http://127.0.0.1:{port}"
        try:
            with httpx.Client(base_url=base, timeout=5.0) as client:
                for _ in range(100):
                    try:
                        resp = client.get("/api/progress")
                        if resp.status_code == 200:
                            break
                    except httpx.TransportError:
                        time.sleep(0.1)
                else:
                    raise AssertionError("server never became ready")
                assert resp.json()["total"] == 4

                pending = None
                for _ in range(100):
                    data = client.get("/api/queue/next", params={"wait": 1}).json()
                    if data["pending"]:
                        pending = data["pending"]
                        break
                assert pending and pending["script_id"] == "s2"
                ack = client.post(
                    "/api/labels",
                    json={"script_id": "s2", "label": "non-fingerprinter"},
                ).json()
                assert ack["accepted"] is True
                # One decision made; snapshot lands on disk before we kill.
                for _ in range(100):
                    if state.exists():
                        break
                    time.sleep(0.05)

            proc.send_signal(signal.SIGTERM)
            assert proc.wait(timeout=20) == 0
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()

        assert state.exists()

        # Resume the interrupted session from the CLI; labels must complete.
        code = run_cli(
            "classify",
            "--corpus", corpus,
            "--ground-truth", workspace / "ground_truth.json",
            "--state", state,
            "--mode", f"oracle={workspace / 'oracle.json'}",
        )
        assert code == 0
        doc = json.loads(state.read_text())
        buckets = doc["state"]
        assert buckets["suspects"] == ["s1", "s4"]
        assert [c["id"] for c in buckets["cleans"]] == ["s2"]
        assert buckets["unknowns"] == ["s3"]

    def test_bind_failure_exits_2(self, workspace):
        corpus = ingest(workspace)
        port = free_port()
        with socket.socket() as blocker:
            blocker.bind(("127.0.0.1", port))
            blocker.listen(1)
            proc = subprocess.run(
                [
                    sys.executable, "-m", "fpclassify.cli", "serve",
                    "--corpus", str(corpus),
                    "--ground-truth", str(workspace / "ground_truth.json"),
                    "--state", str(workspace / "s.json"),
                    "--port", str(port),
                ],
                capture_output=True,
                timeout=30,
            )
        assert proc.returncode == 2
