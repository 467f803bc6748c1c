"""HTTP review surface for driving manual decisions from a browser.

The classification engine runs on a worker thread and blocks, one script
at a time, on a queue bridge. HTTP clients observe the single current
pending item, read its evidence bundle and submit exactly one label for
it; a submission for anything other than the current item is stale. All
state reads go through the same lock the engine mutates under, so
responses always see a consistent partition.

Endpoints (JSON over HTTP, UTF-8):

    GET  /api/progress
    GET  /api/queue/next[?wait=seconds]     long-poll, capped at 30 s
    POST /api/labels                        {script_id, label, privacy_policy_checked}
    GET  /api/scripts/{id}
    GET  /api/labels

Status codes: 200, 400 (invalid label or body), 404 (unknown id or path),
409 (stale submission). With a ``ui_dir`` the server also serves static
assets at "/".
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
import urllib.parse
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable, Mapping

from .classifier import (
    ClassificationEngine,
    DecisionAborted,
    DecisionRequest,
    SessionState,
)
from .evidence import EvidenceBundle
from .model import Label, ScriptRecord

logger = logging.getLogger(__name__)

MAX_WAIT_SECONDS = 30.0
_MAX_BODY = 1 << 20


class StaleSubmissionError(ValueError):
    """The submitted script_id is not the current pending item."""


class InvalidLabelError(ValueError):
    """The submitted label is not one of the three known labels."""


@dataclass(frozen=True)
class PendingItem:
    """The one script currently waiting on a reviewer."""

    script_id: str
    evidence: EvidenceBundle | None
    position: int
    pass_index: int
    queue_length: int

    def to_json(self) -> dict[str, Any]:
        return {
            "script_id": self.script_id,
            "evidence": self.evidence.to_json() if self.evidence else None,
            "position": self.position,
            "pass_index": self.pass_index,
            "queue_length": self.queue_length,
        }


class ReviewSession:
    """Couples a classification engine to the blocking review queue."""

    def __init__(
        self,
        build_engine: Callable[..., ClassificationEngine],
        records: Mapping[str, ScriptRecord],
        *,
        on_manual_decision: Callable[[SessionState], None] | None = None,
    ) -> None:
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._pending: PendingItem | None = None
        self._answer: Label | None = None
        self._shutdown = False
        self.finished = False
        self.error: BaseException | None = None
        self.records = dict(records)
        self.engine = build_engine(
            provider=self._provide_decision,
            lock=self._lock,
            on_manual_decision=on_manual_decision,
        )
        self.state: SessionState = self.engine.state
        self._thread = threading.Thread(target=self._run, name="classifier", daemon=True)

    # -- engine side -----------------------------------------------------

    def start(self) -> None:
        self._thread.start()

    def _run(self) -> None:
        try:
            self.engine.classify_all()
        except DecisionAborted:
            logger.info("classification loop stopped before completion")
        except BaseException as exc:  # surfaced via progress/logs
            logger.exception("classification loop failed")
            with self._cond:
                self.error = exc
        finally:
            with self._cond:
                self.finished = True
                self._pending = None
                self._cond.notify_all()

    def _provide_decision(self, request: DecisionRequest) -> Label:
        with self._cond:
            if self._shutdown:
                raise DecisionAborted("session is shutting down")
            self._pending = PendingItem(
                script_id=request.script_id,
                evidence=request.evidence,
                position=request.position,
                pass_index=request.pass_index,
                queue_length=request.queue_length,
            )
            self._answer = None
            self._cond.notify_all()
            while self._answer is None and not self._shutdown:
                self._cond.wait()
            self._pending = None
            if self._answer is None:
                raise DecisionAborted("session is shutting down")
            answer = self._answer
            self._answer = None
            return answer

    def shutdown(self) -> None:
        """Unblock the engine thread; the state stays valid and resumable."""
        with self._cond:
            self._shutdown = True
            self._cond.notify_all()

    def join(self, timeout: float | None = None) -> None:
        if self._thread.is_alive():
            self._thread.join(timeout)

    # -- client side -----------------------------------------------------

    def progress(self) -> dict[str, Any]:
        with self._lock:
            counts = self.state.counts()
            return {
                **counts,
                "pass_index": self.state.pass_count,
                "manual_decisions": self.state.manual_decision_count,
                "finished": self.finished or self.state.completed,
                "error": str(self.error) if self.error else None,
            }

    def next_pending(self, wait: float = 0.0) -> dict[str, Any]:
        """Current pending item; optionally long-poll until one appears."""
        wait = min(wait, MAX_WAIT_SECONDS)
        with self._cond:
            if wait > 0 and self._pending is None and not self.finished:
                self._cond.wait_for(lambda: self._pending is not None or self.finished, timeout=wait)
            return {
                "pending": self._pending.to_json() if self._pending else None,
                "finished": self.finished or self.state.completed,
            }

    def submit_label(
        self, script_id: str, label_text: str, privacy_policy_checked: bool = False
    ) -> dict[str, Any]:
        """Answer the current pending item; exactly one submission wins."""
        try:
            label = Label(label_text)
        except ValueError:
            raise InvalidLabelError(f"not a label: {label_text!r}") from None
        with self._cond:
            if self._pending is None or self._pending.script_id != script_id:
                raise StaleSubmissionError(
                    f"{script_id!r} is not the current pending item"
                )
            bundle = self.state.evidence.get(script_id)
            if bundle is not None and bundle.privacy_policy_checked != privacy_policy_checked:
                self.state.evidence[script_id] = bundle.with_privacy_policy(privacy_policy_checked)
            self._answer = label
            self._pending = None
            self._cond.notify_all()
        return {
            "accepted": True,
            "recompute_triggered": label in (Label.FINGERPRINTER, Label.NON_FINGERPRINTER),
        }

    def script_detail(self, script_id: str) -> dict[str, Any]:
        record = self.records.get(script_id)
        if record is None:
            raise KeyError(script_id)
        with self._lock:
            try:
                label = self.state.final_label_of(script_id)
            except KeyError:
                label = None  # ground-truth row, not part of the dataset
            event = self.state.last_event_for(script_id)
            bundle = self.state.evidence.get(script_id)
            return {
                "script_id": record.script_id,
                "source_url": record.source_url,
                "content_hash": record.content_hash,
                "origin": record.origin,
                "attributes": record.attributes.to_json_entries(),
                "network_sends": [
                    {"url": send.url, "payload_size": len(send.payload)}
                    for send in record.network_sends
                ],
                "source_text": record.source_text,
                "label": label.value if label else None,
                "label_event": event.to_json() if event else None,
                "evidence": bundle.to_json() if bundle else None,
            }

    def label_events(self) -> dict[str, Any]:
        with self._lock:
            return {"events": [e.to_json() for e in self.state.decision_log]}


class ReviewApiHandler(BaseHTTPRequestHandler):
    server_version = "fpclassify"
    protocol_version = "HTTP/1.1"

    @property
    def session(self) -> ReviewSession:
        return self.server.session  # type: ignore[attr-defined]

    @property
    def ui_dir(self) -> Path | None:
        return self.server.ui_dir  # type: ignore[attr-defined]

    def log_message(self, format: str, *args: Any) -> None:
        logger.debug("%s %s", self.address_string(), format % args)

    def _send_json(self, status: int, payload: Mapping[str, Any]) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def do_GET(self) -> None:  # noqa: N802 - http.server naming
        parsed = urllib.parse.urlsplit(self.path)
        route = parsed.path
        try:
            if route == "/api/progress":
                self._send_json(200, self.session.progress())
            elif route == "/api/queue/next":
                params = urllib.parse.parse_qs(parsed.query)
                try:
                    wait = float(params.get("wait", ["0"])[0])
                except ValueError:
                    self._error(400, "wait must be a number")
                    return
                self._send_json(200, self.session.next_pending(wait=max(0.0, wait)))
            elif route.startswith("/api/scripts/"):
                script_id = urllib.parse.unquote(route[len("/api/scripts/") :])
                try:
                    self._send_json(200, self.session.script_detail(script_id))
                except KeyError:
                    self._error(404, f"unknown script: {script_id}")
            elif route == "/api/labels":
                self._send_json(200, self.session.label_events())
            else:
                self._serve_static(route)
        except BrokenPipeError:  # client went away mid-response
            pass

    def do_POST(self) -> None:  # noqa: N802 - http.server naming
        parsed = urllib.parse.urlsplit(self.path)
        if parsed.path != "/api/labels":
            self._error(404, "not found")
            return
        length = int(self.headers.get("Content-Length", 0))
        if length <= 0 or length > _MAX_BODY:
            self._error(400, "missing or oversized request body")
            return
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            self._error(400, f"invalid JSON body: {exc}")
            return
        if not isinstance(body, dict) or "script_id" not in body or "label" not in body:
            self._error(400, "body must be {script_id, label, privacy_policy_checked}")
            return
        try:
            ack = self.session.submit_label(
                str(body["script_id"]),
                str(body["label"]),
                bool(body.get("privacy_policy_checked", False)),
            )
        except InvalidLabelError as exc:
            self._error(400, str(exc))
            return
        except StaleSubmissionError as exc:
            self._error(409, str(exc))
            return
        self._send_json(200, ack)

    def _serve_static(self, route: str) -> None:
        ui_dir = self.ui_dir
        if ui_dir is None:
            self._error(404, "not found")
            return
        rel = route.lstrip("/") or "index.html"
        target = (ui_dir / rel).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            self._error(404, "not found")
            return
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        data = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class ReviewServer:
    """ThreadingHTTPServer wired to a ReviewSession; test-friendly."""

    def __init__(
        self,
        session: ReviewSession,
        host: str = "127.0.0.1",
        port: int = 0,
        ui_dir: str | Path | None = None,
    ) -> None:
        self.session = session
        self.httpd = ThreadingHTTPServer((host, port), ReviewApiHandler)
        self.httpd.session = session  # type: ignore[attr-defined]
        self.httpd.ui_dir = Path(ui_dir) if ui_dir else None  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="review-http", daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.httpd.server_address[:2]
        return str(host), int(port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self.session.start()
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.session.shutdown()
        self.session.join(timeout=10)
