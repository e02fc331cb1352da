"""HTTP service backing the annotation UI.

Endpoints (all JSON unless noted):

- GET  /api/tasks/next?annotator=ID  next task holding fields this
  annotator has not judged, with their current verdicts; 204 when done.
- POST /api/judgments                one judgment; idempotent overwrite.
- GET  /api/progress                 per-annotator completion counts.
- GET  /api/report                   per-field accuracy rows.
- GET  /media/{entryId}              audio passthrough for a sampled entry.
- GET  /...                          static UI assets from ui_dir.

Judgments go straight to the append-only store, so they survive restarts.
The server is a threading HTTP server; store writes are serialized by the
store's own lock.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Sequence
from urllib.parse import parse_qs, urlparse

from .audit import (
    AuditTask,
    JudgmentStore,
    accuracy_to_dict,
    annotator_progress,
    field_accuracy_report,
    judgment_from_dict,
    make_judgment,
    next_task_for,
    task_to_dict,
)

MAX_JUDGMENT_BODY_BYTES = 64 * 1024

FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>uas audit service</title></head>
<body><h1>uas audit service</h1>
<p>No UI bundle configured. API endpoints:</p>
<ul>
<li>GET /api/tasks/next?annotator=ID</li>
<li>POST /api/judgments</li>
<li>GET /api/progress</li>
<li>GET /api/report</li>
<li>GET /media/{entryId}</li>
</ul></body></html>
"""


class AuditService:
    """Owns the server socket, the audit set, and the judgment store."""

    def __init__(
        self,
        tasks: Sequence[AuditTask],
        store: JudgmentStore,
        *,
        host: str = "127.0.0.1",
        port: int = 0,
        ui_dir: str | None = None,
        roster: tuple[str, ...] | None = None,
        required_verdicts: int = 3,
        abstention: bool = False,
    ):
        if roster is not None and len(roster) % 2 == 0:
            raise ValueError("roster size must be odd so majority vote stays well-defined")
        self.tasks = list(tasks)
        self.tasks_by_id = {task.task_id: task for task in self.tasks}
        self.media_refs = {task.entry_id: task.audio_ref for task in self.tasks}
        self.store = store
        self.ui_dir = os.path.abspath(ui_dir) if ui_dir else None
        self.roster = roster
        self.required_verdicts = required_verdicts
        self.abstention = abstention
        handler = _build_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[0], self.httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )
        self._thread.start()

    def serve_forever(self) -> None:
        self.httpd.serve_forever(poll_interval=0.05)

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None


def _build_handler(service: AuditService) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        # quiet by default; tests and batch runs do not want request logs
        def log_message(self, format: str, *args: Any) -> None:
            pass

        def _send_json(self, status: int, payload: Any) -> None:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_empty(self, status: int) -> None:
            self.send_response(status)
            self.send_header("Content-Length", "0")
            self.end_headers()

        def _send_error_json(self, status: int, message: str) -> None:
            self._send_json(status, {"error": message})

        def do_GET(self) -> None:  # noqa: N802 (stdlib handler API)
            parsed = urlparse(self.path)
            route = parsed.path
            if route == "/api/tasks/next":
                self._handle_next_task(parse_qs(parsed.query))
            elif route == "/api/progress":
                self._send_json(
                    200, {"annotators": annotator_progress(service.store, service.tasks)}
                )
            elif route == "/api/report":
                rows = field_accuracy_report(
                    service.store,
                    service.tasks,
                    required=service.required_verdicts,
                    abstention=service.abstention,
                )
                self._send_json(200, [accuracy_to_dict(row) for row in rows])
            elif route.startswith("/media/"):
                self._handle_media(route[len("/media/") :])
            else:
                self._handle_static(route)

        def do_POST(self) -> None:  # noqa: N802 (stdlib handler API)
            parsed = urlparse(self.path)
            if parsed.path != "/api/judgments":
                self._send_error_json(404, "unknown endpoint")
                return
            self._handle_judgment()

        def _handle_next_task(self, query: dict[str, list[str]]) -> None:
            annotators = query.get("annotator", [])
            if len(annotators) != 1 or not annotators[0].strip():
                self._send_error_json(400, "annotator query parameter is required")
                return
            annotator_id = annotators[0].strip()
            if service.roster is not None and annotator_id not in service.roster:
                self._send_error_json(404, f"unknown annotator {annotator_id!r}")
                return
            task = next_task_for(service.store, service.tasks, annotator_id)
            if task is None:
                self._send_empty(204)
                return
            judged = {
                field_path: service.store.verdict_of(task.task_id, annotator_id, field_path)
                for field_path in (path for path, _ in task.fields)
            }
            done = sum(
                1
                for candidate in service.tasks
                if set(service.store.judged_fields(candidate.task_id, annotator_id))
                >= {path for path, _ in candidate.fields}
            )
            payload = task_to_dict(task)
            payload["mediaUrl"] = f"/media/{task.entry_id}"
            payload["currentVerdicts"] = {
                path: verdict for path, verdict in judged.items() if verdict is not None
            }
            payload["progress"] = {"judgedTasks": done, "totalTasks": len(service.tasks)}
            self._send_json(200, payload)

        def _handle_judgment(self) -> None:
            length_header = self.headers.get("Content-Length")
            try:
                length = int(length_header or "")
            except ValueError:
                self._send_error_json(400, "Content-Length required")
                return
            if length < 0 or length > MAX_JUDGMENT_BODY_BYTES:
                self._send_error_json(400, "unreasonable body size")
                return
            raw = self.rfile.read(length)
            try:
                data = json.loads(raw)
                if not isinstance(data, dict):
                    raise ValueError("judgment must be a JSON object")
                incoming = judgment_from_dict(data)
                judgment = make_judgment(
                    incoming.task_id,
                    incoming.annotator_id,
                    incoming.field_path,
                    incoming.verdict,
                    submitted_at=None if "submittedAt" not in data else incoming.submitted_at,
                )
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                self._send_error_json(400, f"malformed judgment: {exc}")
                return
            task = service.tasks_by_id.get(judgment.task_id)
            if task is None:
                self._send_error_json(409, f"unknown taskId {judgment.task_id!r}")
                return
            if judgment.field_path not in {path for path, _ in task.fields}:
                self._send_error_json(409, f"unknown fieldPath {judgment.field_path!r}")
                return
            if service.roster is not None and judgment.annotator_id not in service.roster:
                self._send_error_json(404, f"unknown annotator {judgment.annotator_id!r}")
                return
            service.store.record(judgment)
            self._send_json(200, {"status": "ok"})

        def _handle_media(self, entry_id: str) -> None:
            ref = service.media_refs.get(entry_id)
            if ref is None:
                self._send_error_json(404, f"unknown entry {entry_id!r}")
                return
            if ref.startswith("http://") or ref.startswith("https://"):
                self.send_response(302)
                self.send_header("Location", ref)
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            if not os.path.isfile(ref):
                self._send_error_json(404, f"media file not found for {entry_id!r}")
                return
            content_type = mimetypes.guess_type(ref)[0] or "application/octet-stream"
            with open(ref, "rb") as handle:
                body = handle.read()
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _handle_static(self, route: str) -> None:
            if service.ui_dir is None:
                if route in ("/", "/index.html"):
                    body = FALLBACK_PAGE.encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "text/html; charset=utf-8")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                else:
                    self._send_error_json(404, "not found")
                return
            relative = route.lstrip("/") or "index.html"
            target = os.path.abspath(os.path.join(service.ui_dir, relative))
            # refuse anything that escapes the UI directory
            if not target.startswith(service.ui_dir + os.sep) and target != service.ui_dir:
                self._send_error_json(404, "not found")
                return
            if os.path.isdir(target):
                target = os.path.join(target, "index.html")
            if not os.path.isfile(target):
                self._send_error_json(404, "not found")
                return
            content_type = mimetypes.guess_type(target)[0] or "application/octet-stream"
            with open(target, "rb") as handle:
                body = handle.read()
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler
