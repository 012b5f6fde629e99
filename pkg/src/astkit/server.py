"""JSON HTTP service over the orchestrator, consumed by the review UI.

Stdlib http.server keeps the artifact dependency-free; handlers are thread
safe because the orchestrator serializes per-run transitions itself.
"""
from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import (
    AstkitError,
    BackendUnavailable,
    BadMagic,
    CorruptHeader,
    CorruptLog,
    MissingHeader,
    NoDataRows,
    NonMonotonicTimestamps,
    Timeout,
    UnknownLog,
    UnknownRun,
    WrongStage,
)
from .orchestrator import Orchestrator
from .scenario import FeedbackNote

logger = logging.getLogger(__name__)

_STATUS = {
    WrongStage: 409,
    UnknownRun: 404,
    UnknownLog: 404,
    BackendUnavailable: 503,
    Timeout: 503,
    BadMagic: 400,
    CorruptHeader: 400,
    CorruptLog: 400,
    MissingHeader: 400,
    NoDataRows: 400,
    NonMonotonicTimestamps: 400,
}

_CONTENT_TYPES = {
    ".json": "application/json",
    ".txt": "text/plain; charset=utf-8",
    ".md": "text/markdown; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".csv": "text/csv",
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript",
    ".css": "text/css",
}


def _error_body(code: str, message: str) -> bytes:
    return json.dumps({"error": {"code": code, "message": message}}).encode("utf-8")


def _snake(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "astkit"

    @property
    def orc(self) -> Orchestrator:
        return self.server.orchestrator  # type: ignore[attr-defined]

    @property
    def ui_dir(self) -> Path | None:
        return self.server.ui_dir  # type: ignore[attr-defined]

    def log_message(self, fmt: str, *args) -> None:
        logger.debug("%s " + fmt, self.address_string(), *args)

    # Routing

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        self._route("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._route("POST")

    def _route(self, method: str) -> None:
        path = self.path.split("?", 1)[0]
        try:
            handler = self._find_handler(method, path)
            if handler is None:
                self._send(404, _error_body("not_found", f"no route {method} {path}"))
                return
            handler()
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            self._send(400, _error_body("bad_input", str(exc)))
        except FileNotFoundError as exc:
            self._send(404, _error_body("not_found", str(exc)))
        except AstkitError as exc:
            status = _STATUS.get(type(exc), 500)
            self._send(status, _error_body(_snake(type(exc).__name__), str(exc)))
        except Exception as exc:  # pragma: no cover - defensive
            logger.exception("unhandled error for %s %s", method, path)
            self._send(500, _error_body("internal", str(exc)))

    def _find_handler(self, method: str, path: str):
        parts = [p for p in path.split("/") if p]
        if method == "POST":
            if parts == ["api", "runs"]:
                return self._create_run
            if len(parts) == 4 and parts[:2] == ["api", "runs"]:
                action = parts[3]
                run_id = parts[2]
                if action == "feedback":
                    return lambda: self._feedback(run_id)
                if action == "approve":
                    return lambda: self._approve(run_id)
                if action == "log":
                    return lambda: self._upload_log(run_id)
            if parts == ["api", "analytics", "query"]:
                return self._analytics_query
            return None
        if parts == ["api", "runs"]:
            return self._list_runs
        if len(parts) == 3 and parts[:2] == ["api", "runs"]:
            return lambda: self._get_run(parts[2])
        if len(parts) >= 5 and parts[:2] == ["api", "runs"] and parts[3] == "artifacts":
            return lambda: self._get_artifact(parts[2], "/".join(parts[4:]))
        if parts == ["api", "logs"]:
            return self._list_logs
        if parts[:2] == ["api", "plots"] and len(parts) > 2:
            return lambda: self._get_plot("/".join(parts[2:]))
        if self.ui_dir is not None:
            return lambda: self._serve_ui(parts)
        return None

    # Handlers

    def _create_run(self) -> None:
        body = self._json_body()
        goal = body.get("goal", "")
        manifest = self.orc.start_run(goal)
        self._send_json(201, manifest.to_dict())

    def _list_runs(self) -> None:
        self._send_json(200, [m.to_dict() for m in self.orc.list_runs()])

    def _get_run(self, run_id: str) -> None:
        self._send_json(200, self.orc.load_manifest(run_id).to_dict())

    def _feedback(self, run_id: str) -> None:
        body = self._json_body()
        note = FeedbackNote(
            author=body.get("author", "reviewer"),
            text=body.get("text", ""),
            target_section=body.get("section", "all"),
        )
        manifest = self.orc.submit_feedback(run_id, note)
        self._send_json(200, manifest.to_dict())

    def _approve(self, run_id: str) -> None:
        manifest = self.orc.approve(run_id)
        self._send_json(200, manifest.to_dict())

    def _upload_log(self, run_id: str) -> None:
        data, fmt = self._read_upload()
        manifest = self.orc.ingest_flight_log(run_id, data, fmt)
        self._send_json(200, manifest.to_dict())

    def _analytics_query(self) -> None:
        body = self._json_body()
        report = self.orc.query_analytics(body.get("log_id", ""), body.get("question", ""))
        self._send_json(200, report.to_dict())

    def _list_logs(self) -> None:
        self._send_json(200, self.orc.list_logs())

    def _get_artifact(self, run_id: str, name: str) -> None:
        path = self.orc.artifact_path(run_id, name)
        self._send_file(path)

    def _get_plot(self, rel: str) -> None:
        root = self.orc.workspace.resolve()
        path = (root / rel).resolve()
        if root not in path.parents:
            raise ValueError("plot path escapes the workspace")
        if path.suffix not in (".svg", ".png") or not path.is_file():
            raise FileNotFoundError(rel)
        self._send_file(path)

    def _serve_ui(self, parts: list[str]) -> None:
        assert self.ui_dir is not None
        rel = "/".join(parts) or "index.html"
        root = self.ui_dir.resolve()
        path = (root / rel).resolve()
        if root not in path.parents and path != root:
            raise FileNotFoundError(rel)
        if path.is_dir():
            path = path / "index.html"
        if not path.is_file():
            raise FileNotFoundError(rel)
        self._send_file(path)

    # Plumbing

    def _json_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        body = json.loads(raw.decode("utf-8"))
        if not isinstance(body, dict):
            raise ValueError("request body must be a JSON object")
        return body

    def _read_upload(self) -> tuple[bytes, str | None]:
        """Log payload from a multipart form (file field) or a raw body."""
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        content_type = self.headers.get("Content-Type", "")
        if content_type.startswith("multipart/form-data"):
            match = re.search(r'boundary="?([^";]+)"?', content_type)
            if not match:
                raise ValueError("multipart body without boundary")
            filename, data = _parse_multipart(raw, match.group(1).encode("ascii"))
            return data, _format_from_name(filename)
        filename = self.headers.get("X-Filename", "")
        return raw, _format_from_name(filename)

    def _send_json(self, status: int, payload) -> None:
        self._send(status, json.dumps(payload).encode("utf-8"))

    def _send_file(self, path: Path) -> None:
        body = path.read_bytes()
        ctype = _CONTENT_TYPES.get(path.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send(self, status: int, body: bytes, ctype: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)


def _format_from_name(filename: str | None) -> str | None:
    if not filename:
        return None
    suffix = Path(filename).suffix.lower()
    if suffix in (".ulg", ".ulog"):
        return "ulog"
    if suffix == ".csv":
        return "csv"
    return None


def _parse_multipart(raw: bytes, boundary: bytes) -> tuple[str, bytes]:
    """First file part of a multipart/form-data body: (filename, content)."""
    delimiter = b"--" + boundary
    for part in raw.split(delimiter):
        if b"\r\n\r\n" not in part:
            continue
        header_blob, _, content = part.partition(b"\r\n\r\n")
        headers = header_blob.decode("utf-8", errors="replace")
        match = re.search(r'filename="([^"]*)"', headers)
        if match is None:
            continue
        return match.group(1), content.rstrip(b"\r\n").removesuffix(b"--").rstrip(b"\r\n")
    raise ValueError("multipart body contains no file part")


def serve(
    orchestrator: Orchestrator,
    host: str = "127.0.0.1",
    port: int = 8787,
    ui_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Bind the API server; the caller decides whether to block on it."""
    server = ThreadingHTTPServer((host, port), ApiHandler)
    server.orchestrator = orchestrator  # type: ignore[attr-defined]
    server.ui_dir = Path(ui_dir) if ui_dir else None  # type: ignore[attr-defined]
    return server


def serve_background(
    orchestrator: Orchestrator,
    host: str = "127.0.0.1",
    port: int = 0,
    ui_dir: str | Path | None = None,
) -> tuple[ThreadingHTTPServer, threading.Thread]:
    server = serve(orchestrator, host, port, ui_dir)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
