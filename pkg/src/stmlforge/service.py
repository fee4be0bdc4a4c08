"""Local HTTP+JSON service hosting interactive derivation sessions.

Single-user desk tool: sessions live in memory, optionally snapshotted as
JSON into --state-dir. Every mutation is serialized per session; the
candidate list and apply results are byte-identical to the CLI's.
"""

from __future__ import annotations

import difflib
import json
import pathlib
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .annotations import pragma_lines_for_entries
from .driver import Session
from .errors import (
    NotApplicableError,
    ParseError,
    ReadinessError,
    StmlforgeError,
    UnknownTargetError,
)
from .properties import Tri
from .ruledsl import Rule, builtin_rules
from .translate import emit_openmp, readiness

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
}


class SessionManager:
    def __init__(self, rules: Optional[list[Rule]] = None, state_dir: Optional[str] = None):
        self.rules = rules if rules is not None else builtin_rules()
        self.state_dir = pathlib.Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()

    def create(self, source: str, target: Optional[str]) -> Session:
        session = Session(source, target=target, rules=self.rules)
        with self._registry:
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self.snapshot(session)
        return session

    def get(self, session_id: str) -> Optional[Session]:
        with self._registry:
            session = self._sessions.get(session_id)
        if session is not None:
            return session
        return self.restore(session_id)

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry:
            return self._locks.setdefault(session_id, threading.Lock())

    def snapshot(self, session: Session):
        if not self.state_dir:
            return
        payload = {
            "id": session.id,
            "source": session.initial.text,
            "target": session.target,
            "steps": [{"rule": s.rule, "pos": s.pos} for s in session.steps],
        }
        (self.state_dir / f"{session.id}.json").write_text(json.dumps(payload, indent=2))

    def restore(self, session_id: str) -> Optional[Session]:
        if not self.state_dir or not re.fullmatch(r"[0-9a-f]{12}", session_id):
            return None
        path = self.state_dir / f"{session_id}.json"
        if not path.exists():
            return None
        payload = json.loads(path.read_text())
        session = Session(payload["source"], target=payload.get("target"),
                          rules=self.rules, session_id=session_id)
        for step in payload["steps"]:
            session.apply(step["rule"], step["pos"])
        with self._registry:
            self._sessions[session_id] = session
            self._locks.setdefault(session_id, threading.Lock())
        return session


def session_payload(session: Session) -> dict:
    state = session.current
    current_text = state.text
    candidates = []
    for c in session.candidates():
        try:
            preview = session.preview(c.rule, c.pos, force=c.verdict is Tri.UNKNOWN)
            diff = "".join(
                difflib.unified_diff(
                    current_text.splitlines(keepends=True),
                    preview.splitlines(keepends=True),
                    fromfile="current",
                    tofile=f"{c.rule}@{c.pos}",
                )
            )
        except StmlforgeError:
            diff = ""
        candidates.append(
            {"rule": c.rule, "pos": c.pos, "verdict": c.verdict.value, "preview_diff": diff}
        )
    pragmas = []
    for anchor in sorted({e.anchor for e in state.store.entries}):
        pragmas.append(
            {
                "pos": anchor,
                "lines": pragma_lines_for_entries(state.store.entries_at(anchor)),
            }
        )
    return {
        "session_id": session.id,
        "code": current_text,
        "target": session.target,
        "pragmas": pragmas,
        "candidates": candidates,
        "history": [
            {"step": i + 1, "rule": s.rule, "pos": s.pos} for i, s in enumerate(session.steps)
        ],
    }


def make_handler(manager: SessionManager, ui_dir: Optional[pathlib.Path]):
    class Handler(BaseHTTPRequestHandler):
        server_version = "stmlforge"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- plumbing -----------------------------------------------------------

        def send_json(self, status: int, payload):
            body = json.dumps(payload, indent=2).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def send_error_json(self, status: int, message: str):
            self.send_json(status, {"error": message})

        def read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                payload = json.loads(raw or b"{}")
            except json.JSONDecodeError:
                raise ValueError("request body is not valid JSON")
            if not isinstance(payload, dict):
                raise ValueError("request body must be a JSON object")
            return payload

        def with_session(self, session_id):
            session = manager.get(session_id)
            if session is None:
                self.send_error_json(404, f"unknown session {session_id!r}")
                return None
            return session

        # -- routes --------------------------------------------------------------

        def do_GET(self):
            m = re.fullmatch(r"/sessions/([0-9a-f]+)", self.path)
            if m:
                session = self.with_session(m.group(1))
                if session:
                    with manager.lock(session.id):
                        self.send_json(200, session_payload(session))
                return
            m = re.fullmatch(r"/sessions/([0-9a-f]+)/export", self.path)
            if m:
                session = self.with_session(m.group(1))
                if session:
                    with manager.lock(session.id):
                        body = session.export_jsonl().encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/x-ndjson")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                return
            if self.serve_static():
                return
            self.send_error_json(404, f"no route for GET {self.path}")

        def serve_static(self) -> bool:
            if ui_dir is None:
                return False
            path = self.path.split("?")[0]
            if path == "/":
                candidate = ui_dir / "public" / "index.html"
                if not candidate.is_file():
                    candidate = ui_dir / "index.html"
            else:
                rel = path.lstrip("/")
                candidate = (ui_dir / rel).resolve()
                try:
                    candidate.relative_to(ui_dir.resolve())
                except ValueError:
                    return False
            if not candidate.is_file():
                return False
            body = candidate.read_bytes()
            self.send_response(200)
            ctype = CONTENT_TYPES.get(candidate.suffix, "application/octet-stream")
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return True

        def do_POST(self):
            try:
                body = self.read_body()
            except ValueError as exc:
                self.send_error_json(422, str(exc))
                return
            if self.path == "/sessions":
                source = body.get("source")
                if not isinstance(source, str) or not source.strip():
                    self.send_error_json(422, "missing 'source'")
                    return
                try:
                    session = manager.create(source, body.get("target"))
                except (ParseError, StmlforgeError) as exc:
                    self.send_error_json(422, f"invalid source: {exc}")
                    return
                self.send_json(200, {"session_id": session.id})
                return
            m = re.fullmatch(r"/sessions/([0-9a-f]+)/(apply|undo|translate)", self.path)
            if not m:
                self.send_error_json(404, f"no route for POST {self.path}")
                return
            session = self.with_session(m.group(1))
            if session is None:
                return
            action = m.group(2)
            with manager.lock(session.id):
                if action == "apply":
                    rule, pos = body.get("rule"), body.get("pos")
                    current = {(c.rule, c.pos): c.verdict for c in session.candidates()}
                    if (rule, pos) not in current:
                        self.send_error_json(
                            409, f"stale candidate ({rule!r}, {pos!r}) is not applicable now"
                        )
                        return
                    force = bool(body.get("force")) or current[(rule, pos)] is Tri.UNKNOWN
                    try:
                        session.apply(rule, pos, force=force)
                    except NotApplicableError as exc:
                        self.send_error_json(409, str(exc))
                        return
                    manager.snapshot(session)
                    self.send_json(200, session_payload(session))
                elif action == "undo":
                    if not session.undo():
                        self.send_error_json(409, "nothing to undo")
                        return
                    manager.snapshot(session)
                    self.send_json(200, session_payload(session))
                elif action == "translate":
                    target = body.get("target") or session.target
                    if not target:
                        self.send_error_json(422, "no target given or annotated")
                        return
                    try:
                        if target == "openmp":
                            output = emit_openmp(session.current.program, session.current.store)
                        else:
                            report = readiness(session.current.program,
                                               session.current.store, target)
                            if not report.ready:
                                raise ReadinessError(
                                    "; ".join(b.reason for b in report.blocking)
                                )
                            output = session.current.text
                    except UnknownTargetError as exc:
                        self.send_error_json(422, str(exc))
                        return
                    except ReadinessError as exc:
                        self.send_error_json(409, f"not ready: {exc}")
                        return
                    self.send_json(200, {"target": target, "output": output})

    return Handler


def serve(
    port: int = 8787,
    state_dir: Optional[str] = None,
    ui_dir: Optional[str] = None,
    rules: Optional[list[Rule]] = None,
):
    manager = SessionManager(rules=rules, state_dir=state_dir)
    resolved_ui = _default_ui_dir() if ui_dir is None else pathlib.Path(ui_dir)
    httpd = make_server(port, manager, resolved_ui)
    host, actual_port = httpd.server_address[:2]
    print(f"serving on http://127.0.0.1:{actual_port}", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()


def make_server(port, manager: SessionManager, ui_dir: Optional[pathlib.Path]):
    handler = make_handler(manager, ui_dir if ui_dir and ui_dir.exists() else None)
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def _default_ui_dir() -> Optional[pathlib.Path]:
    root = pathlib.Path(__file__).resolve().parents[2]
    candidate = root / "frontend"
    return candidate if candidate.exists() else None
