"""HTTP service endpoints and CLI/service parity."""

import json
import threading
import urllib.error
import urllib.request

import pytest

from stmlforge.service import SessionManager, make_server


@pytest.fixture()
def server():
    manager = SessionManager()
    httpd = make_server(0, manager, None)
    port = httpd.server_address[1]
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{port}"
    httpd.shutdown()
    httpd.server_close()


def request(base, method, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(base + path, data=data, method=method)
    if data:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode()


class TestSessions:
    def test_lifecycle(self, server, samples_dir):
        source = (samples_dir / "two_loop_scale.c").read_text()
        status, body = request(server, "POST", "/sessions", {"source": source})
        assert status == 200
        sid = json.loads(body)["session_id"]

        status, body = request(server, "GET", f"/sessions/{sid}")
        assert status == 200
        state = json.loads(body)
        assert "for (i = 0; i < N; i++) {" in state["code"]
        rules = [c["rule"] for c in state["candidates"]]
        assert "ForLoopFusion" in rules
        fusion = next(c for c in state["candidates"] if c["rule"] == "ForLoopFusion")
        assert fusion["preview_diff"].startswith("--- current")

        status, body = request(
            server, "POST", f"/sessions/{sid}/apply",
            {"rule": "ForLoopFusion", "pos": fusion["pos"]},
        )
        assert status == 200
        state2 = json.loads(body)
        assert state2["code"].count("for (") == 1
        assert state2["history"] == [{"step": 1, "rule": "ForLoopFusion", "pos": fusion["pos"]}]

        status, body = request(server, "POST", f"/sessions/{sid}/undo", {})
        assert status == 200
        assert json.loads(body)["code"] == state["code"]

    def test_unknown_session_404(self, server):
        status, _ = request(server, "GET", "/sessions/deadbeef0000")
        assert status == 404

    def test_invalid_source_422(self, server):
        status, body = request(server, "POST", "/sessions", {"source": "int a;\na = ;\n"})
        assert status == 422
        assert "invalid source" in json.loads(body)["error"]

    def test_stale_candidate_409(self, server, samples_dir):
        source = (samples_dir / "two_loop_scale.c").read_text()
        _, body = request(server, "POST", "/sessions", {"source": source})
        sid = json.loads(body)["session_id"]
        status, body = request(
            server, "POST", f"/sessions/{sid}/apply", {"rule": "UndoDistribute", "pos": 0}
        )
        assert status == 409

    def test_undo_empty_409(self, server, samples_dir):
        _, body = request(server, "POST", "/sessions",
                          {"source": (samples_dir / "two_loop_scale.c").read_text()})
        sid = json.loads(body)["session_id"]
        status, _ = request(server, "POST", f"/sessions/{sid}/undo", {})
        assert status == 409

    def test_export_jsonl(self, server, samples_dir):
        _, body = request(server, "POST", "/sessions",
                          {"source": (samples_dir / "two_loop_scale.c").read_text()})
        sid = json.loads(body)["session_id"]
        _, body = request(server, "GET", f"/sessions/{sid}")
        fusion = next(c for c in json.loads(body)["candidates"]
                      if c["rule"] == "ForLoopFusion")
        request(server, "POST", f"/sessions/{sid}/apply",
                {"rule": "ForLoopFusion", "pos": fusion["pos"]})
        status, body = request(server, "GET", f"/sessions/{sid}/export")
        assert status == 200
        record = json.loads(body.splitlines()[0])
        assert record["rule"] == "ForLoopFusion"
        assert set(record) == {"step", "rule", "pos", "before_text", "after_text"}

    def test_translate_endpoint(self, server):
        source = (
            "float c[N], v[N], k;\nint i;\n"
            "#pragma polca map BODY v c\n"
            "for (i = 0; i < N; i++)\n"
            "#pragma polca def BODY\n"
            "    c[i] = k * v[i];\n"
        )
        _, body = request(server, "POST", "/sessions", {"source": source})
        sid = json.loads(body)["session_id"]
        status, body = request(server, "POST", f"/sessions/{sid}/translate",
                               {"target": "openmp"})
        assert status == 200
        assert "#pragma omp parallel for" in json.loads(body)["output"]

    def test_translate_not_ready_409(self, server, samples_dir):
        _, body = request(server, "POST", "/sessions",
                          {"source": (samples_dir / "fold_sum.c").read_text()})
        sid = json.loads(body)["session_id"]
        status, _ = request(server, "POST", f"/sessions/{sid}/translate",
                            {"target": "openmp"})
        assert status == 409


class TestParity:
    def test_candidates_and_apply_match_cli(self, server, samples_dir, capsys):
        from stmlforge.cli import main

        source_path = samples_dir / "two_loop_scale.c"
        assert main(["candidates", str(source_path)]) == 0
        cli_candidates = json.loads(capsys.readouterr().out)

        _, body = request(server, "POST", "/sessions",
                          {"source": source_path.read_text()})
        sid = json.loads(body)["session_id"]
        _, body = request(server, "GET", f"/sessions/{sid}")
        service_candidates = [
            {"rule": c["rule"], "pos": c["pos"], "verdict": c["verdict"]}
            for c in json.loads(body)["candidates"]
        ]
        assert json.dumps(service_candidates) == json.dumps(cli_candidates)

        fusion = next(c for c in cli_candidates if c["rule"] == "ForLoopFusion")
        assert main([
            "apply", str(source_path), "--rule", "ForLoopFusion", "--pos", str(fusion["pos"]),
        ]) == 0
        cli_code = capsys.readouterr().out
        _, body = request(server, "POST", f"/sessions/{sid}/apply",
                          {"rule": "ForLoopFusion", "pos": fusion["pos"]})
        assert json.loads(body)["code"] == cli_code


class TestPersistence:
    def test_snapshot_and_restore(self, samples_dir, tmp_path):
        manager = SessionManager(state_dir=str(tmp_path))
        httpd = make_server(0, manager, None)
        port = httpd.server_address[1]
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{port}"
        try:
            _, body = request(base, "POST", "/sessions",
                              {"source": (samples_dir / "two_loop_scale.c").read_text()})
            sid = json.loads(body)["session_id"]
            _, body = request(base, "GET", f"/sessions/{sid}")
            fusion = next(c for c in json.loads(body)["candidates"]
                          if c["rule"] == "ForLoopFusion")
            request(base, "POST", f"/sessions/{sid}/apply",
                    {"rule": "ForLoopFusion", "pos": fusion["pos"]})
            _, body = request(base, "GET", f"/sessions/{sid}")
            code_before = json.loads(body)["code"]
        finally:
            httpd.shutdown()
            httpd.server_close()

        # a fresh manager restores the session from its snapshot
        manager2 = SessionManager(state_dir=str(tmp_path))
        restored = manager2.get(sid)
        assert restored is not None
        assert restored.current.text == code_before
