import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from grpo_vqa.core import QaRecord, QuestionType


def make_record(i=0, qtype=QuestionType.SPATIAL_REASONING, reasoning="the chair is left of the table", answer="left"):
    return QaRecord(
        id=f"r{i}",
        image_ref=f"area_1/pano_{i}.png",
        question=f"Where is the chair in scene {i}?",
        question_type=qtype,
        reference_reasoning=reasoning,
        reference_answer=answer,
    )


@pytest.fixture
def record():
    return make_record()


class ScriptedChatServer:
    """Chat-completions endpoint replaying a script of responses.

    Each script entry is ``(status, content)``; a status other than 200
    returns an error body. When the script runs out the last entry
    repeats. ``delay`` seconds are spent inside every request so the
    concurrency gauge can observe overlap.
    """

    def __init__(self, script, delay=0.0):
        self.script = list(script)
        self.delay = delay
        self.requests = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with server._lock:
                    server.in_flight += 1
                    server.max_in_flight = max(server.max_in_flight, server.in_flight)
                    idx = len(server.requests)
                    server.requests.append({"path": self.path, "body": body, "auth": self.headers.get("Authorization")})
                    status, content = server.script[min(idx, len(server.script) - 1)]
                try:
                    if server.delay:
                        time.sleep(server.delay)
                    if status == 200:
                        payload = {"choices": [{"message": {"role": "assistant", "content": content}}]}
                    else:
                        payload = {"error": {"message": content}}
                    data = json.dumps(payload).encode()
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    with server._lock:
                        server.in_flight -= 1

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.httpd.daemon_threads = True
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def chat_server():
    servers = []

    def start(script, delay=0.0):
        s = ScriptedChatServer(script, delay).__enter__()
        servers.append(s)
        return s

    yield start
    for s in servers:
        s.__exit__(None, None, None)


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("TEST_JUDGE_KEY", "sk-test")
    return "TEST_JUDGE_KEY"


# -- acceptance verdicts ---------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture
def report(request):
    """Record the detail line for an acceptance criterion."""

    def note(number, detail):
        _ACCEPTANCE[number] = {"detail": detail, "nodeid": request.node.nodeid}

    return note


def pytest_runtest_logreport(report):
    if report.when != "call" and not report.failed:
        return
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if match is None:
        return
    entry = _ACCEPTANCE.setdefault(int(match.group(1)), {"detail": "did not complete", "nodeid": report.nodeid})
    entry["passed"] = report.passed and entry.get("passed", True)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        verdict = "PASS" if entry.get("passed") else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {number:2d} {verdict}: {entry['detail']}")
