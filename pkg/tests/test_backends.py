import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from fsmrag.backends import (
    HttpBackend,
    HttpBackendConfig,
    ScriptedBackend,
    SequenceBackend,
    build_backend,
    prompt_hash,
)
from fsmrag.errors import BackendError, ContractError, FixtureGapError


def test_scripted_exact_lookup():
    b = ScriptedBackend([{"module": "decompose", "match": "exact", "input": "p1", "output": "[Finish]"}])
    assert b.complete("decompose", "p1") == "[Finish]"


def test_scripted_hash_lookup():
    prompt = "some long prompt body"
    b = ScriptedBackend(
        [{"module": "judge", "match": "hash", "input": prompt_hash(prompt), "output": "[Relevant]"}]
    )
    assert b.complete("judge", prompt) == "[Relevant]"


def test_scripted_miss_names_module_and_hash():
    b = ScriptedBackend()
    with pytest.raises(FixtureGapError) as exc:
        b.complete("decompose", "unseen prompt")
    assert "decompose" in str(exc.value)
    assert prompt_hash("unseen prompt")[:12] in str(exc.value)


def test_scripted_from_file(tmp_path):
    path = tmp_path / "fixtures.jsonl"
    path.write_text(
        json.dumps({"module": "complete", "match": "exact", "input": "p", "output": "yes"}) + "\n"
    )
    assert ScriptedBackend.from_file(path).complete("complete", "p") == "yes"


def test_sequence_backend_fifo():
    b = SequenceBackend({"decompose": ["[Next] a?", "[Finish]"]})
    assert b.complete("decompose", "x") == "[Next] a?"
    assert b.complete("decompose", "y") == "[Finish]"
    with pytest.raises(FixtureGapError):
        b.complete("decompose", "z")


def test_build_backend_spec_errors():
    with pytest.raises(ContractError):
        build_backend("magic:thing")
    with pytest.raises(ContractError):
        build_backend("scripted:")


class _StubHandler(BaseHTTPRequestHandler):
    canned: dict = {}
    fail_next: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if _StubHandler.fail_next:
            code = _StubHandler.fail_next.pop(0)
            self.send_response(code)
            self.end_headers()
            return
        prompt = body.get("prompt", "")
        response = {"choices": [{"text": f"echo: {prompt}"}]}
        payload = json.dumps(response).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/complete"
    server.shutdown()


def test_http_backend_round_trip(stub_server):
    config = HttpBackendConfig(
        endpoint=stub_server,
        prompt_path="prompt",
        output_path="choices.0.text",
        request_body={"prompt": "", "temperature": 0},
    )
    backend = HttpBackend(config)
    assert backend.complete("complete", "the prompt") == "echo: the prompt"


def test_http_backend_retries_5xx_once(stub_server):
    _StubHandler.fail_next = [500]
    config = HttpBackendConfig(
        endpoint=stub_server, prompt_path="prompt", output_path="choices.0.text"
    )
    assert HttpBackend(config).complete("judge", "p") == "echo: p"


def test_http_backend_gives_up_after_two_5xx(stub_server):
    _StubHandler.fail_next = [500, 503]
    config = HttpBackendConfig(
        endpoint=stub_server, prompt_path="prompt", output_path="choices.0.text"
    )
    with pytest.raises(BackendError):
        HttpBackend(config).complete("judge", "p")


def test_http_backend_4xx_is_error(stub_server):
    _StubHandler.fail_next = [403]
    config = HttpBackendConfig(
        endpoint=stub_server, prompt_path="prompt", output_path="choices.0.text"
    )
    with pytest.raises(BackendError, match="403"):
        HttpBackend(config).complete("judge", "p")
