"""Recorded-exchange tests for the remote log-probability backend client.

A local HTTP server replays scripted responses and records every request
body, so the wire format (field names, auth header, renormalization,
retry behavior) is pinned end to end without a network.
"""

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from icm.data import Dataset, Example, LabelSpace
from icm.predictor import EMPTY_CONTEXT
from icm.remote import (
    BackendAuthError,
    BackendConfig,
    BackendProtocolError,
    BackendUnavailableError,
    RemotePredictor,
    remote_label_logprobs,
)


class ScriptedBackend:
    """Serves queued (status, body) responses and records request payloads."""

    def __init__(self):
        self.requests = []
        self.responses = []
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length))
                backend.requests.append(
                    {"path": self.path, "body": payload, "auth": self.headers.get("Authorization")}
                )
                status, body = backend.responses.pop(0)
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def backend():
    scripted = ScriptedBackend()
    yield scripted
    scripted.close()


def config_for(backend, **overrides):
    kwargs = dict(
        base_url=backend.url,
        model_name="test-model",
        auth_token_env_name="ICM_TEST_TOKEN",
        request_timeout=5.0,
        max_retries=2,
        retry_base_delay=0.01,
    )
    kwargs.update(overrides)
    return BackendConfig(**kwargs)


class TestWireFormat:
    def test_request_fields_and_renormalization(self, backend, monkeypatch):
        monkeypatch.setenv("ICM_TEST_TOKEN", "sekrit")
        backend.responses.append((200, {"logprobs": {"True": -0.2, "False": -1.8}}))
        result = remote_label_logprobs(config_for(backend), "prompt text", ("True", "False"))
        request = backend.requests[0]
        assert request["path"] == "/v1/label_logprobs"
        assert request["body"] == {
            "model": "test-model",
            "prompt": "prompt text",
            "candidates": ["True", "False"],
            "temperature": 0,
        }
        assert request["auth"] == "Bearer sekrit"
        total = sum(math.exp(lp) for lp in result.values())
        assert total == pytest.approx(1.0, abs=1e-12)
        # raw gap of 1.6 nats is preserved by renormalization
        assert result["True"] - result["False"] == pytest.approx(1.6)

    def test_predictor_counts_passes_and_normalizes(self, backend):
        backend.responses.append((200, {"logprobs": {"True": -0.7, "False": -0.7}}))
        predictor = RemotePredictor(config_for(backend), LabelSpace())
        dataset = Dataset([Example(id="a", claim_text="Claim.\nI think this Claim is")])
        prediction = predictor.label_distribution(EMPTY_CONTEXT, dataset["a"])
        assert prediction.prob("True") == pytest.approx(0.5)
        assert predictor.forward_passes == 1
        assert backend.requests[0]["body"]["prompt"] == "Claim.\nI think this Claim is"


class TestFailureModes:
    def test_transient_server_error_then_success(self, backend):
        backend.responses.append((500, {"error": "flake"}))
        backend.responses.append((200, {"logprobs": {"True": -0.5, "False": -1.0}}))
        result = remote_label_logprobs(config_for(backend), "p", ("True", "False"))
        assert len(backend.requests) == 2
        assert set(result) == {"True", "False"}

    def test_auth_failure_is_immediate(self, backend):
        backend.responses.append((401, {"error": "no"}))
        with pytest.raises(BackendAuthError):
            remote_label_logprobs(config_for(backend), "p", ("True", "False"))
        assert len(backend.requests) == 1

    def test_exhausted_retries_surface_unavailable(self, backend):
        for _ in range(3):
            backend.responses.append((503, {"error": "down"}))
        with pytest.raises(BackendUnavailableError, match="3 attempts"):
            remote_label_logprobs(config_for(backend), "p", ("True", "False"))
        assert len(backend.requests) == 3

    def test_malformed_body_is_a_protocol_error(self, backend):
        backend.responses.append((200, {"wrong_key": {}}))
        with pytest.raises(BackendProtocolError, match="malformed"):
            remote_label_logprobs(config_for(backend), "p", ("True", "False"))

    def test_missing_label_token_is_a_protocol_error(self, backend):
        backend.responses.append((200, {"logprobs": {"True": -0.2}}))
        with pytest.raises(BackendProtocolError):
            remote_label_logprobs(config_for(backend), "p", ("True", "False"))

    def test_unreachable_endpoint(self):
        config = BackendConfig(
            base_url="http://127.0.0.1:1",
            model_name="m",
            max_retries=0,
            retry_base_delay=0.01,
            request_timeout=0.5,
        )
        with pytest.raises(BackendUnavailableError):
            remote_label_logprobs(config, "p", ("True", "False"))


class TestConfigValidation:
    def test_bounds(self):
        with pytest.raises(ValueError):
            BackendConfig(base_url="http://x", model_name="m", max_retries=-1)
        with pytest.raises(ValueError):
            BackendConfig(base_url="http://x", model_name="m", max_in_flight=0)
