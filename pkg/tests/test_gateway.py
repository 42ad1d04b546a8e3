import hashlib
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest

from usecomply.gateway import (
    CacheMissError,
    CredentialError,
    ExchangeCache,
    ExchangeRecord,
    Gateway,
    GatewayConfig,
    HTTPStatusError,
    LlmRequest,
    MalformedResponseError,
    NetworkError,
    request_hash,
)
from usecomply.prompts import load_template, render
import worked_examples as wx

# computed once from the yes_no prompt on the discover use case, then frozen
GOLDEN_YES_NO_HASH = "38d28dc187eb2e35840d340c72c9371da4b9a639ce4c4e651c5ff2928f203a9d"


def completion(text):
    return {"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}


def refuse(request):
    raise AssertionError(f"unexpected network call to {request.url}")


def make_gateway(handler, mode="live", tmp_path=None, **cfg):
    cache_path = str(tmp_path / "cache.jsonl") if tmp_path else None
    config = GatewayConfig(mode=mode, cache_path=cache_path, backoff_base=0.01, **cfg)
    sleeps = []
    gw = Gateway(
        config,
        cache=None if mode == "replay" else ExchangeCache(cache_path),
        transport=httpx.MockTransport(handler),
        api_key="test-key",
        sleep=sleeps.append,
        clock=lambda: "2024-01-01T00:00:00Z",
    )
    return gw, sleeps


class TestRequestHash:
    def test_matches_hand_computed_digest(self):
        canonical = '{"model_name":"gpt-4o-2024-05-13","prompt":"hello","temperature":0.0}'
        assert request_hash(LlmRequest("hello")) == hashlib.sha256(canonical.encode()).hexdigest()

    def test_int_and_float_temperature_agree(self):
        assert request_hash(LlmRequest("p", "m", 0)) == request_hash(LlmRequest("p", "m", 0.0))

    def test_each_field_matters(self):
        base = request_hash(LlmRequest("p", "m", 0.0))
        assert base != request_hash(LlmRequest("q", "m", 0.0))
        assert base != request_hash(LlmRequest("p", "n", 0.0))
        assert base != request_hash(LlmRequest("p", "m", 0.5))

    def test_golden_hash_for_yes_no_prompt(self, corpus, opt_in):
        prompt = render(load_template("yes_no"), opt_in, corpus["uc01"].app, wx.discover_use_case())
        assert request_hash(LlmRequest(prompt)) == GOLDEN_YES_NO_HASH

    def test_empty_prompt(self):
        with pytest.raises(ValueError):
            LlmRequest("")


class TestReplay:
    def test_hit_without_network(self, tmp_path):
        req = LlmRequest("prompt")
        path = tmp_path / "cache.jsonl"
        path.write_text(ExchangeRecord(request_hash(req), req, "cached", "t").to_json() + "\n")
        gw = Gateway(GatewayConfig(mode="replay", cache_path=str(path)), transport=httpx.MockTransport(refuse))
        assert gw.complete(req) == "cached"
        assert gw.complete("prompt") == "cached"

    def test_miss_is_distinct_error(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        path.write_text("")
        gw = Gateway(GatewayConfig(mode="replay", cache_path=str(path)), transport=httpx.MockTransport(refuse))
        with pytest.raises(CacheMissError) as info:
            gw.complete("anything")
        assert info.value.request_hash == request_hash(LlmRequest("anything"))

    def test_needs_cache(self, tmp_path):
        with pytest.raises(ValueError):
            Gateway(GatewayConfig(mode="replay"))
        with pytest.raises(FileNotFoundError):
            Gateway(GatewayConfig(mode="replay", cache_path=str(tmp_path / "missing.jsonl")))

    def test_tampered_record_rejected(self, tmp_path):
        req = LlmRequest("prompt")
        data = json.loads(ExchangeRecord(request_hash(req), req, "x", "t").to_json())
        data["request"]["prompt"] = "other"
        path = tmp_path / "cache.jsonl"
        path.write_text(json.dumps(data) + "\n")
        with pytest.raises(ValueError, match="hash mismatch"):
            ExchangeCache(path)

    def test_shipped_cache_loads(self, fixture_dir):
        assert len(ExchangeCache(fixture_dir / "cache.jsonl")) > 0


class TestLive:
    def test_request_shape(self, tmp_path):
        seen = {}

        def handler(request):
            seen["url"] = str(request.url)
            seen["auth"] = request.headers["authorization"]
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json=completion("Yes"))

        gw, _ = make_gateway(handler, tmp_path=tmp_path, model_name="m1", temperature=0)
        assert gw.complete("hi") == "Yes"
        assert seen["url"].endswith("/v1/chat/completions")
        assert seen["auth"] == "Bearer test-key"
        assert seen["body"] == {"model": "m1", "temperature": 0.0, "messages": [{"role": "user", "content": "hi"}]}
        # live mode does not persist anything
        assert len(gw.cache) == 0

    def test_retry_then_success(self, tmp_path):
        statuses = iter([429, 503, 200])

        def handler(request):
            status = next(statuses)
            return httpx.Response(status, json=completion("ok") if status == 200 else {"error": "busy"})

        gw, sleeps = make_gateway(handler, tmp_path=tmp_path, max_retries=3)
        assert gw.complete("p") == "ok"
        assert len(sleeps) == 2
        assert sleeps[1] > sleeps[0]

    def test_retries_exhausted(self, tmp_path):
        gw, sleeps = make_gateway(lambda r: httpx.Response(500, text="boom"), tmp_path=tmp_path, max_retries=2)
        with pytest.raises(HTTPStatusError) as info:
            gw.complete("p")
        assert info.value.status == 500
        assert len(sleeps) == 2

    def test_client_error_not_retried(self, tmp_path):
        gw, sleeps = make_gateway(lambda r: httpx.Response(401, text="bad key"), tmp_path=tmp_path)
        with pytest.raises(HTTPStatusError) as info:
            gw.complete("p")
        assert info.value.status == 401 and sleeps == []

    def test_network_failure(self, tmp_path):
        def handler(request):
            raise httpx.ConnectError("refused", request=request)

        gw, sleeps = make_gateway(handler, tmp_path=tmp_path, max_retries=1)
        with pytest.raises(NetworkError):
            gw.complete("p")
        assert len(sleeps) == 1

    @pytest.mark.parametrize(
        "response",
        [
            httpx.Response(200, text="not json"),
            httpx.Response(200, json={"choices": []}),
            httpx.Response(200, json={"choices": [{"message": {"content": None}}]}),
            httpx.Response(200, json=["unexpected"]),
        ],
    )
    def test_malformed_response(self, tmp_path, response):
        gw, _ = make_gateway(lambda r: response, tmp_path=tmp_path)
        with pytest.raises(MalformedResponseError):
            gw.complete("p")

    def test_missing_credential(self, tmp_path, monkeypatch):
        monkeypatch.delenv("USECOMPLY_TEST_KEY", raising=False)
        config = GatewayConfig(mode="live", api_key_env="USECOMPLY_TEST_KEY")
        gw = Gateway(config, cache=ExchangeCache(), transport=httpx.MockTransport(refuse))
        with pytest.raises(CredentialError):
            gw.complete("p")

    def test_credential_from_environment(self, monkeypatch):
        monkeypatch.setenv("USECOMPLY_TEST_KEY", "env-key")

        def handler(request):
            assert request.headers["authorization"] == "Bearer env-key"
            return httpx.Response(200, json=completion("x"))

        config = GatewayConfig(mode="live", api_key_env="USECOMPLY_TEST_KEY")
        assert Gateway(config, cache=ExchangeCache(), transport=httpx.MockTransport(handler)).complete("p") == "x"

    def test_permits_bound_concurrency(self, tmp_path):
        lock = threading.Lock()
        state = {"now": 0, "peak": 0}

        def handler(request):
            with lock:
                state["now"] += 1
                state["peak"] = max(state["peak"], state["now"])
            time.sleep(0.02)
            with lock:
                state["now"] -= 1
            prompt = json.loads(request.content)["messages"][0]["content"]
            return httpx.Response(200, json=completion(prompt.upper()))

        gw, _ = make_gateway(handler, mode="record", tmp_path=tmp_path, permits=2)
        threads = [threading.Thread(target=gw.complete, args=(f"p{i}",)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert 1 <= state["peak"] <= 2
        lines = (tmp_path / "cache.jsonl").read_text().splitlines()
        assert len(lines) == 8
        assert all(json.loads(line)["response_text"].startswith("P") for line in lines)


class _StubHandler(BaseHTTPRequestHandler):
    calls = 0

    def do_POST(self):
        type(self).calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        prompt = body["messages"][0]["content"]
        payload = json.dumps(completion(f"echo: {prompt}")).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.calls = 0
    yield f"http://127.0.0.1:{server.server_address[1]}/v1"
    server.shutdown()
    server.server_close()


def test_record_then_replay_against_local_endpoint(stub_server, tmp_path):
    cache = tmp_path / "cache.jsonl"
    recorder = Gateway(
        GatewayConfig(mode="record", base_url=stub_server, cache_path=str(cache)),
        cache=ExchangeCache(cache),
        api_key="k",
    )
    text = recorder.complete("Use Case: {}")
    recorder.close()
    assert text == "echo: Use Case: {}"
    assert _StubHandler.calls == 1

    replayer = Gateway(GatewayConfig(mode="replay", base_url=stub_server, cache_path=str(cache)))
    assert replayer.complete("Use Case: {}") == text
    assert _StubHandler.calls == 1
    # the same gateway object can also be asked to replay explicitly
    assert recorder.complete("Use Case: {}", mode="replay") == text
