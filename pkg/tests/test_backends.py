"""Mock and HTTP backend behavior, including retry and concurrency limits."""

import json
import threading

import httpx
import numpy as np
import pytest

import graphdex.backends as backends
from graphdex.backends import (
    BackendConfig,
    BackendError,
    HttpEmbedder,
    HttpGenerator,
    MockEmbedder,
    MockGenerator,
    TransientBackendError,
    load_template,
    make_embedder,
    make_generator,
    render_template,
)


def test_backend_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(kind="http")  # endpoint required
    with pytest.raises(ValueError):
        BackendConfig(kind="mock", mock_dim=0)
    with pytest.raises(ValueError):
        BackendConfig(kind="mock", max_concurrent=0)
    with pytest.raises(ValueError):
        BackendConfig(kind="nope")


def test_mock_embedder_deterministic_unit_norm():
    emb = MockEmbedder(dim=32)
    v1 = emb.embed("the quick brown fox")
    v2 = emb.embed("the quick brown fox")
    assert np.array_equal(v1, v2)
    assert v1.shape == (32,)
    assert abs(np.linalg.norm(v1) - 1.0) < 1e-12


def test_mock_embedder_distinguishes_texts():
    emb = MockEmbedder(dim=32)
    a = emb.embed("alpha beta gamma")
    b = emb.embed("delta epsilon zeta")
    assert not np.array_equal(a, b)


def test_mock_embedder_token_overlap_raises_similarity():
    emb = MockEmbedder(dim=64)
    base = emb.embed("alpha beta gamma delta")
    near = emb.embed("alpha beta gamma zeta")
    far = emb.embed("one two three four")
    assert float(base @ near) > float(base @ far)


def test_mock_embedder_empty_text_rejected():
    emb = MockEmbedder(dim=8)
    with pytest.raises(ValueError):
        emb.embed("   ")


def test_mock_embed_batch_wraps_item_errors():
    emb = MockEmbedder(dim=8)
    with pytest.raises(ValueError, match="item 1"):
        emb.embed_batch(["fine", "", "also fine"])


def test_mock_generator_summarize_truncates():
    gen = MockGenerator()
    out = gen.summarize(["one two three", "four five six seven"], max_len=5)
    assert out.split() == ["one", "two", "three", "four", "five"]


def test_mock_generator_complete_echoes_budget():
    gen = MockGenerator()
    out = gen.complete("word " * 50, max_tokens=10)
    assert len(out.split()) <= 10


def test_template_render():
    tpl = load_template("summarize.txt")
    body = render_template(tpl, max_len="12", body="some text")
    assert "12" in body and "some text" in body
    with pytest.raises(ValueError):
        render_template("{missing}", other="x")


def test_make_factories_return_mocks(mock_backend_config):
    assert isinstance(make_embedder(mock_backend_config), MockEmbedder)
    assert isinstance(make_generator(mock_backend_config), MockGenerator)


# --- HTTP backends over MockTransport ---------------------------------------


def http_config(**kw):
    kw.setdefault("kind", "http")
    kw.setdefault("endpoint_url", "https://api.test.local/v1")
    kw.setdefault("model_name", "embed-small")
    return BackendConfig(**kw)


def embeddings_response(vec):
    return httpx.Response(200, json={"data": [{"embedding": list(vec)}]})


def test_http_embedder_roundtrip_and_normalization(monkeypatch):
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return embeddings_response([3.0, 4.0])

    monkeypatch.setenv("GRAPHDEX_API_KEY", "sk-test-123")
    with HttpEmbedder(http_config(), transport=httpx.MockTransport(handler)) as emb:
        v = emb.embed("hello world")
    assert seen["url"].endswith("/embeddings")
    assert seen["auth"] == "Bearer sk-test-123"
    assert seen["body"]["model"] == "embed-small"
    assert np.allclose(v, [0.6, 0.8])


def test_http_embedder_retries_on_500_then_succeeds(monkeypatch):
    monkeypatch.setattr(backends, "RETRY_BASE_DELAY", 0.0)
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            return httpx.Response(502, text="bad gateway")
        return embeddings_response([1.0, 0.0])

    with HttpEmbedder(http_config(), transport=httpx.MockTransport(handler)) as emb:
        v = emb.embed("x")
    assert calls["n"] == 3
    assert np.allclose(v, [1.0, 0.0])


def test_http_embedder_exhausts_retries(monkeypatch):
    monkeypatch.setattr(backends, "RETRY_BASE_DELAY", 0.0)
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(503, text="down")

    with HttpEmbedder(http_config(), transport=httpx.MockTransport(handler)) as emb:
        with pytest.raises(TransientBackendError) as err:
            emb.embed("x")
    assert calls["n"] == backends.RETRY_ATTEMPTS
    assert err.value.status == 503


def test_http_embedder_no_retry_on_4xx(monkeypatch):
    monkeypatch.setattr(backends, "RETRY_BASE_DELAY", 0.0)
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(401, text="denied sk-secret")

    monkeypatch.setenv("GRAPHDEX_API_KEY", "sk-secret")
    with HttpEmbedder(http_config(), transport=httpx.MockTransport(handler)) as emb:
        with pytest.raises(BackendError) as err:
            emb.embed("x")
    assert calls["n"] == 1
    assert "sk-secret" not in str(err.value)


def test_http_embedder_transport_error_retried(monkeypatch):
    monkeypatch.setattr(backends, "RETRY_BASE_DELAY", 0.0)
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] == 1:
            raise httpx.ConnectError("refused")
        return embeddings_response([0.0, 1.0])

    with HttpEmbedder(http_config(), transport=httpx.MockTransport(handler)) as emb:
        v = emb.embed("x")
    assert calls["n"] == 2
    assert np.allclose(v, [0.0, 1.0])


def test_http_embed_batch_preserves_order(monkeypatch):
    def handler(request):
        body = json.loads(request.content)
        text = body["input"][0]
        idx = float(text.split("-")[1])
        return embeddings_response([idx, 1.0])

    cfg = http_config(max_concurrent=4)
    with HttpEmbedder(cfg, transport=httpx.MockTransport(handler)) as emb:
        out = emb.embed_batch([f"t-{i}" for i in range(16)])
    firsts = [v[0] * np.sqrt(np.dot([i, 1.0], [i, 1.0])) for i, v in enumerate(out)]
    assert np.allclose(firsts, np.arange(16.0))


def test_http_embed_batch_bounded_concurrency():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}
    start = threading.Event()

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        start.wait(0.05)
        with lock:
            state["now"] -= 1
        return embeddings_response([1.0])

    cfg = http_config(max_concurrent=3)
    with HttpEmbedder(cfg, transport=httpx.MockTransport(handler)) as emb:
        emb.embed_batch([f"t{i}" for i in range(12)])
    assert state["peak"] <= 3


def test_http_embed_batch_wraps_item_error(monkeypatch):
    monkeypatch.setattr(backends, "RETRY_BASE_DELAY", 0.0)

    def handler(request):
        body = json.loads(request.content)
        if body["input"][0] == "bad":
            return httpx.Response(400, text="nope")
        return embeddings_response([1.0])

    with HttpEmbedder(http_config(), transport=httpx.MockTransport(handler)) as emb:
        with pytest.raises(BackendError, match="item 1"):
            emb.embed_batch(["ok", "bad", "ok"])


def test_http_generator_complete_and_summarize(monkeypatch):
    def handler(request):
        body = json.loads(request.content)
        prompt = body["messages"][-1]["content"]
        reply = "summary words here" if "Summarize" in prompt else "completion text"
        return httpx.Response(
            200, json={"choices": [{"message": {"content": reply}}]}
        )

    cfg = http_config(model_name="gen-model")
    with HttpGenerator(cfg, transport=httpx.MockTransport(handler)) as gen:
        assert gen.complete("do a thing", max_tokens=16) == "completion text"
        out = gen.summarize(["text one", "text two"], max_len=2)
    # over-budget generations are truncated to the token budget
    assert len(out.split()) <= 2


def test_http_embedder_bad_payload_shape(monkeypatch):
    def handler(request):
        return httpx.Response(200, json={"data": []})

    with HttpEmbedder(http_config(), transport=httpx.MockTransport(handler)) as emb:
        with pytest.raises(BackendError):
            emb.embed("x")
