import json

import pytest

from loqa.errors import ConfigurationError, ProtocolError, TransportError
from loqa.gateway import (
    ChatMessage,
    EchoGateway,
    GatewayConfig,
    HttpGateway,
    MockGateway,
    UNSCRIPTED,
)


def ok_payload(content="hello"):
    return json.dumps(
        {"choices": [{"message": {"role": "assistant", "content": content}}]}
    ).encode("utf-8")


class FakeTransport:
    """Scripted (status, payload) responses; records every request."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, url, body, headers, timeout_s):
        self.requests.append((url, body, headers, timeout_s))
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


ENV = {"LOQA_API_KEY": "k-123"}


def make_gateway(responses, **cfg):
    config = GatewayConfig(base_url=cfg.pop("base_url", "http://llm.example"),
                           model=cfg.pop("model", "m1"), **cfg)
    transport = FakeTransport(responses)
    return HttpGateway(config, transport=transport, environ=dict(ENV)), transport


def test_config_validation():
    with pytest.raises(ConfigurationError):
        GatewayConfig(base_url="", model="m")
    with pytest.raises(ConfigurationError):
        GatewayConfig(base_url="http://x", model="m", timeout_ms=0)
    with pytest.raises(ConfigurationError):
        GatewayConfig(base_url="http://x", model="m", retries=-1)


def test_chat_message_role_validation():
    with pytest.raises(ConfigurationError):
        ChatMessage(role="wizard", content="hi")


def test_missing_api_key_fails_before_any_request():
    config = GatewayConfig(base_url="http://llm.example", model="m1")
    transport = FakeTransport([(200, ok_payload())])
    gw = HttpGateway(config, transport=transport, environ={})
    with pytest.raises(ConfigurationError):
        gw.complete([ChatMessage(role="user", content="hi")])
    assert transport.requests == []


def test_happy_path_request_shape():
    gw, transport = make_gateway([(200, ok_payload("fine"))])
    out = gw.complete([ChatMessage(role="system", content="be brief"),
                       ChatMessage(role="user", content="hi")],
                      temperature=0.7, max_tokens=42)
    assert out == "fine"
    url, body, headers, timeout_s = transport.requests[0]
    assert url == "http://llm.example/v1/chat/completions"
    assert headers["Authorization"] == "Bearer k-123"
    assert headers["Content-Type"] == "application/json"
    doc = json.loads(body)
    assert doc["model"] == "m1"
    assert doc["temperature"] == 0.7
    assert doc["max_tokens"] == 42
    assert doc["messages"] == [{"role": "system", "content": "be brief"},
                               {"role": "user", "content": "hi"}]
    assert timeout_s == pytest.approx(30.0)


def test_base_url_trailing_slash_normalized():
    gw, transport = make_gateway([(200, ok_payload())],
                                 base_url="http://llm.example/")
    gw.chat("hi")
    assert transport.requests[0][0] == "http://llm.example/v1/chat/completions"


def test_retry_on_5xx_then_success():
    gw, transport = make_gateway([(503, b"busy"), (200, ok_payload("ok"))])
    assert gw.chat("hi") == "ok"
    assert len(transport.requests) == 2


def test_5xx_exhausts_retry():
    gw, transport = make_gateway([(500, b""), (502, b"")])
    with pytest.raises(TransportError) as exc:
        gw.chat("hi")
    assert exc.value.status == 502
    assert len(transport.requests) == 2


def test_retry_on_timeout_then_success():
    gw, transport = make_gateway([TimeoutError(), (200, ok_payload("ok"))])
    assert gw.chat("hi") == "ok"
    assert len(transport.requests) == 2


def test_timeout_exhausts_retry():
    gw, transport = make_gateway([TimeoutError(), TimeoutError()])
    with pytest.raises(TransportError) as exc:
        gw.chat("hi")
    assert exc.value.status is None


def test_4xx_is_final_no_retry():
    gw, transport = make_gateway([(404, b"nope"), (200, ok_payload())])
    with pytest.raises(TransportError) as exc:
        gw.chat("hi")
    assert exc.value.status == 404
    assert len(transport.requests) == 1


def test_zero_retries_single_attempt():
    gw, transport = make_gateway([(500, b"")], retries=0)
    with pytest.raises(TransportError):
        gw.chat("hi")
    assert len(transport.requests) == 1


@pytest.mark.parametrize("payload", [
    b"not json at all",
    json.dumps({"choices": []}).encode(),
    json.dumps({"choices": [{"message": {}}]}).encode(),
    json.dumps({"choices": [{"message": {"content": 7}}]}).encode(),
])
def test_malformed_payload_raises_protocol_error(payload):
    gw, _ = make_gateway([(200, payload)])
    with pytest.raises(ProtocolError):
        gw.chat("hi")


# ----- mocks -----

def test_mock_gateway_first_match_wins():
    gw = MockGateway(scripts=[("alpha", "first"), ("alp", "second")])
    assert gw.complete([ChatMessage(role="user", content="say alpha")]) == "first"
    assert gw.calls == ["say alpha"]


def test_mock_gateway_unscripted_sentinel():
    gw = MockGateway(scripts=[("alpha", "first")])
    assert gw.complete([ChatMessage(role="user", content="beta")]) == UNSCRIPTED


def test_echo_gateway_returns_context_block():
    gw = EchoGateway()
    prompt = ("Answer the question based on the context below. "
              "Context: You spent 2 hours walking. "
              "Question: How long did I walk? Response:")
    out = gw.complete([ChatMessage(role="user", content=prompt)])
    assert out == "You spent 2 hours walking."


def test_echo_gateway_unscripted_for_other_prompts():
    gw = EchoGateway()
    assert gw.complete([ChatMessage(role="user", content="hello")]) == UNSCRIPTED
