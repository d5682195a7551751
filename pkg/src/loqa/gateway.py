"""Chat-completion gateway.

Speaks the common POST {base_url}/v1/chat/completions JSON protocol so any
compatible endpoint works. The API key is read from an environment variable
named in the config, never stored in files. Network access is isolated
behind a transport callable so tests run without sockets; two mock gateways
cover scripted replies and deterministic context echoing.
"""

from __future__ import annotations

import json
import re
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import ConfigurationError, ProtocolError, TransportError

UNSCRIPTED = "UNSCRIPTED"

# transport: (url, body, headers, timeout_s) -> (http status, response bytes)
Transport = Callable[[str, bytes, dict, float], tuple[int, bytes]]


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str
    model: str
    api_key_env: str = "LOQA_API_KEY"
    timeout_ms: int = 30000
    retries: int = 1

    def __post_init__(self):
        if not self.base_url:
            raise ConfigurationError("gateway base_url must be set")
        if self.timeout_ms <= 0:
            raise ConfigurationError("gateway timeout_ms must be positive")
        if self.retries < 0:
            raise ConfigurationError("gateway retries must be >= 0")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ConfigurationError(f"unknown chat role {self.role!r}")


def _urllib_transport(url: str, body: bytes, headers: dict,
                      timeout_s: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout_s) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as e:
        return e.code, e.read()


class HttpGateway:
    """Real client. One configurable retry on 5xx or timeout; 4xx is final."""

    def __init__(self, config: GatewayConfig, transport: Transport | None = None,
                 environ: dict | None = None):
        import os
        self.config = config
        self._transport = transport or _urllib_transport
        self._environ = os.environ if environ is None else environ

    def complete(self, messages: Sequence[ChatMessage], *,
                 temperature: float = 0.2, max_tokens: int = 1024) -> str:
        key = self._environ.get(self.config.api_key_env, "")
        if not key:
            raise ConfigurationError(
                f"environment variable {self.config.api_key_env} is not set")
        url = self.config.base_url.rstrip("/") + "/v1/chat/completions"
        body = json.dumps({
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }).encode("utf-8")
        headers = {
            "Content-Type": "application/json",
            "Authorization": f"Bearer {key}",
        }
        timeout_s = self.config.timeout_ms / 1000.0

        attempts = 1 + self.config.retries
        last_status: int | None = None
        for attempt in range(attempts):
            try:
                status, payload = self._transport(url, body, headers, timeout_s)
            except (TimeoutError, socket.timeout):
                last_status = None
                if attempt + 1 < attempts:
                    continue
                raise TransportError("request timed out", status=None) from None
            except urllib.error.URLError as e:
                last_status = None
                if attempt + 1 < attempts:
                    continue
                raise TransportError(f"request failed: {e.reason}",
                                     status=None) from None
            if status >= 500:
                last_status = status
                if attempt + 1 < attempts:
                    continue
                raise TransportError(f"server error {status}", status=status)
            if status >= 400:
                raise TransportError(f"request rejected with {status}",
                                     status=status)
            return _extract_content(payload)
        raise TransportError(f"server error {last_status}", status=last_status)

    def chat(self, prompt: str, **kw) -> str:
        return self.complete([ChatMessage(role="user", content=prompt)], **kw)


def _extract_content(payload: bytes) -> str:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"response is not JSON: {e}") from None
    try:
        content = doc["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ProtocolError("response lacks choices[0].message.content") from None
    if not isinstance(content, str):
        raise ProtocolError("message content is not a string")
    return content


@dataclass
class MockGateway:
    """Scripted replies: first (pattern, reply) whose pattern is a substring
    of the joined message text wins; otherwise the UNSCRIPTED sentinel."""

    scripts: Sequence[tuple[str, str]] = ()
    calls: list[str] = field(default_factory=list)

    def complete(self, messages: Sequence[ChatMessage], *,
                 temperature: float = 0.2, max_tokens: int = 1024) -> str:
        text = "\n".join(m.content for m in messages)
        self.calls.append(text)
        for pattern, reply in self.scripts:
            if pattern in text:
                return reply
        return UNSCRIPTED


_CONTEXT_RE = re.compile(r"Context:\s*(?P<ctx>.*?)\s*Question:", re.DOTALL)


@dataclass
class EchoGateway:
    """Deterministic stand-in for demos: answer-assembly prompts get their
    Context block echoed back, anything else gets the UNSCRIPTED sentinel."""

    calls: list[str] = field(default_factory=list)

    def complete(self, messages: Sequence[ChatMessage], *,
                 temperature: float = 0.2, max_tokens: int = 1024) -> str:
        text = "\n".join(m.content for m in messages)
        self.calls.append(text)
        m = _CONTEXT_RE.search(text)
        if m and m.group("ctx"):
            return m.group("ctx")
        return UNSCRIPTED
