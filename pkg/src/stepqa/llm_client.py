"""Chat-completion client with swappable transports.

The HTTP transport speaks the common chat-completions wire shape with
bearer auth. The replay transport serves canned responses keyed by a
stable digest of the request, which is how every offline test runs the
chat-backed code paths. Each transport keeps a session log of exchanges
so that new replay fixtures can be minted from a live run.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF_S = 0.5

ENDPOINT_VAR = "LLM_ENDPOINT"
API_KEY_VAR = "LLM_API_KEY"
MODEL_VAR = "LLM_MODEL"


class TransportError(RuntimeError):
    pass


class RetryExhaustedError(TransportError):
    def __init__(self, attempts: int, last_error: str) -> None:
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts


class ReplayMissError(TransportError):
    def __init__(self, digest: str) -> None:
        super().__init__(f"no replay fixture for request digest {digest}")
        self.digest = digest


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 512

    def to_wire(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"


def request_digest(request: ChatRequest) -> str:
    """Stable content hash of a request, independent of timing or identity."""
    canonical = json.dumps(request.to_wire(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class SessionLog:
    """Exchanges seen by a transport, in order."""

    def __init__(self) -> None:
        self.entries: list[dict[str, Any]] = []

    def record(self, request: ChatRequest, response: ChatResponse) -> None:
        self.entries.append(
            {
                "digest": request_digest(request),
                "request": request.to_wire(),
                "response": {"content": response.content, "finish_reason": response.finish_reason},
            }
        )

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def to_replay_fixture(self) -> list[dict[str, Any]]:
        return [{"digest": e["digest"], "response": e["response"]} for e in self.entries]


class HttpTransport:
    """POSTs chat requests to an endpoint, retrying on transient failure."""

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        timeout: float = DEFAULT_TIMEOUT_S,
        attempts: int = DEFAULT_ATTEMPTS,
        backoff: float = DEFAULT_BACKOFF_S,
        post: Callable[..., Any] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if post is None:
            import requests

            post = requests.post
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self._post = post
        self._sleep = sleep
        self.log = SessionLog()

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = "no attempt made"
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._post(
                    self.endpoint,
                    json=request.to_wire(),
                    headers=headers,
                    timeout=self.timeout,
                )
            except Exception as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            status = getattr(resp, "status_code", 200)
            if status >= 500 or status == 429:
                last = f"HTTP {status}"
                continue
            if status >= 400:
                raise TransportError(f"HTTP {status} from {self.endpoint}")
            try:
                body = resp.json()
                content = body["choices"][0]["message"]["content"]
                finish = body["choices"][0].get("finish_reason", "stop")
            except Exception as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
            response = ChatResponse(content=content, finish_reason=finish)
            self.log.record(request, response)
            return response
        raise RetryExhaustedError(self.attempts, last)


class ReplayTransport:
    """Serves responses recorded earlier, matched by request digest."""

    def __init__(self, fixtures: Any = None) -> None:
        self._by_digest: dict[str, ChatResponse] = {}
        self.log = SessionLog()
        if fixtures is not None:
            self.load(fixtures)

    def load(self, fixtures: Any) -> None:
        if isinstance(fixtures, (str, Path)):
            lines = Path(fixtures).read_text().splitlines()
            entries = [json.loads(line) for line in lines if line.strip()]
        else:
            entries = list(fixtures)
        for entry in entries:
            resp = entry["response"]
            if isinstance(resp, str):
                resp = {"content": resp}
            self._by_digest[entry["digest"]] = ChatResponse(
                content=resp["content"], finish_reason=resp.get("finish_reason", "stop")
            )

    def add(self, request: ChatRequest, content: str) -> None:
        self._by_digest[request_digest(request)] = ChatResponse(content=content)

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        if digest not in self._by_digest:
            raise ReplayMissError(digest)
        response = self._by_digest[digest]
        self.log.record(request, response)
        return response


class ChatClient:
    """A model name bound to a transport, with message-list convenience."""

    def __init__(self, transport: Any, model: str, temperature: float = 0.0, max_tokens: int = 512) -> None:
        self.transport = transport
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens

    def complete_text(self, system: str, user: str) -> str:
        request = ChatRequest(
            model=self.model,
            messages=(ChatMessage("system", system), ChatMessage("user", user)),
            temperature=self.temperature,
            max_tokens=self.max_tokens,
        )
        return self.transport.complete(request).content

    @property
    def log(self) -> SessionLog:
        return self.transport.log


def client_from_env(
    endpoint: str | None = None,
    api_key: str | None = None,
    model: str | None = None,
    **kwargs: Any,
) -> ChatClient:
    """Build an HTTP-backed client from flags, falling back to environment."""
    endpoint = endpoint or os.environ.get(ENDPOINT_VAR, "")
    if not endpoint:
        raise TransportError(f"no endpoint given and {ENDPOINT_VAR} is unset")
    api_key = api_key if api_key is not None else os.environ.get(API_KEY_VAR, "")
    model = model or os.environ.get(MODEL_VAR, "default")
    transport = HttpTransport(endpoint, api_key=api_key, **kwargs)
    return ChatClient(transport, model=model)
