"""Chat-completion port with a scripted backend for tests and an HTTP backend for live runs."""
from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

from ..errors import BackendError, BackendTimeout, HttpError, ScriptExhausted

log = logging.getLogger(__name__)

ROLES = ("user", "assistant")
RETRY_STATUSES = frozenset({408, 409, 425, 429})


@dataclass(frozen=True)
class ChatRequest:
    system: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 2048
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.system:
            raise ValueError("system prompt must be nonempty")
        msgs = tuple((str(r), str(c)) for r, c in self.messages)
        if not msgs:
            raise ValueError("a request needs at least one message")
        for i, (role, _) in enumerate(msgs):
            if role != ROLES[i % 2]:
                raise ValueError("messages must alternate user/assistant, starting with user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        object.__setattr__(self, "messages", msgs)

    @classmethod
    def single(cls, system: str, user: str, tag: str = "", **kw: Any) -> "ChatRequest":
        return cls(system=system, messages=(("user", user),), tag=tag, **kw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tag": self.tag,
            "system": self.system,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


class ChatBackend(Protocol):
    def complete(self, req: ChatRequest) -> str: ...


def complete(backend: ChatBackend, req: ChatRequest) -> str:
    return backend.complete(req)


class AuditLog:
    """Thread-safe NDJSON writer; every secret passed in is masked before writing."""

    def __init__(self, path: str | Path, secrets: Sequence[str] = ()) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._secrets = [s for s in secrets if s]
        self._lock = threading.Lock()

    def redact(self, text: str) -> str:
        for secret in self._secrets:
            text = text.replace(secret, "***")
        return text

    def write(self, record: Mapping[str, Any]) -> None:
        line = self.redact(json.dumps(record, ensure_ascii=False))
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


@dataclass
class ScriptedBackend:
    """Replays canned responses keyed by request tag.

    The n-th call with a given tag returns ``script[tag][n]``; running past the
    end raises :class:`ScriptExhausted`. Calls are serialized internally so
    concurrent callers on distinct tags stay deterministic.
    """

    script: Mapping[str, Sequence[str]]
    calls: list[tuple[str, int, ChatRequest, str]] = field(default_factory=list)
    audit: AuditLog | None = None

    def __post_init__(self) -> None:
        self._lock = threading.Lock()
        self._next: dict[str, int] = {}

    @classmethod
    def from_file(cls, path: str | Path, audit: AuditLog | None = None) -> "ScriptedBackend":
        """Load ``{tag: [responses]}`` JSON, or NDJSON lines of ``{tag, response}``."""
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = None
        if isinstance(data, dict):
            return cls({str(k): list(v) for k, v in data.items()}, audit=audit)
        script: dict[str, list[str]] = {}
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                script.setdefault(rec["tag"], []).append(rec["response"])
        return cls(script, audit=audit)

    def complete(self, req: ChatRequest) -> str:
        with self._lock:
            index = self._next.get(req.tag, 0)
            responses = self.script.get(req.tag, ())
            if index >= len(responses):
                raise ScriptExhausted(req.tag, index)
            self._next[req.tag] = index + 1
            reply = responses[index]
            self.calls.append((req.tag, index, req, reply))
        if self.audit is not None:
            self.audit.write({"tag": req.tag, "index": index, "request": req.to_dict(), "response": reply})
        return reply

    def remaining(self) -> dict[str, int]:
        with self._lock:
            return {t: len(r) - self._next.get(t, 0) for t, r in self.script.items() if len(r) > self._next.get(t, 0)}


@dataclass
class CallableBackend:
    """Wrap a plain function; handy for programmatic fixtures."""

    fn: Callable[[ChatRequest], str]
    audit: AuditLog | None = None

    def complete(self, req: ChatRequest) -> str:
        reply = self.fn(req)
        if self.audit is not None:
            self.audit.write({"tag": req.tag, "request": req.to_dict(), "response": reply})
        return reply


@dataclass
class RoutingBackend:
    """Dispatch by tag suffix, e.g. a live agent against a scripted seeker and scorer."""

    routes: Mapping[str, ChatBackend]
    default: ChatBackend

    def complete(self, req: ChatRequest) -> str:
        role = req.tag.rsplit("/", 1)[-1]
        return self.routes.get(role, self.default).complete(req)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class RemoteBackend:
    """OpenAI-style ``/chat/completions`` client with retries, timeout and an audit trail.

    Retries on timeouts, transport errors and retryable statuses (408, 409, 425,
    429, 5xx); retry ``n`` waits ``backoff * 2**(n-1)`` seconds plus up to 10%
    jitter. ``max_retries`` counts retries after the first attempt.
    """

    def __init__(
        self,
        url: str,
        api_key: str = "",
        model: str = "",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        audit: AuditLog | str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int | None = None,
    ) -> None:
        if not url:
            raise BackendError("remote backend needs a URL (BACKEND_URL)")
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self.url = url if url.rstrip("/").endswith("/chat/completions") else url.rstrip("/") + "/chat/completions"
        self.model = model
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._rng = random.Random(seed)
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)
        if isinstance(audit, (str, Path)):
            audit = AuditLog(audit, secrets=[api_key])
        elif audit is not None and api_key:
            audit._secrets.append(api_key)
        self.audit = audit

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **kw: Any) -> "RemoteBackend":
        env = os.environ if env is None else env
        return cls(
            url=kw.pop("url", None) or env.get("BACKEND_URL", ""),
            api_key=kw.pop("api_key", None) or env.get("BACKEND_API_KEY", ""),
            model=kw.pop("model", None) or env.get("BACKEND_MODEL", ""),
            **kw,
        )

    def close(self) -> None:
        self._client.close()

    def _payload(self, req: ChatRequest) -> dict[str, Any]:
        messages = [{"role": "system", "content": req.system}]
        messages += [{"role": r, "content": c} for r, c in req.messages]
        payload: dict[str, Any] = {"messages": messages, "temperature": req.temperature, "max_tokens": req.max_tokens}
        if self.model:
            payload["model"] = self.model
        return payload

    def _audit(self, req: ChatRequest, attempt: int, **fields: Any) -> None:
        if self.audit is not None:
            self.audit.write({"ts": _utc_now(), "tag": req.tag, "attempt": attempt, "request": req.to_dict(), **fields})

    def complete(self, req: ChatRequest) -> str:
        payload = self._payload(req)
        last: BackendError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                self._sleep(delay + self._rng.uniform(0, delay * 0.1))
            started = time.monotonic()
            try:
                resp = self._client.post(self.url, json=payload)
            except httpx.TimeoutException as exc:
                last = BackendTimeout(f"request timed out: {exc}")
                self._audit(req, attempt, error="timeout")
                continue
            except httpx.TransportError as exc:
                last = BackendError(f"transport error: {exc}")
                self._audit(req, attempt, error=f"transport: {exc}")
                continue
            latency = round(time.monotonic() - started, 3)
            if resp.status_code != 200:
                last = HttpError(resp.status_code, resp.text)
                self._audit(req, attempt, status=resp.status_code, error=resp.text[:2000], latency=latency)
                if resp.status_code in RETRY_STATUSES or resp.status_code >= 500:
                    continue
                raise last
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                self._audit(req, attempt, status=200, error="malformed body", latency=latency)
                raise BackendError(f"malformed completion body: {exc}") from None
            self._audit(req, attempt, status=200, response=content, latency=latency)
            return content or ""
        assert last is not None
        raise last


def load_script_dir(directory: str | Path, audit: AuditLog | None = None) -> ScriptedBackend:
    """Merge every ``*.json`` / ``*.ndjson`` script in ``directory`` (name order) into one backend."""
    merged: dict[str, list[str]] = {}
    paths = sorted(Path(directory).glob("*.json")) + sorted(Path(directory).glob("*.ndjson"))
    if not paths:
        raise BackendError(f"no script files in {directory}")
    for path in sorted(paths):
        for tag, responses in ScriptedBackend.from_file(path).script.items():
            merged.setdefault(tag, []).extend(responses)
    return ScriptedBackend(merged, audit=audit)
