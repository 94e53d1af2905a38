"""Multimodal model client: chat-completions wire adapter, retry/backoff,
a global concurrency gate, fenced-code extraction, and a scripted mock."""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field

import httpx

from .core import ModelConfig


class ProviderError(RuntimeError):
    """Unrecoverable provider failure (retries exhausted, auth, bad script)."""

    def __init__(self, message, status=None, attempts=None):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class TransientProviderError(ProviderError):
    """Retryable failure: transport error, 429, or 5xx."""


@dataclass
class ChatRequest:
    role: str  # leaf | node | final
    prompt_text: str
    image: bytes
    segment_id: str = ""
    child_code: list = field(default_factory=list)
    grid_template: str | None = None

    def __post_init__(self):
        if self.role not in ("leaf", "node", "final"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "leaf" and self.child_code:
            raise ValueError("leaf requests carry no child code")
        if self.role in ("node", "final") and not self.child_code \
                and self.grid_template is None:
            raise ValueError(f"{self.role} request needs child code or a grid template")

    @property
    def image_hash(self) -> str:
        return hashlib.sha256(self.image).hexdigest()


@dataclass
class ChatResponse:
    raw_text: str
    extracted_html: str
    token_usage: dict = field(default_factory=dict)
    latency_ms: float = 0.0
    attempts: int = 1
    truncated: bool = False


_FENCE_RE = re.compile(r"```([^\n`]*)\n(.*?)```", re.DOTALL)


def extract_code(raw: str) -> str:
    """Contents of the first html-labeled fence, else the first fence of any
    label, else the trimmed raw text."""
    fences = _FENCE_RE.findall(raw)
    for label, body in fences:
        if label.strip().lower() == "html":
            return body.strip()
    if fences:
        return fences[0][1].strip()
    return raw.strip()


class Provider:
    """Base client: concurrency gate + retry loop around a single send."""

    def __init__(self, config: ModelConfig, sleep=time.sleep):
        self.config = config
        self._gate = threading.BoundedSemaphore(config.concurrency_limit)
        self._sleep = sleep

    def _send(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def complete(self, req: ChatRequest) -> ChatResponse:
        if len(req.image) > self.config.image_size_limit:
            raise ProviderError(
                f"image is {len(req.image)} bytes, over the provider limit "
                f"of {self.config.image_size_limit}")
        last_exc = None
        with self._gate:
            for attempt in range(1, self.config.retry_budget + 1):
                if attempt > 1:
                    # attempt k waits base * 2^(k-1) before firing
                    self._sleep(self.config.retry_backoff_base * 2 ** (attempt - 1))
                try:
                    resp = self._send(req)
                    resp.attempts = attempt
                    return resp
                except TransientProviderError as exc:
                    last_exc = exc
        raise ProviderError(
            f"retries exhausted after {self.config.retry_budget} attempts: {last_exc}",
            status=getattr(last_exc, "status", None),
            attempts=self.config.retry_budget)


class HttpProvider(Provider):
    """Chat-completions JSON client (text part + base64 image-URL part)."""

    def __init__(self, config: ModelConfig, sleep=time.sleep, debug=False,
                 client: httpx.Client | None = None):
        super().__init__(config, sleep=sleep)
        self.debug = debug
        self._client = client or httpx.Client(timeout=120)

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise ProviderError(
                f"environment variable {self.config.api_key_env} is not set")
        return key

    def _send(self, req: ChatRequest) -> ChatResponse:
        image_url = "data:image/png;base64," + base64.b64encode(req.image).decode()
        body = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": req.prompt_text},
                    {"type": "image_url", "image_url": {"url": image_url}},
                ],
            }],
        }
        if self.debug:
            redacted = dict(body)
            print(f"[provider] POST {self.config.endpoint} "
                  f"{json.dumps(redacted)[:500]}...")
        start = time.perf_counter()
        try:
            resp = self._client.post(
                self.config.endpoint, json=body,
                headers={"Authorization": f"Bearer {self._api_key()}"})
        except httpx.HTTPError as exc:
            raise TransientProviderError(f"transport error: {exc}") from exc
        latency = (time.perf_counter() - start) * 1000
        if resp.status_code in (401, 403):
            raise ProviderError(f"authentication failed ({resp.status_code})",
                                status=resp.status_code)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"status {resp.status_code}",
                                         status=resp.status_code)
        if resp.status_code != 200:
            raise ProviderError(f"unexpected status {resp.status_code}",
                                status=resp.status_code)
        data = resp.json()
        choice = data["choices"][0]
        raw = choice["message"]["content"]
        usage = data.get("usage", {})
        return ChatResponse(
            raw_text=raw,
            extracted_html=extract_code(raw),
            token_usage={"prompt": usage.get("prompt_tokens", 0),
                         "completion": usage.get("completion_tokens", 0)},
            latency_ms=latency,
            truncated=choice.get("finish_reason") == "length",
        )


class ScriptGapError(ProviderError):
    """The mock received a request its script has no answer for."""


class MockProvider(Provider):
    """Deterministic scripted provider for tests and offline runs.

    Script forms:
      {"kind": "echo", ...}              echo back segment markers / child code
      {"kind": "map", "responses": {image-sha256: raw_text}}
      {"kind": "sequence", "responses": [raw_text, ...]}  consumed in order

    Common options: "latency_ms" (simulated per-call delay, real sleep so
    wall-time behavior is observable), "fail_first" (number of leading calls
    answered with a scripted 500), "marker" (echo marker template, default
    "<!--seg:{id}-->").
    """

    def __init__(self, script: dict, config: ModelConfig | None = None,
                 sleep=time.sleep):
        super().__init__(config or ModelConfig(), sleep=sleep)
        if not script:
            raise ValueError("mock script must be non-empty")
        self.script = script
        self.call_log = []
        self._lock = threading.Lock()
        self._sequence_pos = 0
        self._fail_remaining = int(script.get("fail_first", 0))
        self._inflight = 0
        self.max_inflight = 0

    @classmethod
    def from_file(cls, path, config=None):
        with open(path) as fh:
            return cls(json.load(fh), config=config)

    def _raw_answer(self, req: ChatRequest) -> str:
        kind = self.script.get("kind", "echo")
        if kind == "echo":
            marker = self.script.get("marker", "<!--seg:{id}-->")
            tag = marker.format(id=req.segment_id)
            if req.role == "leaf":
                body = f'{tag}<div class="seg">{req.segment_id}</div>'
            elif req.grid_template is not None:
                body = req.grid_template
            else:
                body = tag + "\n" + "\n".join(req.child_code)
            return f"```html\n{body}\n```"
        if kind == "map":
            responses = self.script["responses"]
            if req.image_hash not in responses:
                raise ScriptGapError(f"no scripted answer for image {req.image_hash}")
            return responses[req.image_hash]
        if kind == "sequence":
            with self._lock:
                responses = self.script["responses"]
                if self._sequence_pos >= len(responses):
                    raise ScriptGapError("scripted response sequence exhausted")
                raw = responses[self._sequence_pos]
                self._sequence_pos += 1
            return raw
        raise ValueError(f"unknown mock script kind {kind!r}")

    def _send(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self._inflight += 1
            self.max_inflight = max(self.max_inflight, self._inflight)
        try:
            start = time.perf_counter()
            latency_ms = float(self.script.get("latency_ms", 0))
            if latency_ms:
                time.sleep(latency_ms / 1000)
            with self._lock:
                self.call_log.append({
                    "role": req.role,
                    "segment_id": req.segment_id,
                    "image_hash": req.image_hash,
                    "order": len(self.call_log),
                })
                fail = self._fail_remaining > 0
                if fail:
                    self._fail_remaining -= 1
            if fail:
                raise TransientProviderError("scripted failure (500)", status=500)
            raw = self._raw_answer(req)
            latency = (time.perf_counter() - start) * 1000
            return ChatResponse(
                raw_text=raw,
                extracted_html=extract_code(raw),
                token_usage={"prompt": len(req.prompt_text),
                             "completion": len(raw)},
                latency_ms=latency,
            )
        finally:
            with self._lock:
                self._inflight -= 1
