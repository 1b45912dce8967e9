"""Model endpoint access: chat completions and embeddings.

Two backends share one handle type.  ``remote_http`` speaks the common
OpenAI-style JSON contract (``/chat/completions`` and ``/embeddings``);
``scripted_mock`` replays canned responses and hashes text into vectors,
for hermetic tests and demos.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatch, GatewayError

log = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)(?:\n[ \t]*)?```", re.S)
_WORD_RE = re.compile(r"[A-Za-z0-9_+\-.@]+")
RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass
class ScriptRule:
    """Reply with ``responses`` in order when ``pattern`` matches the prompt.

    The last response repeats once the list is exhausted.
    """

    pattern: str
    responses: list[str]

    def __post_init__(self) -> None:
        if not self.responses:
            raise ValueError("a script rule needs at least one response")
        self._regex = re.compile(self.pattern, re.S)


@dataclass
class ModelHandle:
    kind: str = "scripted_mock"  # or "remote_http"
    model_id: str = "mock"
    endpoint: str = ""
    api_key_env: str | None = None
    temperature: float = 0.0
    max_tokens: int = 4096
    timeout: float = 120.0
    max_concurrency: int = 4
    retries: int = 3
    backoff: float = 2.0
    script: list[ScriptRule] = field(default_factory=list)
    embed_dim: int = 64
    # exact text -> vector overrides for the mock embedder
    embed_map: dict[str, Sequence[float]] = field(default_factory=dict)
    system_prompt: str = "You write package recipes for the Spack package manager."
    transport: httpx.BaseTransport | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in ("scripted_mock", "remote_http"):
            raise ValueError(f"unknown model handle kind {self.kind!r}")
        if self.kind == "remote_http" and not self.endpoint:
            raise ValueError("remote_http handles need an endpoint URL")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self._sem = threading.BoundedSemaphore(self.max_concurrency)
        self._lock = threading.Lock()
        self._cursor: dict[int, int] = {}
        self._dim: int | None = None
        self.completion_calls = 0
        self.embedding_calls = 0
        self.prompts: list[str] = []

    @property
    def identity(self) -> str:
        """Stable identifier for cache keys."""
        if self.kind == "scripted_mock":
            return f"mock:{self.model_id}:{self.embed_dim}"
        return f"http:{self.endpoint}:{self.model_id}"


@dataclass
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float = 0.0
    approximate: bool = False  # token counts estimated from characters

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class Embeddings(list):
    """List of vectors; ``flagged`` holds indices of empty inputs (zero vectors)."""

    def __init__(self, vectors: Sequence[Sequence[float]], flagged: Sequence[int] = ()):
        super().__init__(vectors)
        self.flagged = list(flagged)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def strip_fences(text: str) -> str:
    """Return the body of the first fenced code block, repeatedly.

    Text without fences is returned stripped of surrounding blank lines.
    Iterating to a fixed point makes the function idempotent.
    """
    current = text
    while True:
        m = _FENCE_RE.search(current)
        if not m:
            return current.strip("\n")
        current = m.group(1)


def _prompt_parts(prompt: Any, handle: ModelHandle) -> tuple[str, str]:
    if isinstance(prompt, str):
        return handle.system_prompt, prompt
    system = getattr(prompt, "system", None) or handle.system_prompt
    return system, prompt.render()


# --------------------------------------------------------------------------
# mock backend


def _mock_complete(handle: ModelHandle, user: str) -> str:
    with handle._lock:
        for idx, rule in enumerate(handle.script):
            if rule._regex.search(user):
                pos = handle._cursor.get(idx, 0)
                handle._cursor[idx] = pos + 1
                return rule.responses[min(pos, len(rule.responses) - 1)]
    raise GatewayError("scripted model has no rule matching the prompt")


def hash_embed(text: str, dim: int) -> np.ndarray:
    """Signed feature hashing of lowercase word tokens, L2-normalized."""
    vec = np.zeros(dim, dtype=np.float64)
    for token in _WORD_RE.findall(text.lower()):
        digest = hashlib.blake2b(token.encode(), digest_size=8).digest()
        bucket = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


# --------------------------------------------------------------------------
# remote backend


def _client(handle: ModelHandle) -> httpx.Client:
    headers = {"Content-Type": "application/json"}
    if handle.api_key_env:
        key = os.environ.get(handle.api_key_env)
        if not key:
            raise GatewayError(f"environment variable {handle.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    return httpx.Client(base_url=handle.endpoint.rstrip("/"), headers=headers,
                        timeout=handle.timeout, transport=handle.transport)


def _post(handle: ModelHandle, path: str, payload: dict[str, Any],
          sleep: Callable[[float], None] = time.sleep) -> dict[str, Any]:
    attempts = max(1, handle.retries)
    last: Exception | None = None
    with _client(handle) as client:
        for attempt in range(attempts):
            if attempt:
                sleep(handle.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(path, json=payload)
            except httpx.TransportError as exc:  # includes timeouts
                last = exc
                log.warning("%s%s: transport error (%s), attempt %d/%d",
                            handle.endpoint, path, exc, attempt + 1, attempts)
                continue
            if resp.status_code in RETRY_STATUS:
                last = GatewayError(f"HTTP {resp.status_code} from {handle.endpoint}{path}")
                log.warning("%s, attempt %d/%d", last, attempt + 1, attempts)
                continue
            if resp.status_code >= 400:
                raise GatewayError(f"HTTP {resp.status_code} from {handle.endpoint}{path}: {resp.text[:500]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise GatewayError(f"invalid JSON from {handle.endpoint}{path}") from exc
    raise GatewayError(f"{handle.endpoint}{path} failed after {attempts} attempts: {last}")


# --------------------------------------------------------------------------
# public API


def complete(handle: ModelHandle, prompt: Any) -> CompletionResult:
    """Send a prompt (string or PromptSpec) and return the fence-stripped reply."""
    system, user = _prompt_parts(prompt, handle)
    start = time.monotonic()
    with handle._sem:
        with handle._lock:
            handle.completion_calls += 1
            handle.prompts.append(user)
        if handle.kind == "scripted_mock":
            raw = _mock_complete(handle, user)
            usage = None
        else:
            payload = {
                "model": handle.model_id,
                "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
                "temperature": handle.temperature,
                "max_tokens": handle.max_tokens,
            }
            data = _post(handle, "/chat/completions", payload)
            try:
                raw = data["choices"][0]["message"]["content"] or ""
            except (KeyError, IndexError, TypeError) as exc:
                raise GatewayError("completion response has no choices[0].message.content") from exc
            usage = data.get("usage")
    latency = time.monotonic() - start
    if usage and "prompt_tokens" in usage and "completion_tokens" in usage:
        return CompletionResult(strip_fences(raw), int(usage["prompt_tokens"]),
                                int(usage["completion_tokens"]), latency, False)
    return CompletionResult(strip_fences(raw), estimate_tokens(system + user), estimate_tokens(raw), latency, True)


def embed(handle: ModelHandle, texts: Sequence[str]) -> Embeddings:
    """One vector per input text.  Empty strings map to a flagged zero vector."""
    if not texts:
        raise ValueError("embed() needs at least one text")
    flagged = [i for i, t in enumerate(texts) if not t.strip()]
    live = [i for i, t in enumerate(texts) if t.strip()]
    vectors: dict[int, np.ndarray] = {}
    with handle._sem:
        with handle._lock:
            handle.embedding_calls += 1
        if handle.kind == "scripted_mock":
            for i in live:
                mapped = handle.embed_map.get(texts[i])
                vectors[i] = (np.asarray(mapped, dtype=np.float64) if mapped is not None
                              else hash_embed(texts[i], handle.embed_dim))
        elif live:
            data = _post(handle, "/embeddings", {"model": handle.model_id, "input": [texts[i] for i in live]})
            try:
                rows = sorted(data["data"], key=lambda d: d.get("index", 0))
                for i, row in zip(live, rows, strict=True):
                    vectors[i] = np.asarray(row["embedding"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise GatewayError("embedding response does not match the request") from exc
    widths = {v.shape[0] for v in vectors.values()}
    with handle._lock:
        if handle._dim is not None:
            widths.add(handle._dim)
        if len(widths) > 1:
            raise DimensionMismatch(f"embedding width changed: {sorted(widths)}")
        if widths:
            handle._dim = widths.pop()
        dim = handle._dim if handle._dim is not None else handle.embed_dim
    if flagged:
        log.warning("embedding %d empty input(s) as zero vectors", len(flagged))
    out = [vectors[i].tolist() if i in vectors else [0.0] * dim for i in range(len(texts))]
    return Embeddings(out, flagged)


def handle_from_config(cfg: dict[str, Any]) -> ModelHandle:
    """Build a handle from a config mapping (see ``config.ModelConfig``)."""
    script = []
    for rule in cfg.get("script", []) or []:
        responses = rule.get("responses", [])
        if isinstance(responses, str):
            responses = [responses]
        script.append(ScriptRule(rule.get("match", ".*"), list(responses)))
    keys = {"kind", "model_id", "endpoint", "api_key_env", "temperature", "max_tokens", "timeout",
            "max_concurrency", "retries", "backoff", "embed_dim", "system_prompt"}
    kwargs = {k: v for k, v in cfg.items() if k in keys and v is not None}
    return ModelHandle(script=script, **kwargs)
