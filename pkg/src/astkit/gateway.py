"""Uniform access to chat-completion backends.

Two backend kinds share one call surface: ``remote`` speaks the
OpenAI-compatible ``POST {base_url}/chat/completions`` JSON protocol with
bearer-token auth, and ``scripted`` replays canned responses matched by
substring against the assembled prompt, so every pipeline stage can run
offline and deterministically.
"""
from __future__ import annotations

import base64
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import BackendUnavailable, BadRequest, MissingImage, Timeout

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
MAX_ATTACHMENT_BYTES = 8 * 1024 * 1024

ENV_BASE_URL = "AST_LLM_BASE_URL"
ENV_API_KEY = "AST_LLM_API_KEY"
ENV_MODEL = "AST_LLM_MODEL"
ENV_VISION_MODEL = "AST_VISION_MODEL"


@dataclass(frozen=True)
class ChatMessage:
    """One turn of a chat conversation; images only on user messages."""

    role: str
    text: str
    images: tuple[tuple[bytes, str], ...] = ()

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.images and self.role != "user":
            raise ValueError("images are only permitted on user messages")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"
    base_url: str = ""
    model_id: str = "default"
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrent: int = 4
    api_key: str = ""
    temperature: float | None = None
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.base_url:
            raise ValueError("remote backend requires a non-empty base_url")
        if not 0 <= self.max_retries <= 10:
            raise ValueError("max_retries must be in [0, 10]")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be positive")

    @classmethod
    def from_env(cls, vision: bool = False) -> "BackendConfig":
        """Remote config from the AST_LLM_* environment variables."""
        base_url = os.environ.get(ENV_BASE_URL, "")
        model = os.environ.get(ENV_VISION_MODEL if vision else ENV_MODEL, "default")
        return cls(
            kind="remote" if base_url else "scripted",
            base_url=base_url,
            model_id=model,
            api_key=os.environ.get(ENV_API_KEY, ""),
        )


@dataclass(frozen=True)
class ScriptedResponses:
    """Ordered (matcher, response) table; first matching entry wins.

    Matching is a case-sensitive substring test against the fully assembled
    prompt (all message texts joined by newlines).
    """

    entries: tuple[tuple[str, str], ...] = ()
    default_response: str = ""

    def lookup(self, prompt: str) -> str:
        for matcher, response in self.entries:
            if matcher in prompt:
                return response
        return self.default_response

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedResponses":
        """Load from a JSON array of {"match", "response"} plus {"default"}."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        entries: list[tuple[str, str]] = []
        default = ""
        for item in raw:
            if "default" in item:
                default = item["default"]
            else:
                entries.append((item["match"], item["response"]))
        return cls(entries=tuple(entries), default_response=default)


def assembled_prompt(messages: list[ChatMessage]) -> str:
    return "\n".join(m.text for m in messages)


class Gateway:
    """Shareable chat-completion client enforcing a concurrency cap.

    The scripted table is read-only after construction, so one gateway can
    serve concurrent callers from any number of threads.
    """

    def __init__(self, cfg: BackendConfig, scripted: ScriptedResponses | None = None):
        if cfg.kind == "scripted" and scripted is None:
            scripted = ScriptedResponses()
        self.cfg = cfg
        self.scripted = scripted
        self._slots = threading.BoundedSemaphore(cfg.max_concurrent)

    def complete(self, messages: list[ChatMessage]) -> str:
        """Text completion. Retries transport/5xx failures with backoff."""
        if not messages:
            raise ValueError("messages must be non-empty")
        if any(m.images for m in messages):
            raise BadRequest("complete() does not accept image attachments")
        with self._slots:
            if self.cfg.kind == "scripted":
                assert self.scripted is not None
                return self.scripted.lookup(assembled_prompt(messages))
            return self._remote_call(messages)

    def complete_vision(self, messages: list[ChatMessage]) -> str:
        """Vision completion over messages carrying at least one PNG."""
        if not messages:
            raise ValueError("messages must be non-empty")
        total = sum(len(img) for m in messages for img, _mime in m.images)
        if total == 0:
            raise MissingImage("complete_vision() requires at least one image")
        if total > MAX_ATTACHMENT_BYTES:
            raise ValueError(
                f"attachments total {total} bytes, limit is {MAX_ATTACHMENT_BYTES}"
            )
        with self._slots:
            if self.cfg.kind == "scripted":
                assert self.scripted is not None
                return self.scripted.lookup(assembled_prompt(messages))
            return self._remote_call(messages)

    # Remote wire protocol

    def _remote_call(self, messages: list[ChatMessage]) -> str:
        payload = {
            "model": self.cfg.model_id,
            "messages": [self._wire_message(m) for m in messages],
        }
        if self.cfg.temperature is not None:
            payload["temperature"] = self.cfg.temperature
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"

        last_exc: Exception | None = None
        timed_out = False
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                time.sleep(self._backoff(attempt - 1))
            try:
                resp = requests.post(
                    url, json=payload, headers=headers, timeout=self.cfg.timeout
                )
            except requests.Timeout as exc:
                last_exc, timed_out = exc, True
                logger.warning("attempt %d timed out: %s", attempt + 1, exc)
                continue
            except requests.RequestException as exc:
                last_exc, timed_out = exc, False
                logger.warning("attempt %d transport error: %s", attempt + 1, exc)
                continue
            if 400 <= resp.status_code < 500:
                raise BadRequest(f"backend returned {resp.status_code}: {resp.text[:200]}")
            if resp.status_code >= 500:
                last_exc, timed_out = None, False
                logger.warning("attempt %d got %d", attempt + 1, resp.status_code)
                continue
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise BackendUnavailable(f"malformed backend response: {exc}") from exc
        if timed_out:
            raise Timeout(f"all {self.cfg.max_retries + 1} attempts timed out") from last_exc
        raise BackendUnavailable(
            f"backend unreachable after {self.cfg.max_retries + 1} attempts"
        ) from last_exc

    def _backoff(self, prior_attempt: int) -> float:
        # 0.5 s * 2^attempt with +/-20% jitter
        return self.cfg.backoff_base * (2**prior_attempt) * random.uniform(0.8, 1.2)

    @staticmethod
    def _wire_message(msg: ChatMessage) -> dict:
        if not msg.images:
            return {"role": msg.role, "content": msg.text}
        parts: list[dict] = [{"type": "text", "text": msg.text}]
        for img, mime in msg.images:
            b64 = base64.b64encode(img).decode("ascii")
            parts.append(
                {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{b64}"}}
            )
        return {"role": msg.role, "content": parts}


def embed_remote(text: str, cfg: BackendConfig) -> list[float]:
    """Call an OpenAI-compatible /embeddings endpoint; raw (unnormalized) vector."""
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    url = cfg.base_url.rstrip("/") + "/embeddings"
    try:
        resp = requests.post(
            url,
            json={"model": cfg.model_id, "input": text},
            headers=headers,
            timeout=cfg.timeout,
        )
    except requests.RequestException as exc:
        raise BackendUnavailable(f"embedding endpoint unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise BackendUnavailable(f"embedding endpoint returned {resp.status_code}")
    return resp.json()["data"][0]["embedding"]
