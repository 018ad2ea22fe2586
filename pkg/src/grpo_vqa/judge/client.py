"""Chat-completions judge client with retries and a per-endpoint concurrency cap."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import httpx

from .base import Judge, JudgeReply
from .parsing import JudgeError, JudgeParseError, parse_similarity_response
from .prompts import JudgePrompt

log = logging.getLogger(__name__)


class AuthMissing(JudgeError):
    pass


class ExhaustedRetries(JudgeError):
    def __init__(self, attempts: int, last_error: BaseException):
        super().__init__(f"judge request failed after {attempts} attempt(s): {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class TransportError(JudgeError):
    pass


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str
    model_name: str
    temperature: float = 0.0
    max_retries: int = 3
    backoff_base: float = 1.0
    parallelism_limit: int = 4
    api_key_env: str = "JUDGE_API_KEY"
    timeout: float = 60.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.parallelism_limit < 1:
            raise ValueError("parallelism_limit must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.backoff_base < 0:
            raise ValueError("backoff_base must be >= 0")

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "JudgeConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown judge config keys: {sorted(unknown)}")
        return cls(**obj)

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "").strip()
        if not key:
            raise AuthMissing(f"environment variable {self.api_key_env} is not set")
        return key


_semaphores: dict[tuple, threading.BoundedSemaphore] = {}
_semaphores_lock = threading.Lock()


def _semaphore(config: JudgeConfig) -> threading.BoundedSemaphore:
    key = (config.endpoint.rstrip("/"), config.parallelism_limit)
    with _semaphores_lock:
        sem = _semaphores.get(key)
        if sem is None:
            sem = _semaphores[key] = threading.BoundedSemaphore(config.parallelism_limit)
        return sem


def chat_completion(messages: list[dict], config: JudgeConfig, api_key: str) -> str:
    """One POST to ``{endpoint}/chat/completions``; returns the first choice's content."""
    url = config.endpoint.rstrip("/") + "/chat/completions"
    body = {"model": config.model_name, "messages": messages, "temperature": config.temperature}
    headers = {"Authorization": f"Bearer {api_key}"}
    with _semaphore(config):
        try:
            resp = httpx.post(url, json=body, headers=headers, timeout=config.timeout)
        except httpx.HTTPError as err:
            raise TransportError(f"{type(err).__name__}: {err}") from err
    if resp.status_code != 200:
        raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as err:
        raise TransportError(f"malformed completion payload: {err}") from err


def request_with_retries(
    messages: list[dict],
    config: JudgeConfig,
    parse: Callable[[str], Any],
    on_request: Callable[[], None] | None = None,
) -> JudgeReply:
    """Send ``messages`` until ``parse`` accepts a reply.

    Transport failures and unparseable replies are both retried, up to
    ``max_retries`` extra attempts with exponential backoff.
    """
    api_key = config.api_key()
    last: BaseException | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.backoff_base * 2 ** (attempt - 1))
        if on_request is not None:
            on_request()
        try:
            reply = chat_completion(messages, config, api_key)
            return JudgeReply(parse(reply), reply)
        except (TransportError, JudgeParseError) as err:
            log.warning("judge attempt %d/%d failed: %s", attempt + 1, config.max_retries + 1, err)
            last = err
    raise ExhaustedRetries(config.max_retries + 1, last)


def judge_score(gen: str, ref: str, prompt: JudgePrompt, config: JudgeConfig) -> float:
    messages = prompt.messages(gen_text=gen, ref_text=ref)
    return request_with_retries(messages, config, parse_similarity_response).value


class HttpJudge(Judge):
    """Judge backed by an OpenAI-compatible chat-completions endpoint."""

    name = "http"

    def __init__(self, config: JudgeConfig):
        super().__init__()
        self.config = config

    def ask(self, prompt, fields, parse):
        reply = request_with_retries(prompt.messages(**fields), self.config, parse, on_request=self._count)
        if self.audit_log is not None:
            with self._lock:
                self.audit_log.append({"kind": prompt.kind.value, "fields": dict(fields), "reply": reply.raw})
        return reply

    def _reply(self, prompt, fields):
        return chat_completion(prompt.messages(**fields), self.config, self.config.api_key())
