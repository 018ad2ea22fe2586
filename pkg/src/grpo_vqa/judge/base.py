from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .parsing import JudgeParseError
from .prompts import JudgePrompt


@dataclass(frozen=True)
class JudgeReply:
    value: Any
    raw: str


class Judge:
    """A scoring backend that answers rendered judge prompts with text.

    Subclasses implement ``_reply``. ``ask`` renders nothing itself: it
    hands the prompt and its template fields to the backend and runs the
    given parser over the reply. ``calls`` counts backend requests and is
    safe to read from any thread.
    """

    name = "judge"

    def __init__(self):
        self._lock = threading.Lock()
        self._calls = 0
        self.audit_log: list[dict] | None = None

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls

    def _count(self) -> None:
        with self._lock:
            self._calls += 1

    def _reply(self, prompt: JudgePrompt, fields: Mapping[str, str]) -> str:
        raise NotImplementedError

    def complete(self, prompt: JudgePrompt, fields: Mapping[str, str]) -> str:
        self._count()
        reply = self._reply(prompt, fields)
        if self.audit_log is not None:
            with self._lock:
                self.audit_log.append({"kind": prompt.kind.value, "fields": dict(fields), "reply": reply})
        return reply

    def ask(self, prompt: JudgePrompt, fields: Mapping[str, str], parse: Callable[[str], Any]) -> JudgeReply:
        reply = self.complete(prompt, fields)
        try:
            return JudgeReply(parse(reply), reply)
        except JudgeParseError:
            raise
        except ValueError as err:
            raise JudgeParseError(str(err), reply) from err
