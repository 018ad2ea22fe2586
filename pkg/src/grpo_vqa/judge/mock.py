"""Deterministic judge doubles for tests and offline runs."""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence

from .base import Judge
from .prompts import JudgePrompt, PromptKind


def mock_similarity(gen: str, ref: str) -> float:
    """Jaccard similarity of lowercased whitespace token sets (both empty -> 1.0)."""
    a = set(gen.lower().split())
    b = set(ref.lower().split())
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


class MockJudge(Judge):
    """Answers every prompt kind in its wire format using ``mock_similarity``.

    Replies go through the real parsers, so the mock exercises the same
    code path as a remote judge.
    """

    name = "mock"

    def __init__(self, similarity: Callable[[str, str], float] = mock_similarity):
        super().__init__()
        self.similarity = similarity

    def _reply(self, prompt: JudgePrompt, fields: Mapping[str, str]) -> str:
        kind = prompt.kind
        if kind in (PromptKind.REASONING, PromptKind.ANSWER):
            return f"Similarity score: {self.similarity(fields['gen_text'], fields['ref_text']):.4f}"
        if kind is PromptKind.FRACTIONAL:
            return f"{self.similarity(fields['candidate'], fields['reference']):.4f}"
        r = self.similarity(fields["candidate_reasoning"], fields["reference_reasoning"])
        a = self.similarity(fields["candidate_answer"], fields["reference_answer"])
        return f"REASONING_SCORE: {1 + round(4 * r)}\nANSWER_SCORE: {1 + round(4 * a)}"


class ScriptedJudge(Judge):
    """Replays canned replies.

    ``replies`` is either a single string (returned forever), a sequence
    consumed in order, or a callable ``(prompt, fields) -> str``.
    """

    name = "scripted"

    def __init__(self, replies: str | Sequence[str] | Callable[[JudgePrompt, Mapping[str, str]], str]):
        super().__init__()
        self._replies = replies
        self._index = 0

    def _reply(self, prompt, fields):
        if callable(self._replies):
            return self._replies(prompt, fields)
        if isinstance(self._replies, str):
            return self._replies
        with self._lock:
            if self._index >= len(self._replies):
                raise RuntimeError("scripted judge ran out of replies")
            reply = self._replies[self._index]
            self._index += 1
        return reply
