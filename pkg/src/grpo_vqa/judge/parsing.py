"""Parsers for judge replies."""

from __future__ import annotations

import re

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_SIMILARITY = re.compile(r"similarity\s+score\s*:\s*(" + _NUMBER + ")", re.IGNORECASE)
_BARE_NUMBER = re.compile(_NUMBER)
_FIVE_LEVEL = {
    "reasoning": re.compile(r"REASONING_SCORE\s*:\s*\[?\s*(\d+)\s*\]?", re.IGNORECASE),
    "answer": re.compile(r"ANSWER_SCORE\s*:\s*\[?\s*(\d+)\s*\]?", re.IGNORECASE),
}


class JudgeError(RuntimeError):
    pass


class JudgeParseError(JudgeError):
    def __init__(self, message: str, reply: str):
        super().__init__(f"{message}; raw reply: {reply!r}")
        self.reply = reply


class NoScoreFound(JudgeParseError):
    pass


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def parse_similarity_detail(reply: str) -> tuple[float, float]:
    """Return ``(clamped, raw)`` for a "Similarity score: <x>" reply."""
    m = _SIMILARITY.search(reply)
    if m is None:
        raise NoScoreFound("no 'Similarity score:' value in judge reply", reply)
    raw = float(m.group(1))
    if raw != raw:  # pragma: no cover - the pattern cannot produce nan
        raise NoScoreFound("score is not a number", reply)
    return clamp01(raw), raw


def parse_similarity_response(reply: str) -> float:
    return parse_similarity_detail(reply)[0]


def parse_fractional(reply: str) -> tuple[float, float]:
    """First bare decimal in the reply, as ``(clamped, raw)``."""
    m = _BARE_NUMBER.search(reply)
    if m is None:
        raise NoScoreFound("no numeric score in judge reply", reply)
    raw = float(m.group(0))
    return clamp01(raw), raw


def parse_five_level(reply: str) -> tuple[int, int]:
    """Parse the two-line REASONING_SCORE / ANSWER_SCORE reply into levels 1..5."""
    levels = []
    for part, pattern in _FIVE_LEVEL.items():
        m = pattern.search(reply)
        if m is None:
            raise NoScoreFound(f"no {part.upper()}_SCORE line in judge reply", reply)
        level = int(m.group(1))
        if not 1 <= level <= 5:
            raise JudgeParseError(f"{part} level {level} outside 1..5", reply)
        levels.append(level)
    return levels[0], levels[1]


def five_level_to_unit(level: int) -> float:
    return (level - 1) / 4.0
