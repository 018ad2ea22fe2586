"""Rule- and judge-based rewards for tagged completions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .core import QaRecord, StructuredCompletion
from .judge import Judge, JudgePrompt, answer_prompt, parse_similarity_detail, reasoning_prompt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardWeights:
    w_format: float = 0.1
    w_reasoning: float = 0.45
    w_answer: float = 0.45

    def __post_init__(self):
        ws = (self.w_format, self.w_reasoning, self.w_answer)
        if any(not math.isfinite(w) or w < 0 for w in ws):
            raise ValueError(f"reward weights must be finite and >= 0, got {ws}")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"reward weights must sum to 1, got {sum(ws)!r}")

    @classmethod
    def parse(cls, value: "str | Iterable[float] | Mapping | RewardWeights") -> "RewardWeights":
        """Accept ``"F:R:A"`` strings, 3-sequences or ``{"format": .., ...}`` mappings."""
        if isinstance(value, RewardWeights):
            return value
        if isinstance(value, str):
            parts = value.split(":")
            if len(parts) != 3:
                raise ValueError(f"expected 'format:reasoning:answer', got {value!r}")
            try:
                return cls(*(float(p) for p in parts))
            except ValueError as err:
                raise ValueError(f"bad reward weights {value!r}: {err}") from None
        if isinstance(value, Mapping):
            return cls(float(value["format"]), float(value["reasoning"]), float(value["answer"]))
        ws = [float(v) for v in value]
        if len(ws) != 3:
            raise ValueError(f"expected three weights, got {len(ws)}")
        return cls(*ws)

    def __str__(self) -> str:
        return f"{self.w_format:g}:{self.w_reasoning:g}:{self.w_answer:g}"


DEFAULT_WEIGHTS = RewardWeights()
ANSWER_HEAVY = RewardWeights(0.1, 0.4, 0.5)
REASONING_HEAVY = RewardWeights(0.1, 0.5, 0.4)
TABLE4_CONFIGS = (DEFAULT_WEIGHTS, ANSWER_HEAVY, REASONING_HEAVY)


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    reasoning: float
    answer: float
    total: float
    clamped: bool = False

    def as_dict(self) -> dict:
        return {
            "format": self.format,
            "reasoning": self.reasoning,
            "answer": self.answer,
            "total": self.total,
            "clamped": self.clamped,
        }


def combine(fmt: float, reasoning: float, answer: float, weights: RewardWeights) -> float:
    return weights.w_format * fmt + weights.w_reasoning * reasoning + weights.w_answer * answer


def format_reward(completion: StructuredCompletion) -> float:
    return 1.0 if completion.well_formed else 0.0


def _similarity(generated: str, reference: str, judge: Judge, prompt: JudgePrompt) -> tuple[float, bool]:
    reply = judge.ask(prompt, {"gen_text": generated, "ref_text": reference}, parse_similarity_detail)
    score, raw = reply.value
    clamped = score != raw
    if clamped:
        log.warning("judge score %r outside [0, 1], clamped to %r", raw, score)
    return score, clamped


def reasoning_similarity_reward(generated: str, reference: str, judge: Judge) -> float:
    return _similarity(generated, reference, judge, reasoning_prompt())[0]


def answer_similarity_reward(generated: str, reference: str, judge: Judge) -> float:
    return _similarity(generated, reference, judge, answer_prompt())[0]


def total_reward(
    completion: StructuredCompletion,
    record: QaRecord,
    weights: RewardWeights,
    judge: Judge,
) -> RewardBreakdown:
    """Weighted format/reasoning/answer reward for one completion.

    Malformed completions score zero across the board without touching
    the judge.
    """
    if not completion.well_formed:
        return RewardBreakdown(0.0, 0.0, 0.0, 0.0)
    reasoning, c1 = _similarity(completion.reasoning, record.reference_reasoning, judge, reasoning_prompt())
    answer, c2 = _similarity(completion.answer, record.reference_answer, judge, answer_prompt())
    total = combine(1.0, reasoning, answer, weights)
    return RewardBreakdown(1.0, reasoning, answer, total, clamped=c1 or c2)
