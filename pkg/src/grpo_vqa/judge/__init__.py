"""LLM-as-judge backends, prompts and reply parsers."""

from .base import Judge, JudgeReply
from .client import (
    AuthMissing,
    ExhaustedRetries,
    HttpJudge,
    JudgeConfig,
    TransportError,
    chat_completion,
    judge_score,
    request_with_retries,
)
from .mock import MockJudge, ScriptedJudge, mock_similarity
from .parsing import (
    JudgeError,
    JudgeParseError,
    NoScoreFound,
    clamp01,
    five_level_to_unit,
    parse_five_level,
    parse_fractional,
    parse_similarity_detail,
    parse_similarity_response,
)
from .prompts import JudgePrompt, PromptKind, answer_prompt, load_prompt, reasoning_prompt

__all__ = [
    "AuthMissing",
    "ExhaustedRetries",
    "HttpJudge",
    "Judge",
    "JudgeConfig",
    "JudgeError",
    "JudgeParseError",
    "JudgePrompt",
    "JudgeReply",
    "MockJudge",
    "NoScoreFound",
    "PromptKind",
    "ScriptedJudge",
    "TransportError",
    "answer_prompt",
    "chat_completion",
    "clamp01",
    "five_level_to_unit",
    "judge_score",
    "load_prompt",
    "mock_similarity",
    "parse_five_level",
    "parse_fractional",
    "parse_similarity_detail",
    "parse_similarity_response",
    "reasoning_prompt",
    "request_with_retries",
]
