from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


class PromptKind(str, enum.Enum):
    REASONING = "reasoning"
    ANSWER = "answer"
    FIVE_LEVEL = "five_level"
    FRACTIONAL = "fractional"


PLACEHOLDERS = {
    PromptKind.REASONING: ("gen_text", "ref_text"),
    PromptKind.ANSWER: ("gen_text", "ref_text"),
    PromptKind.FIVE_LEVEL: (
        "question",
        "reference_reasoning",
        "candidate_reasoning",
        "reference_answer",
        "candidate_answer",
    ),
    PromptKind.FRACTIONAL: ("reference", "candidate"),
}


@dataclass(frozen=True)
class JudgePrompt:
    system: str
    user_template: str
    kind: PromptKind

    def __post_init__(self):
        object.__setattr__(self, "kind", PromptKind(self.kind))
        for name in PLACEHOLDERS[self.kind]:
            n = self.user_template.count("{" + name + "}")
            if n != 1:
                raise ValueError(
                    f"{self.kind.value} template must contain {{{name}}} exactly once, found {n}"
                )

    def render(self, **fields: str) -> str:
        # plain substitution: templates may legitimately contain other braces
        missing = set(PLACEHOLDERS[self.kind]) - set(fields)
        if missing:
            raise KeyError(f"missing template fields: {sorted(missing)}")
        text = self.user_template
        for name in PLACEHOLDERS[self.kind]:
            text = text.replace("{" + name + "}", fields[name])
        return text

    def messages(self, **fields: str) -> list[dict]:
        msgs = []
        if self.system:
            msgs.append({"role": "system", "content": self.system})
        msgs.append({"role": "user", "content": self.render(**fields)})
        return msgs


@lru_cache(maxsize=None)
def _templates() -> dict:
    text = resources.files("grpo_vqa.judge").joinpath("templates/prompts.json").read_text("utf-8")
    return json.loads(text)


def load_prompt(name: str) -> JudgePrompt:
    """Load one of the bundled prompts by name.

    Names: ``reasoning_similarity``, ``answer_similarity``,
    ``quality_five_level``, ``semantic_fractional``.
    """
    try:
        entry = _templates()[name]
    except KeyError:
        raise KeyError(f"unknown prompt {name!r}; have {sorted(_templates())}") from None
    return JudgePrompt(system=entry["system"], user_template=entry["user_template"], kind=entry["kind"])


def reasoning_prompt() -> JudgePrompt:
    return load_prompt("reasoning_similarity")


def answer_prompt() -> JudgePrompt:
    return load_prompt("answer_similarity")
