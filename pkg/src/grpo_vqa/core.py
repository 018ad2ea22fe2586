"""Dataset records, taxonomy statistics and tagged-completion parsing."""

from __future__ import annotations

import enum
import json
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

__all__ = [
    "QuestionType",
    "QaRecord",
    "TagConfig",
    "StructuredCompletion",
    "DatasetStats",
    "DatasetError",
    "RECORD_FIELDS",
    "load_dataset",
    "record_to_dict",
    "record_from_dict",
    "dump_dataset",
    "save_dataset",
    "validate_dataset",
    "parse_completion",
]


class QuestionType(str, enum.Enum):
    OBJECT_IDENTIFICATION = "object_identification"
    ATTRIBUTE_ANALYSIS = "attribute_analysis"
    SPATIAL_REASONING = "spatial_reasoning"


RECORD_FIELDS = (
    "id",
    "image_ref",
    "question",
    "question_type",
    "reference_reasoning",
    "reference_answer",
)


class DatasetError(ValueError):
    """Raised for malformed dataset files or records.

    ``line`` is the 1-based line number when the error came from a file.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class QaRecord:
    id: str
    image_ref: str
    question: str
    question_type: QuestionType
    reference_reasoning: str
    reference_answer: str

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise DatasetError("record id must be a non-empty string", field="id")
        if not isinstance(self.question_type, QuestionType):
            try:
                object.__setattr__(self, "question_type", QuestionType(self.question_type))
            except ValueError:
                raise DatasetError(
                    f"unknown question_type {self.question_type!r}", field="question_type"
                ) from None

    def check_training(self) -> None:
        """Training-split records need both reference texts."""
        for name in ("reference_reasoning", "reference_answer"):
            if not getattr(self, name).strip():
                raise DatasetError(f"record {self.id!r} has empty {name}", field=name)


def record_to_dict(record: QaRecord) -> dict:
    return {
        "id": record.id,
        "image_ref": record.image_ref,
        "question": record.question,
        "question_type": record.question_type.value,
        "reference_reasoning": record.reference_reasoning,
        "reference_answer": record.reference_answer,
    }


def record_from_dict(obj: Mapping, line: int | None = None, allow_extra: bool = False) -> QaRecord:
    if not isinstance(obj, Mapping):
        raise DatasetError("record must be a JSON object", line=line)
    for name in RECORD_FIELDS:
        if name not in obj:
            raise DatasetError(f"missing field {name!r}", line=line, field=name)
        if not isinstance(obj[name], str):
            raise DatasetError(f"field {name!r} must be a string", line=line, field=name)
    if not allow_extra:
        extra = sorted(set(obj) - set(RECORD_FIELDS))
        if extra:
            raise DatasetError(f"unexpected field(s) {extra}", line=line, field=extra[0])
    try:
        return QaRecord(**{name: obj[name] for name in RECORD_FIELDS})
    except DatasetError as err:
        raise DatasetError(str(err), line=line, field=err.field) from None


def load_dataset(path: str | os.PathLike, allow_extra: bool = False) -> list[QaRecord]:
    """Read a JSON-lines dataset, one record per line, in file order.

    Blank lines are skipped. Raises ``DatasetError`` naming the line for
    malformed JSON, schema violations, unknown question types and
    duplicate ids; IO errors propagate as ``OSError``.
    """
    records = []
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"invalid JSON ({err.msg})", line=lineno) from None
            record = record_from_dict(obj, line=lineno, allow_extra=allow_extra)
            if record.id in seen:
                raise DatasetError(
                    f"duplicate id {record.id!r} (first seen on line {seen[record.id]})",
                    line=lineno,
                    field="id",
                )
            seen[record.id] = lineno
            records.append(record)
    return records


def dump_dataset(records: Iterable[QaRecord]) -> str:
    """Canonical JSON-lines text for ``records`` (trailing newline included)."""
    lines = [json.dumps(record_to_dict(r), ensure_ascii=False) for r in records]
    return "".join(line + "\n" for line in lines)


def save_dataset(records: Iterable[QaRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_dataset(records))


@dataclass(frozen=True)
class DatasetStats:
    total: int
    per_type: dict  # QuestionType -> (count, percentage)

    def percentages(self) -> tuple[float, ...]:
        return tuple(self.per_type[qt][1] for qt in QuestionType)

    def counts(self) -> tuple[int, ...]:
        return tuple(self.per_type[qt][0] for qt in QuestionType)

    def format(self) -> str:
        rows = [f"total: {self.total}"]
        for qt in QuestionType:
            count, pct = self.per_type[qt]
            rows.append(f"{qt.value}: {count} ({pct:.2f}%)")
        return "\n".join(rows)


def validate_dataset(records: Iterable[QaRecord]) -> DatasetStats:
    records = list(records)
    if not records:
        raise DatasetError("dataset is empty")
    ids = set()
    counts = {qt: 0 for qt in QuestionType}
    for record in records:
        if record.id in ids:
            raise DatasetError(f"duplicate id {record.id!r}", field="id")
        ids.add(record.id)
        counts[record.question_type] += 1
    total = len(records)
    per_type = {qt: (n, round(100.0 * n / total, 2)) for qt, n in counts.items()}
    return DatasetStats(total=total, per_type=per_type)


@dataclass(frozen=True)
class TagConfig:
    reasoning_open: str = "<think>"
    reasoning_close: str = "</think>"
    answer_open: str = "<answer>"
    answer_close: str = "</answer>"

    def __post_init__(self):
        tags = self.as_tuple()
        if any(not isinstance(t, str) or not t for t in tags):
            raise ValueError("tags must be non-empty strings")
        if len(set(tags)) != 4:
            raise ValueError(f"tags must be pairwise distinct, got {tags}")

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.reasoning_open, self.reasoning_close, self.answer_open, self.answer_close)


@dataclass(frozen=True)
class StructuredCompletion:
    raw: str
    reasoning: str | None = None
    answer: str | None = None
    well_formed: bool = False
    problems: tuple[str, ...] = field(default=(), compare=False)


def _scan_tags(raw: str, tags: TagConfig) -> list[tuple[int, int, int]]:
    # longest tag first so one tag that prefixes another is never split
    order = sorted(range(4), key=lambda i: -len(tags.as_tuple()[i]))
    pattern = re.compile("|".join(re.escape(tags.as_tuple()[i]) for i in order))
    lookup = {t: i for i, t in enumerate(tags.as_tuple())}
    return [(lookup[m.group(0)], m.start(), m.end()) for m in pattern.finditer(raw)]


def _first_block(hits, open_kind, close_kind, raw):
    for idx, (kind, _, end) in enumerate(hits):
        if kind == open_kind:
            for kind2, start2, _ in hits[idx + 1 :]:
                if kind2 == close_kind:
                    return raw[end:start2].strip()
            return None
    return None


def parse_completion(raw: str, tags: TagConfig | None = None) -> StructuredCompletion:
    """Split ``raw`` into reasoning and answer sections.

    Well-formed means exactly one of each tag, in the order
    reasoning-open, reasoning-close, answer-open, answer-close, with
    non-empty content in both blocks. Anything outside the blocks is
    ignored. Never raises on string input.
    """
    tags = tags or TagConfig()
    hits = _scan_tags(raw, tags)
    reasoning = _first_block(hits, 0, 1, raw)
    answer = _first_block(hits, 2, 3, raw)

    problems = []
    names = ("reasoning_open", "reasoning_close", "answer_open", "answer_close")
    for kind, name in enumerate(names):
        n = sum(1 for h in hits if h[0] == kind)
        if n == 0:
            problems.append(f"missing {name}")
        elif n > 1:
            problems.append(f"repeated {name}")
    if not problems and [h[0] for h in hits] != [0, 1, 2, 3]:
        problems.append("tags out of order or nested")
    if not problems:
        if not reasoning:
            problems.append("empty reasoning")
        if not answer:
            problems.append("empty answer")

    return StructuredCompletion(
        raw=raw,
        reasoning=reasoning,
        answer=answer,
        well_formed=not problems,
        problems=tuple(problems),
    )
