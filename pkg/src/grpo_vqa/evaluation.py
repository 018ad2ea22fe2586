"""Benchmark scoring: judge protocols, embedding similarity and R/A/F1 reports."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import QaRecord, StructuredCompletion
from .judge import (
    Judge,
    JudgeError,
    five_level_to_unit,
    load_prompt,
    parse_five_level,
    parse_fractional,
)


def f1_fuse(r: float, a: float) -> float:
    """Harmonic mean of reasoning and answer scores (0 when both are 0)."""
    for name, v in (("R", r), ("A", a)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name}={v!r} outside [0, 1]")
    if r + a == 0:
        return 0.0
    return 2.0 * r * a / (r + a)


@dataclass(frozen=True)
class ScoreTriple:
    reasoning: float
    answer: float
    f1: float

    @classmethod
    def of(cls, r: float, a: float) -> "ScoreTriple":
        return cls(r, a, f1_fuse(r, a))

    def as_dict(self) -> dict:
        return {"R": self.reasoning, "A": self.answer, "F1": self.f1}


class Protocol(str, enum.Enum):
    FIVE_LEVEL = "five_level"
    FRACTIONAL = "fractional"


def judge_quality_scores(
    record: QaRecord,
    candidate: StructuredCompletion,
    judge: Judge,
    protocol: Protocol | str,
) -> ScoreTriple:
    """Score a candidate against the record's references with a judge.

    FIVE_LEVEL sends one reference-comparison prompt and maps each 1..5
    level to (level - 1) / 4. FRACTIONAL sends the semantic-consistency
    prompt twice, once for reasoning and once for the answer.
    Malformed candidates score zero without contacting the judge.
    """
    protocol = Protocol(protocol)
    if not candidate.well_formed:
        return ScoreTriple(0.0, 0.0, 0.0)
    if protocol is Protocol.FIVE_LEVEL:
        fields = {
            "question": record.question,
            "reference_reasoning": record.reference_reasoning,
            "candidate_reasoning": candidate.reasoning,
            "reference_answer": record.reference_answer,
            "candidate_answer": candidate.answer,
        }
        lr, la = judge.ask(load_prompt("quality_five_level"), fields, parse_five_level).value
        return ScoreTriple.of(five_level_to_unit(lr), five_level_to_unit(la))
    prompt = load_prompt("semantic_fractional")
    r = judge.ask(prompt, {"reference": record.reference_reasoning, "candidate": candidate.reasoning}, parse_fractional)
    a = judge.ask(prompt, {"reference": record.reference_answer, "candidate": candidate.answer}, parse_fractional)
    return ScoreTriple.of(r.value[0], a.value[0])


# -- embeddings -------------------------------------------------------------


class EmbedderHandle:
    """Anything with ``name``, ``dimension`` and ``embed(text) -> vector``."""

    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


_TOKEN = re.compile(r"\w+", re.UNICODE)


class HashedBagEmbedder(EmbedderHandle):
    """Deterministic bag-of-tokens embedding via feature hashing.

    Each lowercased word token lands in a blake2b-chosen bucket with a
    hash-chosen sign. Texts with no tokens embed to the zero vector.
    """

    def __init__(self, dimension: int = 256):
        self.name = f"hashed-bag-{dimension}"
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dimension)
        for tok in _TOKEN.findall(text.lower()):
            h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "little")
            v[h % self.dimension] += 1.0 if (h >> 63) & 1 else -1.0
        return v


class TableEmbedder(EmbedderHandle):
    """Looks texts up in a fixed table; for hand-built test geometries."""

    def __init__(self, table: Mapping[str, Sequence[float]], name: str = "table"):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        dims = {len(v) for v in self.table.values()}
        if len(dims) != 1:
            raise ValueError("all table vectors must share a dimension")
        self.dimension = dims.pop()
        self.name = name

    def embed(self, text: str) -> np.ndarray:
        return self.table[text]


class CallableEmbedder(EmbedderHandle):
    """Wraps an external ``text -> vector`` function, e.g. a sentence-embedding model."""

    def __init__(self, fn: Callable[[str], Sequence[float]], dimension: int, name: str = "external"):
        self.fn = fn
        self.dimension = dimension
        self.name = name

    def embed(self, text):
        return np.asarray(self.fn(text), dtype=np.float64)


class EmbeddingError(ValueError):
    pass


def embedding_similarity(a: str, b: str, embedder: EmbedderHandle) -> float:
    va = np.asarray(embedder.embed(a), dtype=np.float64)
    vb = np.asarray(embedder.embed(b), dtype=np.float64)
    for text, v in ((a, va), (b, vb)):
        if v.shape != (embedder.dimension,):
            raise EmbeddingError(f"{embedder.name} returned shape {v.shape}, expected ({embedder.dimension},)")
        if not np.any(v):
            raise EmbeddingError(f"zero embedding for text {text[:40]!r}")
    if a == b:
        return 1.0
    cos = float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
    return min(1.0, max(-1.0, cos))


def embedding_scores(record: QaRecord, candidate: StructuredCompletion, embedder: EmbedderHandle) -> ScoreTriple:
    """Cosine similarities of reasoning and answer, clamped to [0, 1]."""
    if not candidate.well_formed:
        return ScoreTriple(0.0, 0.0, 0.0)
    r = max(0.0, embedding_similarity(candidate.reasoning, record.reference_reasoning, embedder))
    a = max(0.0, embedding_similarity(candidate.answer, record.reference_answer, embedder))
    return ScoreTriple.of(r, a)


# -- benchmark runs ---------------------------------------------------------


@dataclass
class MetricConfig:
    """One report column group.

    ``kind`` is ``"five_level"`` or ``"fractional"`` (needs ``judge``) or
    ``"embedding"`` (needs ``embedder``).
    """

    name: str
    kind: str
    judge: Judge | None = None
    embedder: EmbedderHandle | None = None

    def __post_init__(self):
        if self.kind in ("five_level", "fractional"):
            if self.judge is None:
                raise ValueError(f"metric {self.name!r} needs a judge")
        elif self.kind == "embedding":
            if self.embedder is None:
                raise ValueError(f"metric {self.name!r} needs an embedder")
        else:
            raise ValueError(f"unknown metric kind {self.kind!r}")

    def score(self, record: QaRecord, candidate: StructuredCompletion) -> ScoreTriple:
        if self.kind == "embedding":
            return embedding_scores(record, candidate, self.embedder)
        return judge_quality_scores(record, candidate, self.judge, self.kind)


class MissingCandidates(KeyError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"no candidate for record id(s): {', '.join(self.ids)}")


@dataclass
class MetricReport:
    model_name: str
    metrics: dict  # metric name -> ScoreTriple (aggregate)
    per_record: dict  # record id -> metric name -> ScoreTriple | None
    record_count: int
    coverage: dict = field(default_factory=dict)  # metric name -> scored cells
    errors: dict = field(default_factory=dict)  # "id/metric" -> message

    def to_json(self) -> str:
        obj = {
            "model_name": self.model_name,
            "record_count": self.record_count,
            "aggregate": {m: t.as_dict() if t else None for m, t in self.metrics.items()},
            "coverage": self.coverage,
            "per_record": {
                rid: {m: t.as_dict() if t else None for m, t in cells.items()}
                for rid, cells in self.per_record.items()
            },
            "errors": self.errors,
        }
        return json.dumps(obj, indent=2, sort_keys=False) + "\n"

    def to_markdown(self) -> str:
        names = list(self.metrics)
        head = "| Model | " + " | ".join(f"{n} R | {n} A | {n} F1" for n in names) + " |"
        rule = "|---|" + "---|" * (3 * len(names))
        cells = []
        for n in names:
            t = self.metrics[n]
            cells.extend(["n/a"] * 3 if t is None else [f"{t.reasoning:.4f}", f"{t.answer:.4f}", f"{t.f1:.4f}"])
        return "\n".join([head, rule, f"| {self.model_name} | " + " | ".join(cells) + " |"]) + "\n"


def aggregate(triples: Sequence[ScoreTriple]) -> ScoreTriple | None:
    """Means of R and A over present cells, F1 recomputed from the means."""
    if not triples:
        return None
    r = math.fsum(t.reasoning for t in triples) / len(triples)
    a = math.fsum(t.answer for t in triples) / len(triples)
    return ScoreTriple.of(min(1.0, r), min(1.0, a))


def run_benchmark(
    records: Sequence[QaRecord],
    candidates: Mapping[str, StructuredCompletion],
    metrics: Sequence[MetricConfig],
    model_name: str = "candidate",
    max_workers: int = 1,
) -> MetricReport:
    """Score every (record, metric) cell and aggregate per metric.

    A failing cell is recorded in ``errors`` and left out of the means;
    ``coverage`` counts the cells that were scored.
    """
    missing = [r.id for r in records if r.id not in candidates]
    if missing:
        raise MissingCandidates(missing)

    def cell(job):
        record, metric = job
        try:
            return metric.score(record, candidates[record.id]), None
        except (JudgeError, ValueError, RuntimeError) as err:
            return None, f"{type(err).__name__}: {err}"

    jobs = [(r, m) for r in records for m in metrics]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(cell, jobs))
    else:
        results = [cell(j) for j in jobs]

    per_record = {r.id: {} for r in records}
    errors = {}
    for (record, metric), (triple, err) in zip(jobs, results):
        per_record[record.id][metric.name] = triple
        if err is not None:
            errors[f"{record.id}/{metric.name}"] = err
    agg, coverage = {}, {}
    for metric in metrics:
        present = [per_record[r.id][metric.name] for r in records if per_record[r.id][metric.name] is not None]
        agg[metric.name] = aggregate(present)
        coverage[metric.name] = len(present)
    return MetricReport(model_name, agg, per_record, len(records), coverage, errors)
