"""Iterative agreement-based refinement of reasoning/answer pairs."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .core import QaRecord, load_dataset, record_to_dict
from .evaluation import EmbedderHandle, embedding_similarity, f1_fuse

log = logging.getLogger(__name__)

Pair = tuple  # (reasoning, answer)

REVIEW_FIELDS = (
    "last_score",
    "iterations_pending",
    "tuned_reasoning",
    "tuned_answer",
    "base_reasoning",
    "base_answer",
)


@dataclass(frozen=True)
class GeneratorHandle:
    """A model producing ``(reasoning, answer)`` for a record.

    ``generate`` receives the record and the 0-based iteration index;
    whatever retraining happens between iterations lives behind it.
    """

    name: str
    generate: Callable[[QaRecord, int], Pair]


def pair_score(out_a: Pair, out_b: Pair, embedder: EmbedderHandle) -> float:
    for text in (*out_a, *out_b):
        if not text or not text.strip():
            raise ValueError("pair_score needs non-empty reasoning and answer texts")
    s_r = min(1.0, max(0.0, embedding_similarity(out_a[0], out_b[0], embedder)))
    s_a = min(1.0, max(0.0, embedding_similarity(out_a[1], out_b[1], embedder)))
    return f1_fuse(s_r, s_a)


def partition(scores: Mapping[str, float], threshold: float) -> tuple[set, set]:
    """Split ids into (score > threshold, the rest)."""
    accepted = {k for k, s in scores.items() if s > threshold}
    return accepted, set(scores) - accepted


@dataclass
class RefinementState:
    threshold: float = 0.8
    iteration: int = 0
    accepted: dict = field(default_factory=dict)  # id -> (reasoning, answer)
    pending: set = field(default_factory=set)
    history: list = field(default_factory=list)  # (accepted_count, pending_count) per iteration
    last_scores: dict = field(default_factory=dict)
    last_outputs: dict = field(default_factory=dict)  # id -> (tuned pair, base pair)
    errors: dict = field(default_factory=dict)
    stop_reason: str = ""

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "iterations": self.iteration,
            "stop_reason": self.stop_reason,
            "history": [{"accepted": a, "pending": p} for a, p in self.history],
            "accepted": {k: {"reasoning": v[0], "answer": v[1]} for k, v in sorted(self.accepted.items())},
            "pending": sorted(self.pending),
            "errors": dict(sorted(self.errors.items())),
        }


def refine_loop(
    records: Sequence[QaRecord],
    gen_tuned: GeneratorHandle,
    gen_base: GeneratorHandle,
    embedder: EmbedderHandle,
    threshold: float = 0.8,
    max_iterations: int = 10,
    stop_fraction: float = 0.05,
    export_path: str | os.PathLike | None = None,
    max_workers: int = 1,
) -> RefinementState:
    """Score pending records by tuned/base agreement until few remain.

    Stops when pending/total <= ``stop_fraction``, after
    ``max_iterations``, or when an iteration accepts nothing. Accepted
    records keep the tuned generator's output and are never rescored.
    Records whose generation or scoring fails stay pending with the error
    noted. Remaining pending records are written to ``export_path``.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    if not 0.0 < stop_fraction <= 1.0:
        raise ValueError("stop_fraction must lie in (0, 1]")
    by_id = {r.id: r for r in records}
    if len(by_id) != len(records):
        raise ValueError("record ids must be unique")
    state = RefinementState(threshold=threshold, pending=set(by_id))
    total = len(records)

    def score(rid):
        record = by_id[rid]
        try:
            tuned = tuple(gen_tuned.generate(record, state.iteration))
            base = tuple(gen_base.generate(record, state.iteration))
            return rid, pair_score(tuned, base, embedder), (tuned, base), None
        except Exception as err:  # generator backends are arbitrary user code
            return rid, None, None, f"{type(err).__name__}: {err}"

    while state.pending and state.iteration < max_iterations:
        order = sorted(state.pending)
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(score, order))
        else:
            results = [score(rid) for rid in order]

        scores = {}
        for rid, s, outputs, err in results:
            if err is not None:
                state.errors[rid] = err
                state.last_scores.pop(rid, None)
                continue
            state.errors.pop(rid, None)
            scores[rid] = s
            state.last_scores[rid] = s
            state.last_outputs[rid] = outputs
        newly, _ = partition(scores, threshold)
        for rid in newly:
            state.accepted[rid] = state.last_outputs[rid][0]
        state.pending -= newly
        state.iteration += 1
        state.history.append((len(state.accepted), len(state.pending)))
        log.info("iteration %d: accepted %d, pending %d", state.iteration, len(newly), len(state.pending))
        if len(state.pending) <= stop_fraction * total:
            state.stop_reason = "converged"
        elif not newly:
            state.stop_reason = "no_progress"
        if state.stop_reason:
            break
    if not state.stop_reason:
        state.stop_reason = "converged" if not state.pending else "max_iterations"

    if export_path is not None:
        export_review(state, by_id, export_path)
    return state


def export_review(state: RefinementState, by_id: Mapping[str, QaRecord], path: str | os.PathLike) -> None:
    """Write pending records in dataset format plus review fields."""
    with open(path, "w", encoding="utf-8") as fh:
        for rid in sorted(state.pending):
            row = record_to_dict(by_id[rid])
            tuned, base = state.last_outputs.get(rid, ((None, None), (None, None)))
            row.update(
                last_score=state.last_scores.get(rid),
                iterations_pending=state.iteration,
                tuned_reasoning=tuned[0],
                tuned_answer=tuned[1],
                base_reasoning=base[0],
                base_answer=base[1],
            )
            if rid in state.errors:
                row["error"] = state.errors[rid]
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_review_export(path: str | os.PathLike) -> list[QaRecord]:
    return load_dataset(path, allow_extra=True)


def scripted_generator(name: str, outputs: Mapping[str, Sequence[Pair]]) -> GeneratorHandle:
    """Generator replaying per-record outputs by iteration.

    ``outputs[id][k]`` is used at iteration k; the last entry repeats.
    """

    def generate(record: QaRecord, iteration: int) -> Pair:
        seq = outputs[record.id]
        return tuple(seq[min(iteration, len(seq) - 1)])

    return GeneratorHandle(name, generate)


def reference_generator(name: str = "reference") -> GeneratorHandle:
    """Echo the record's own reference reasoning and answer."""
    return GeneratorHandle(name, lambda r, _it: (r.reference_reasoning, r.reference_answer))
