"""GRPO updates for the toy policy and the synthetic tagged-output task."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .core import QaRecord, QuestionType, TagConfig, parse_completion
from .grpo import GroupBatch, GrpoConfig, KLMode, ResponseSample, grpo_loss
from .judge import Judge, MockJudge
from .rewards import RewardBreakdown, RewardWeights, total_reward
from .toy_policy import (
    TinyPolicy,
    loss_gradient,
    sample_sequence,
    sequence_logprob,
    token_distributions,
)

METRIC_KEYS = (
    "step",
    "loss",
    "mean_total_reward",
    "mean_format_reward",
    "mean_reasoning_reward",
    "mean_answer_reward",
    "clip_fraction",
    "kl",
)


class RewardError(RuntimeError):
    """A reward function failed; the step was abandoned without an update."""


@dataclass(frozen=True)
class Prompt:
    id: str
    tokens: tuple
    record: QaRecord | None = None


RewardFn = Callable[[Prompt, np.ndarray], "float | RewardBreakdown"]


def _components(value) -> tuple[float, float, float, float]:
    if isinstance(value, RewardBreakdown):
        return value.total, value.format, value.reasoning, value.answer
    v = float(value)
    return v, float("nan"), float("nan"), float("nan")


def build_group(
    policy: TinyPolicy,
    prompt: Prompt,
    reward_fn: RewardFn,
    config: GrpoConfig,
    ref_policy: TinyPolicy,
    seed: Sequence[int],
) -> GroupBatch:
    """Sample ``group_size`` responses from ``policy`` (the old policy) and score them."""
    responses, rewards, comps = [], [], []
    need_dists = config.kl_mode is KLMode.EXACT
    for i in range(config.group_size):
        seq = sample_sequence(policy, prompt.tokens, config.max_len, (*seed, i))
        try:
            value = reward_fn(prompt, seq.tokens)
        except Exception as err:
            raise RewardError(f"reward_fn failed on prompt {prompt.id!r}: {err}") from err
        comp = _components(value)
        responses.append(
            ResponseSample(
                token_ids=seq.tokens,
                logp_new=seq.logps,
                logp_old=seq.logps.copy(),
                logp_ref=sequence_logprob(ref_policy, prompt.tokens, seq.tokens),
                prompt=tuple(prompt.tokens),
                dist_new=seq.dists if need_dists else None,
                dist_ref=token_distributions(ref_policy, prompt.tokens, seq.tokens) if need_dists else None,
            )
        )
        rewards.append(comp[0])
        comps.append(comp)
    batch = GroupBatch(prompt.id, responses, rewards, components=comps)
    return batch.normalized(config.std_epsilon)


def grpo_step(
    policy: TinyPolicy,
    prompts: Sequence[Prompt],
    reward_fn: RewardFn,
    config: GrpoConfig,
    ref_policy: TinyPolicy,
    seed: int = 0,
    step: int = 0,
) -> tuple[TinyPolicy, dict]:
    """One on-policy GRPO update: sample, score, normalise, descend.

    The incoming policy doubles as the old-policy snapshot. Loss and
    gradient are averaged over the prompts' groups. If ``reward_fn``
    raises, ``RewardError`` propagates and no update is made.
    """
    batches = [
        build_group(policy, p, reward_fn, config, ref_policy, (seed, step, j)) for j, p in enumerate(prompts)
    ]
    grad = np.zeros_like(policy.logits)
    losses, clip, kl = [], [], []
    for batch in batches:
        loss, m = grpo_loss(batch, config)
        losses.append(loss)
        clip.append(m["clip_fraction"])
        kl.append(m["kl"])
        grad += loss_gradient(policy, batch, config)
    grad /= len(batches)
    new_policy = policy.with_logits(policy.logits - config.learning_rate * grad)

    comps = np.array([c for b in batches for c in b.components], dtype=np.float64)
    lengths = [len(r) for b in batches for r in b.responses]
    metrics = {
        "step": step,
        "loss": float(np.mean(losses)) + 0.0,
        "mean_total_reward": float(comps[:, 0].mean()),
        "mean_format_reward": float(comps[:, 1].mean()),
        "mean_reasoning_reward": float(comps[:, 2].mean()),
        "mean_answer_reward": float(comps[:, 3].mean()),
        "clip_fraction": float(np.mean(clip)),
        "kl": float(np.mean(kl)),
        "mean_length": float(np.mean(lengths)),
        "grad_norm": float(np.linalg.norm(grad)),
    }
    return new_policy, metrics


def train(
    policy: TinyPolicy,
    prompts: Sequence[Prompt],
    reward_fn: RewardFn,
    config: GrpoConfig,
    seed: int = 0,
    metrics_path: str | os.PathLike | None = None,
    on_step: Callable[[dict], Any] | None = None,
    probe: Callable[[TinyPolicy], dict] | None = None,
) -> tuple[TinyPolicy, list[dict]]:
    """Run ``config.steps`` GRPO steps; the starting policy is the frozen reference.

    Each step draws ``prompts_per_step`` prompts round-robin from
    ``prompts``. Metrics are appended as JSON lines to ``metrics_path``.
    ``probe`` is called on the policy that generates each step's samples
    and its entries are merged into that step's metrics.
    """
    ref_policy = policy
    history = []
    fh = open(metrics_path, "w", encoding="utf-8") if metrics_path is not None else None
    try:
        for step in range(config.steps):
            start = step * config.prompts_per_step
            chosen = [prompts[(start + k) % len(prompts)] for k in range(config.prompts_per_step)]
            extra = probe(policy) if probe is not None else {}
            policy, metrics = grpo_step(policy, chosen, reward_fn, config, ref_policy, seed, step)
            metrics.update(extra)
            history.append(metrics)
            if fh is not None:
                row = {k: metrics[k] for k in METRIC_KEYS}
                row.update(extra)
                fh.write(json.dumps(row) + "\n")
                fh.flush()
            if on_step is not None:
                on_step(metrics)
    finally:
        if fh is not None:
            fh.close()
    return policy, history


# -- synthetic tagged-output task ------------------------------------------

REASONING_WORDS = ("left", "right", "above", "below", "near")
ANSWER_WORDS = ("chair", "table", "yes", "no")
FORMAT_VOCAB = ("<bos>", "<eos>", "<think>", "</think>", "<answer>", "</answer>") + REASONING_WORDS + ANSWER_WORDS


def _task_transitions() -> dict[str, tuple[str, ...]]:
    return {
        "<bos>": ("<think>",),
        "<think>": REASONING_WORDS,
        **{w: REASONING_WORDS + ("</think>",) for w in REASONING_WORDS},
        "</think>": ("<answer>",),
        "<answer>": ANSWER_WORDS,
        **{w: ("</answer>",) for w in ANSWER_WORDS},
        "</answer>": ("<eos>",),
    }


def format_task_policy(seed: int = 0, prior: float = 2.0, noise: float = 0.5) -> TinyPolicy:
    """Bigram policy with a partial preference for the tagged layout.

    ``prior`` is the logit bonus on transitions that keep the output on
    the well-formed path, standing in for an instruction-tuned start;
    ``noise`` is the scale of the seeded Gaussian jitter on all logits.
    """
    V = len(FORMAT_VOCAB)
    index = {w: i for i, w in enumerate(FORMAT_VOCAB)}
    rng = np.random.default_rng(seed)
    logits = noise * rng.standard_normal((V, V))
    for src, dsts in _task_transitions().items():
        for dst in dsts:
            logits[index[src], index[dst]] += prior
    return TinyPolicy(FORMAT_VOCAB, logits, context_order=1, bos_id=0, eos_id=1)


def format_task_records(n: int = 8, seed: int = 0) -> list[QaRecord]:
    rng = np.random.default_rng(seed)
    types = list(QuestionType)
    records = []
    for i in range(n):
        k = int(rng.integers(1, 4))
        reasoning = " ".join(rng.choice(REASONING_WORDS, size=k, replace=False))
        answer = str(rng.choice(ANSWER_WORDS))
        records.append(
            QaRecord(
                id=f"toy-{i:03d}",
                image_ref=f"synthetic://toy/{i}",
                question=f"Where is object {i}? Answer inside tags.",
                question_type=types[i % 3],
                reference_reasoning=reasoning,
                reference_answer=answer,
            )
        )
    return records


def format_task_prompts(records: Sequence[QaRecord]) -> list[Prompt]:
    return [Prompt(r.id, (0,), r) for r in records]


def make_reward_fn(
    policy_vocab: Sequence[str],
    weights: RewardWeights,
    judge: Judge | None = None,
    tags: TagConfig | None = None,
) -> RewardFn:
    """Reward for the synthetic task: decode tokens, parse the tags, score with ``total_reward``."""
    judge = judge or MockJudge()
    tags = tags or TagConfig()
    vocab = tuple(policy_vocab)

    def reward(prompt: Prompt, tokens) -> RewardBreakdown:
        text = " ".join(vocab[t] for t in tokens if vocab[t] not in ("<bos>", "<eos>"))
        return total_reward(parse_completion(text, tags), prompt.record, weights, judge)

    return reward


# tag automaton states for expected_format_reward
_START, _R_EMPTY, _R_BODY, _R_CLOSED, _A_EMPTY, _A_BODY, _DONE, _DEAD = range(8)


def _tag_automaton(policy: TinyPolicy, tags: TagConfig) -> np.ndarray:
    """transition[state, token] for the well-formedness rules of ``parse_completion``.

    Only valid when every tag is a whole vocabulary entry and no other
    entry contains a tag as a substring.
    """
    tag_ids = {}
    for t in tags.as_tuple():
        if t not in policy.vocab:
            raise ValueError(f"tag {t!r} is not a vocabulary entry")
        tag_ids[policy.vocab.index(t)] = tags.as_tuple().index(t)
    for i, w in enumerate(policy.vocab):
        if i not in tag_ids and any(t in w for t in tags.as_tuple()):
            raise ValueError(f"vocabulary entry {w!r} contains a tag")
    step = np.full((8, policy.vocab_size), _DEAD, dtype=np.int64)
    expects = {_START: 0, _R_BODY: 1, _R_CLOSED: 2, _A_BODY: 3}
    after = {0: _R_EMPTY, 1: _R_CLOSED, 2: _A_EMPTY, 3: _DONE}
    for state in range(7):
        for tok in range(policy.vocab_size):
            if tok in tag_ids:
                kind = tag_ids[tok]
                step[state, tok] = after[kind] if expects.get(state) == kind else _DEAD
            elif tok in (policy.bos_id, policy.eos_id) or not policy.vocab[tok].strip():
                step[state, tok] = state
            else:
                step[state, tok] = {_R_EMPTY: _R_BODY, _A_EMPTY: _A_BODY}.get(state, state)
    return step


def expected_format_reward(policy: TinyPolicy, prompt: Sequence[int], max_len: int, tags: TagConfig | None = None) -> float:
    """Exact probability that a sampled response is well-formed.

    Dynamic programme over (previous token, automaton state) for the
    sampling process of ``sample_sequence``.
    """
    tags = tags or TagConfig()
    trans = _tag_automaton(policy, tags)
    P = policy.distributions()
    V = policy.vocab_size
    first = prompt[-1] if len(prompt) else policy.bos_id
    alive = np.zeros((V, 8))
    alive[first, _START] = 1.0
    accepted = 0.0
    for _ in range(max_len):
        nxt = np.zeros_like(alive)
        for prev, state in zip(*np.nonzero(alive)):
            mass = alive[prev, state] * P[policy.row(prev)]
            for tok in range(V):
                s2 = trans[state, tok]
                if s2 == _DEAD:
                    continue
                if tok == policy.eos_id:
                    accepted += mass[tok] if s2 == _DONE else 0.0
                else:
                    nxt[tok, s2] += mass[tok]
        alive = nxt
    return float(accepted + alive[:, _DONE].sum())
