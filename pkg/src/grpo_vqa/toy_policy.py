"""A tiny autoregressive categorical policy with exact gradients.

The policy is a logit table: one row per context (a single row for
order 0, one row per previous token for order 1). Everything the GRPO
loss needs, namely sampling, per-token log-probabilities, full
next-token distributions and the analytic loss gradient, is computed
directly from that table.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .grpo import GroupBatch, GrpoConfig, KLMode, ResponseSample, clip_terms, grpo_loss

MAX_VOCAB = 64


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class TinyPolicy:
    vocab: tuple
    logits: np.ndarray
    context_order: int = 1
    bos_id: int = 0
    eos_id: int = 1

    def __post_init__(self):
        vocab = tuple(self.vocab)
        object.__setattr__(self, "vocab", vocab)
        V = len(vocab)
        if not 2 <= V <= MAX_VOCAB:
            raise ValueError(f"vocab size must be in [2, {MAX_VOCAB}], got {V}")
        if len(set(vocab)) != V:
            raise ValueError("vocab entries must be unique")
        if self.context_order not in (0, 1):
            raise ValueError("context_order must be 0 or 1")
        logits = np.array(self.logits, dtype=np.float64)
        rows = 1 if self.context_order == 0 else V
        if logits.shape != (rows, V):
            raise ValueError(f"logits must have shape {(rows, V)}, got {logits.shape}")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        for tid in (self.bos_id, self.eos_id):
            if not 0 <= tid < V:
                raise ValueError("special token id outside vocab")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, vocab: Sequence[str], context_order: int = 1, **kw) -> "TinyPolicy":
        rows = 1 if context_order == 0 else len(vocab)
        return cls(tuple(vocab), np.zeros((rows, len(vocab))), context_order, **kw)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def with_logits(self, logits: np.ndarray) -> "TinyPolicy":
        return replace(self, logits=logits)

    def row(self, prev_token: int) -> int:
        return 0 if self.context_order == 0 else int(prev_token)

    def contexts(self, prompt: Sequence[int], response: Sequence[int]) -> np.ndarray:
        """Logit-table row used to predict each response token."""
        first = prompt[-1] if len(prompt) else self.bos_id
        prev = np.concatenate([[first], np.asarray(response[:-1], dtype=np.int64)]).astype(np.int64)
        return np.zeros_like(prev) if self.context_order == 0 else prev

    def distributions(self) -> np.ndarray:
        return softmax(self.logits)

    def encode(self, words: Sequence[str]) -> list[int]:
        index = {w: i for i, w in enumerate(self.vocab)}
        return [index[w] for w in words]

    def decode(self, tokens: Sequence[int], skip_special: bool = True) -> str:
        special = {self.bos_id, self.eos_id} if skip_special else set()
        return " ".join(self.vocab[t] for t in tokens if t not in special)


@dataclass(frozen=True)
class SampledSequence:
    tokens: np.ndarray
    logps: np.ndarray
    dists: np.ndarray  # (T, vocab) next-token distributions at each step


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def sample_sequence(policy: TinyPolicy, prompt: Sequence[int], max_len: int, rng_seed) -> SampledSequence:
    """Inverse-CDF sampling until EOS or ``max_len`` tokens.

    ``rng_seed`` is an int or a tuple of ints fed to a Philox
    (counter-based) generator, so equal seeds give equal sequences.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    rng = _rng(rng_seed)
    dists = policy.distributions()
    lsm = log_softmax(policy.logits)
    prev = prompt[-1] if len(prompt) else policy.bos_id
    tokens, logps, steps = [], [], []
    for _ in range(max_len):
        p = dists[policy.row(prev)]
        cdf = np.cumsum(p)
        tok = int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(p) - 1))
        tokens.append(tok)
        logps.append(lsm[policy.row(prev), tok])
        steps.append(p)
        prev = tok
        if tok == policy.eos_id:
            break
    return SampledSequence(np.asarray(tokens, dtype=np.int64), np.asarray(logps), np.asarray(steps))


def sequence_logprob(policy: TinyPolicy, prompt: Sequence[int], response: Sequence[int]) -> np.ndarray:
    response = np.asarray(response, dtype=np.int64)
    if response.ndim != 1 or len(response) == 0:
        raise ValueError("response must be a non-empty token list")
    if np.any(response < 0) or np.any(response >= policy.vocab_size):
        raise ValueError("response contains a token outside the vocabulary")
    rows = policy.contexts(prompt, response)
    return log_softmax(policy.logits)[rows, response]


def token_distributions(policy: TinyPolicy, prompt: Sequence[int], response: Sequence[int]) -> np.ndarray:
    return policy.distributions()[policy.contexts(prompt, response)]


def refresh_sample(policy: TinyPolicy, sample: ResponseSample, ref_policy: TinyPolicy | None = None) -> ResponseSample:
    """Recompute the current-policy columns of ``sample`` under ``policy``."""
    out = replace(
        sample,
        logp_new=sequence_logprob(policy, sample.prompt, sample.token_ids),
        dist_new=token_distributions(policy, sample.prompt, sample.token_ids),
    )
    if ref_policy is not None:
        out = replace(
            out,
            logp_ref=sequence_logprob(ref_policy, sample.prompt, sample.token_ids),
            dist_ref=token_distributions(ref_policy, sample.prompt, sample.token_ids),
        )
    return out


def refresh_batch(policy: TinyPolicy, batch: GroupBatch, ref_policy: TinyPolicy | None = None) -> GroupBatch:
    return replace(batch, responses=[refresh_sample(policy, s, ref_policy) for s in batch.responses])


def policy_loss(policy: TinyPolicy, batch: GroupBatch, config: GrpoConfig) -> float:
    """grpo_loss evaluated with the current-policy terms taken from ``policy``."""
    return grpo_loss(refresh_batch(policy, batch), config)[0]


def loss_gradient(policy: TinyPolicy, batch: GroupBatch, config: GrpoConfig) -> np.ndarray:
    """d grpo_loss / d logits, same shape as ``policy.logits``.

    At the clip kink the unclipped branch is used; where the clipped
    branch is strictly active the token contributes no surrogate
    gradient.
    """
    if batch.advantages is None:
        raise ValueError("batch has no advantages")
    V = policy.vocab_size
    lsm = log_softmax(policy.logits)
    probs = np.exp(lsm)
    grad = np.zeros_like(policy.logits)
    n_tokens = sum(len(s) for s in batch.responses)
    beta = config.kl_beta

    for sample, adv in zip(batch.responses, batch.advantages):
        toks = sample.token_ids
        if np.any(toks < 0) or np.any(toks >= V):
            raise ValueError("batch token outside policy vocabulary")
        if sample.dist_ref is not None and np.shape(sample.dist_ref)[-1] != V:
            raise ValueError("reference distributions do not match policy vocabulary")
        rows = policy.contexts(sample.prompt, toks)
        logp_new = lsm[rows, toks]
        adv_t = np.full(len(toks), float(adv))
        _, clip_active, ratio = clip_terms(logp_new, sample.logp_old, adv_t, config.clip_epsilon)

        # coefficient on d logp_new for each token
        coef = np.where(clip_active, 0.0, -ratio * adv_t)
        if beta > 0 and config.kl_mode is KLMode.K3:
            coef = coef + beta * -np.expm1(sample.logp_ref - logp_new)

        # d logp(o_t) / d z_row = onehot(o_t) - p_row
        dlog = -probs[rows] * coef[:, None]
        dlog[np.arange(len(toks)), toks] += coef
        if beta > 0 and config.kl_mode is KLMode.EXACT:
            if sample.dist_ref is None:
                raise ValueError("exact KL gradient needs reference distributions")
            p = probs[rows]
            q = np.asarray(sample.dist_ref, dtype=np.float64)
            with np.errstate(divide="ignore", invalid="ignore"):
                log_ratio = np.where(p > 0, lsm[rows] - np.log(q), 0.0)
            kl = np.sum(p * log_ratio, axis=1, keepdims=True)
            dlog += beta * p * (log_ratio - kl)
        np.add.at(grad, rows, dlog)

    return grad / n_tokens


def save_policy(policy: TinyPolicy, path: str | os.PathLike) -> None:
    obj = {
        "vocab": list(policy.vocab),
        "vocab_size": policy.vocab_size,
        "context_order": policy.context_order,
        "bos_id": policy.bos_id,
        "eos_id": policy.eos_id,
        "shape": list(policy.logits.shape),
        "logits": policy.logits.ravel().tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def load_policy(path: str | os.PathLike) -> TinyPolicy:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    logits = np.asarray(obj["logits"], dtype=np.float64).reshape(obj["shape"])
    return TinyPolicy(tuple(obj["vocab"]), logits, obj["context_order"], obj["bos_id"], obj["eos_id"])
