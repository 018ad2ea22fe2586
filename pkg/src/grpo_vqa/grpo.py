"""Group-relative advantages, clipped surrogate and KL-regularised loss."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np


class KLMode(str, enum.Enum):
    EXACT = "exact"
    K3 = "k3"


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.2
    kl_beta: float = 0.04
    std_epsilon: float = 1e-8
    kl_mode: KLMode = KLMode.K3
    learning_rate: float = 1.0
    steps: int = 200
    prompts_per_step: int = 16
    max_len: int = 12

    def __post_init__(self):
        object.__setattr__(self, "kl_mode", KLMode(self.kl_mode))
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_beta < 0 or self.std_epsilon < 0:
            raise ValueError("kl_beta and std_epsilon must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.steps < 0 or self.prompts_per_step < 1 or self.max_len < 1:
            raise ValueError("steps >= 0, prompts_per_step >= 1 and max_len >= 1 required")

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "GrpoConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grpo config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class ResponseSample:
    """One sampled response with its per-token log-probabilities.

    ``dist_new`` / ``dist_ref`` hold the full next-token distributions,
    shape (T, vocab); they are only needed for exact KL.
    """

    token_ids: np.ndarray
    logp_new: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray
    prompt: tuple = ()
    dist_new: np.ndarray | None = None
    dist_ref: np.ndarray | None = None

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        for name in ("logp_new", "logp_old", "logp_ref"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = len(self.token_ids)
        if n < 1:
            raise ValueError("response must contain at least one token")
        if not (len(self.logp_new) == len(self.logp_old) == len(self.logp_ref) == n):
            raise ValueError("token_ids and log-prob lists must have equal length")

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class GroupBatch:
    prompt_id: str
    responses: list
    rewards: np.ndarray
    advantages: np.ndarray | None = None
    components: list = field(default_factory=list)

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if len(self.responses) < 2:
            raise ValueError("a group needs at least two responses")
        if len(self.rewards) != len(self.responses):
            raise ValueError("rewards and responses must have equal length")
        if self.advantages is not None:
            self.advantages = np.asarray(self.advantages, dtype=np.float64)
            if len(self.advantages) != len(self.responses):
                raise ValueError("advantages and responses must have equal length")

    def normalized(self, std_epsilon: float = 1e-8) -> "GroupBatch":
        return replace(self, advantages=normalize_group_rewards(self.rewards, std_epsilon))


def normalize_group_rewards(rewards: Sequence[float], std_epsilon: float = 1e-8) -> np.ndarray:
    """(r - mean) / (population std + std_epsilon); constant groups map to zeros."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or len(r) < 2:
        raise ValueError("group must contain at least two rewards")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    centered = r - r.mean()
    return centered / (np.sqrt(np.mean(centered**2)) + std_epsilon)


def broadcast_advantage(advantage: float, token_count: int) -> np.ndarray:
    if token_count < 1:
        raise ValueError("token_count must be >= 1")
    return np.full(token_count, float(advantage))


def _flatten(samples: Sequence[ResponseSample], advantages: Sequence[float]):
    if len(samples) != len(advantages):
        raise ValueError(f"{len(samples)} samples but {len(advantages)} advantages")
    adv = np.concatenate([broadcast_advantage(a, len(s)) for s, a in zip(samples, advantages)])
    new = np.concatenate([s.logp_new for s in samples])
    old = np.concatenate([s.logp_old for s in samples])
    return adv, new, old


def clip_terms(logp_new: np.ndarray, logp_old: np.ndarray, adv: np.ndarray, eps: float):
    """Per-token surrogate values and the mask of tokens where the clipped branch wins.

    Ties go to the unclipped branch.
    """
    ratio = np.exp(logp_new - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    clip_active = clipped < unclipped
    return np.where(clip_active, clipped, unclipped), clip_active, ratio


def clipped_surrogate_loss(samples: Sequence[ResponseSample], advantages: Sequence[float], eps: float) -> float:
    """Negative token-mean of min(r*A, clip(r)*A) over the whole group."""
    adv, new, old = _flatten(samples, advantages)
    terms, _, _ = clip_terms(new, old, adv, eps)
    return float(-terms.mean())


def kl_exact(dist_new, dist_ref) -> float:
    p = np.asarray(dist_new, dtype=np.float64)
    q = np.asarray(dist_ref, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same shape")
    for name, d in (("dist_new", p), ("dist_ref", q)):
        if abs(d.sum() - 1.0) > 1e-9 or np.any(d < 0):
            raise ValueError(f"{name} is not a probability vector")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("dist_ref is zero where dist_new has mass")
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


def kl_k3(logp_new, logp_ref):
    """exp(t) - t - 1 with t = logp_ref - logp_new; elementwise for arrays."""
    t = np.asarray(logp_ref, dtype=np.float64) - np.asarray(logp_new, dtype=np.float64)
    out = np.expm1(t) - t
    return float(out) if out.ndim == 0 else out


def token_kl(samples: Sequence[ResponseSample], mode: KLMode, ref_dists=None) -> np.ndarray:
    """Per-token KL(pi_theta || pi_ref) values, flattened across the group."""
    mode = KLMode(mode)
    if mode is KLMode.K3:
        return np.concatenate([kl_k3(s.logp_new, s.logp_ref) for s in samples])
    out = []
    for i, s in enumerate(samples):
        ref = s.dist_ref if ref_dists is None else np.asarray(ref_dists[i])
        if s.dist_new is None or ref is None:
            raise ValueError("exact KL needs full new and reference distributions per token")
        if len(ref) != len(s) or len(s.dist_new) != len(s):
            raise ValueError("distribution rows must match response length")
        out.extend(kl_exact(p, q) for p, q in zip(s.dist_new, ref))
    return np.asarray(out)


def grpo_loss(batch: GroupBatch, config: GrpoConfig, ref_dists=None) -> tuple[float, dict]:
    """Clipped surrogate plus beta times the token-mean KL to the reference."""
    if batch.advantages is None:
        raise ValueError("batch has no advantages; call normalized() first")
    adv, new, old = _flatten(batch.responses, batch.advantages)
    terms, clip_active, ratio = clip_terms(new, old, adv, config.clip_epsilon)
    surrogate = float(-terms.mean())
    have_dists = ref_dists is not None or all(
        s.dist_new is not None and s.dist_ref is not None for s in batch.responses
    )
    if config.kl_mode is KLMode.K3 or config.kl_beta > 0 or have_dists:
        kl = float(token_kl(batch.responses, config.kl_mode, ref_dists).mean())
    else:
        # beta = 0 and no distributions to measure: the term is absent
        kl = 0.0
    loss = surrogate if config.kl_beta == 0 else surrogate + config.kl_beta * kl
    metrics = {
        "loss": loss,
        "surrogate": surrogate,
        "kl": kl,
        "clip_fraction": float(clip_active.mean()),
        "mean_reward": float(batch.rewards.mean()),
        "mean_advantage": float(np.mean(batch.advantages)),
        "mean_ratio": float(ratio.mean()),
    }
    return loss, metrics
