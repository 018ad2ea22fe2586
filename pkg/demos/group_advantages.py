"""
Group-relative advantages, clipping and the KL penalty
======================================================

Rewards for one prompt's group are standardised against each other, the
result is copied to every token, and a clipped ratio objective plus a
KL pull toward the reference policy gives the loss.
"""

import math

import numpy as np

from grpo_vqa.grpo import (
    GroupBatch,
    GrpoConfig,
    ResponseSample,
    grpo_loss,
    kl_exact,
    kl_k3,
    normalize_group_rewards,
)

# a group of four sampled answers scored 1, 0, 0.5, 0.5
print(normalize_group_rewards([1.0, 0.0, 0.5, 0.5]))
# equal rewards carry no signal
print(normalize_group_rewards([0.3, 0.3, 0.3]))

# one token whose probability rose 50% since sampling: the gain is capped at 1 + eps
s = ResponseSample([0], [math.log(0.6)], [math.log(0.4)], [math.log(0.4)])
batch = GroupBatch("q", [s, s], [1.0, 1.0], advantages=[1.0, 1.0])
loss, metrics = grpo_loss(batch, GrpoConfig(kl_beta=0.0))
print(f"clipped loss {loss:.3f}, clip fraction {metrics['clip_fraction']}")

# exact KL on full distributions versus the per-token k3 estimate
p = np.array([0.5, 0.5])
q = np.array([0.25, 0.75])
print(f"KL(p||q) = {kl_exact(p, q):.4f}")
print(f"E_p[k3]  = {np.sum(p * kl_k3(np.log(p), np.log(q))):.4f}")

# with the KL term switched on, drift from the reference costs beta * KL
loss_kl, m = grpo_loss(batch, GrpoConfig(kl_beta=0.04))
print(f"loss with KL {loss_kl:.4f} (k3 KL {m['kl']:.4f})")
