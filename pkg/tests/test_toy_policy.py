import math

import numpy as np
import pytest

from grpo_vqa.grpo import GroupBatch, GrpoConfig, KLMode, ResponseSample, grpo_loss
from grpo_vqa.toy_policy import (
    TinyPolicy,
    load_policy,
    loss_gradient,
    policy_loss,
    refresh_batch,
    sample_sequence,
    save_policy,
    sequence_logprob,
    softmax,
    token_distributions,
)

from oracles import finite_difference_gradient, gradient_cases, random_instance, relative_error

VOCAB4 = ("<bos>", "<eos>", "a", "b")


def test_uniform_logprob():
    pol = TinyPolicy.uniform(VOCAB4)
    np.testing.assert_allclose(sequence_logprob(pol, (), [2, 3, 1]), [math.log(0.25)] * 3, atol=1e-15)


def test_hand_bigram():
    # row for "a": p(a)=e^1/(e^1+e^0+...) with two ones and two zeros in the row
    z = np.zeros((4, 4))
    z[0, 2] = math.log(3.0)  # after <bos>: weights 1,1,3,1 -> p(a) = 3/6
    z[2, 3] = math.log(2.0)  # after a: weights 1,1,1,2 -> p(b) = 2/5
    pol = TinyPolicy(VOCAB4, z)
    lp = sequence_logprob(pol, (), [2, 3])
    np.testing.assert_allclose(lp, [math.log(0.5), math.log(0.4)], atol=1e-14)


def test_order_zero_ignores_context():
    pol = TinyPolicy(VOCAB4, np.array([[0.0, 1.0, 2.0, 3.0]]), context_order=0)
    lp = sequence_logprob(pol, (3,), [2, 2, 3])
    p = softmax(np.array([0.0, 1.0, 2.0, 3.0]))
    np.testing.assert_allclose(lp, np.log(p[[2, 2, 3]]), atol=1e-15)


def test_out_of_vocab_rejected():
    pol = TinyPolicy.uniform(VOCAB4)
    with pytest.raises(ValueError):
        sequence_logprob(pol, (), [5])
    with pytest.raises(ValueError):
        sequence_logprob(pol, (), [])


def test_policy_invariants():
    with pytest.raises(ValueError):
        TinyPolicy(VOCAB4, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        TinyPolicy(VOCAB4, np.full((4, 4), np.inf))
    with pytest.raises(ValueError):
        TinyPolicy(tuple(f"w{i}" for i in range(65)), np.zeros((1, 65)), context_order=0)
    pol = TinyPolicy.uniform(VOCAB4)
    with pytest.raises(ValueError):
        pol.logits[0, 0] = 1.0


def test_all_eos_policy():
    z = np.full((4, 4), -50.0)
    z[:, 1] = 50.0
    seq = sample_sequence(TinyPolicy(VOCAB4, z), (), 10, 0)
    assert seq.tokens.tolist() == [1]


def test_sampling_deterministic_and_consistent():
    rng = np.random.default_rng(0)
    pol = TinyPolicy(VOCAB4, rng.normal(size=(4, 4)))
    a = sample_sequence(pol, (2,), 8, (5, 1))
    b = sample_sequence(pol, (2,), 8, (5, 1))
    assert a.tokens.tolist() == b.tokens.tolist()
    np.testing.assert_array_equal(a.logps, sequence_logprob(pol, (2,), a.tokens))
    np.testing.assert_allclose(a.dists, token_distributions(pol, (2,), a.tokens))
    assert len(a.tokens) <= 8


def test_sampling_frequencies_within_three_sigma():
    p_logits = np.array([[0.3, -0.5, 1.0, 0.0]])
    pol = TinyPolicy(VOCAB4, p_logits, context_order=0)
    p = softmax(p_logits[0])
    n = 10_000
    counts = np.zeros(4)
    for i in range(n):
        counts[sample_sequence(pol, (), 1, i).tokens[0]] += 1
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma), (counts, n * p)


def test_shift_invariance():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(4, 4))
    shifted = z + rng.normal(size=(4, 1)) * 10
    a, b = TinyPolicy(VOCAB4, z), TinyPolicy(VOCAB4, shifted)
    np.testing.assert_allclose(a.distributions(), b.distributions(), atol=1e-12)
    for seed in range(20):
        sa, sb = sample_sequence(a, (), 6, seed), sample_sequence(b, (), 6, seed)
        assert sa.tokens.tolist() == sb.tokens.tolist()
        np.testing.assert_allclose(sa.logps, sb.logps, atol=1e-12)


def test_softmax_rows_normalised_after_updates():
    _, batch, cfg = random_instance(11)
    pol = random_instance(11)[0]
    for _ in range(5):
        pol = pol.with_logits(pol.logits - 5.0 * loss_gradient(pol, batch, cfg))
        assert np.all(np.abs(pol.distributions().sum(axis=1) - 1) <= 1e-12)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    pol = TinyPolicy(VOCAB4, rng.normal(size=(4, 4)), bos_id=0, eos_id=1)
    save_policy(pol, tmp_path / "p.json")
    back = load_policy(tmp_path / "p.json")
    assert back.vocab == pol.vocab and back.context_order == 1
    np.testing.assert_array_equal(back.logits, pol.logits)


# -- gradient ------------------------------------------------------------


@pytest.mark.parametrize("seed, mode, beta", gradient_cases(4))
def test_gradient_matches_finite_differences(seed, mode, beta):
    policy, batch, cfg = random_instance(seed, mode, beta)
    g = loss_gradient(policy, batch, cfg)
    fd = finite_difference_gradient(policy, batch, cfg)
    assert relative_error(g, fd) <= 1e-5


def test_policy_loss_matches_grpo_loss_at_sampling_point():
    policy, batch, cfg = random_instance(3, KLMode.EXACT, 0.04)
    assert policy_loss(policy, batch, cfg) == pytest.approx(grpo_loss(batch, cfg)[0], abs=1e-14)


def test_zero_advantages_zero_gradient():
    policy, batch, _ = random_instance(5)
    cfg = GrpoConfig(kl_beta=0.0)
    flat = GroupBatch("p", batch.responses, np.zeros(len(batch.responses))).normalized()
    assert np.all(loss_gradient(policy, flat, cfg) == 0.0)


@pytest.mark.parametrize("mode", list(KLMode))
def test_kl_gradient_vanishes_at_reference(mode):
    policy, batch, _ = random_instance(6)
    same = refresh_batch(policy, batch, ref_policy=policy)
    zero_adv = GroupBatch("p", same.responses, np.zeros(len(same.responses)), advantages=np.zeros(len(same.responses)))
    cfg = GrpoConfig(kl_beta=10.0, kl_mode=mode)
    np.testing.assert_allclose(loss_gradient(policy, zero_adv, cfg), 0.0, atol=1e-14)


def test_clip_dead_zone():
    # one token whose ratio sits past 1 + eps with positive advantage
    z = np.zeros((4, 4))
    z[0, 2] = 1.0
    pol = TinyPolicy(VOCAB4, z)
    lp = sequence_logprob(pol, (), [2])
    s = ResponseSample([2], lp, lp - math.log(1.5), lp, prompt=())
    batch = GroupBatch("p", [s, s], [1, 1], advantages=[1.0, 1.0])
    cfg = GrpoConfig(kl_beta=0.0)
    assert np.all(loss_gradient(pol, batch, cfg) == 0.0)
    np.testing.assert_allclose(finite_difference_gradient(pol, batch, cfg), 0.0, atol=1e-9)


def test_gradient_vocab_mismatch():
    policy, batch, cfg = random_instance(8)
    small = TinyPolicy.uniform(("x", "y"), context_order=0)
    with pytest.raises(ValueError):
        loss_gradient(small, batch, cfg)
