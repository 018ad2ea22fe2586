import pytest
from hypothesis import given
from hypothesis import strategies as st

from grpo_vqa.core import StructuredCompletion, parse_completion
from grpo_vqa.judge import MockJudge, NoScoreFound, ScriptedJudge
from grpo_vqa.rewards import (
    DEFAULT_WEIGHTS,
    TABLE4_CONFIGS,
    RewardWeights,
    answer_similarity_reward,
    combine,
    format_reward,
    reasoning_similarity_reward,
    total_reward,
)

from fixtures import malformed_completions


def test_weights_parse_colon_form():
    assert RewardWeights.parse("0.1:0.45:0.45") == DEFAULT_WEIGHTS
    assert RewardWeights.parse([0.1, 0.4, 0.5]) == RewardWeights(0.1, 0.4, 0.5)
    assert RewardWeights.parse({"format": 1, "reasoning": 0, "answer": 0}) == RewardWeights(1, 0, 0)
    assert str(DEFAULT_WEIGHTS) == "0.1:0.45:0.45"


@pytest.mark.parametrize("bad", ["0.1:0.45", "0.2:0.45:0.45", "a:b:c", "-0.1:0.6:0.5"])
def test_weights_rejected(bad):
    with pytest.raises(ValueError):
        RewardWeights.parse(bad)


def test_format_reward():
    assert format_reward(parse_completion("<think>A</think><answer>B</answer>")) == 1.0
    assert format_reward(parse_completion("<think>A</think><answer>B")) == 0.0
    assert format_reward(parse_completion("<answer>B</answer><think>A</think>")) == 0.0


def test_similarity_rewards_with_mock():
    judge = MockJudge()
    assert reasoning_similarity_reward("x y z", "x y z", judge) == 1.0
    assert reasoning_similarity_reward("a b", "c d", judge) == 0.0
    assert answer_similarity_reward("left", "left", judge) == 1.0


def test_similarity_rewards_from_replies():
    assert reasoning_similarity_reward("g", "r", ScriptedJudge("Similarity score: 0.85")) == 0.85
    assert answer_similarity_reward("g", "r", ScriptedJudge("Similarity score: 1.0")) == 1.0


def test_out_of_range_reply_clamped_and_flagged(caplog, record):
    judge = ScriptedJudge("Similarity score: 1.7")
    with caplog.at_level("WARNING"):
        assert answer_similarity_reward("g", "r", judge) == 1.0
    assert "clamped" in caplog.text
    sc = parse_completion("<think>a</think><answer>b</answer>")
    assert total_reward(sc, record, DEFAULT_WEIGHTS, judge).clamped


def test_unparseable_reply_propagates():
    with pytest.raises(NoScoreFound) as info:
        reasoning_similarity_reward("g", "r", ScriptedJudge("no idea"))
    assert info.value.reply == "no idea"


def test_total_reward_example(record):
    replies = {"reasoning": "Similarity score: 0.8", "answer": "Similarity score: 0.6"}
    judge = ScriptedJudge(lambda prompt, fields: replies[prompt.kind.value])
    sc = parse_completion("<think>some reasoning</think><answer>an answer</answer>")
    br = total_reward(sc, record, DEFAULT_WEIGHTS, judge)
    assert (br.format, br.reasoning, br.answer) == (1.0, 0.8, 0.6)
    assert br.total == pytest.approx(0.73, abs=1e-12)
    assert judge.calls == 2


def test_total_reward_gate(record):
    judge = MockJudge()
    br = total_reward(parse_completion("<think>x</think>"), record, DEFAULT_WEIGHTS, judge)
    assert (br.format, br.reasoning, br.answer, br.total) == (0.0, 0.0, 0.0, 0.0)
    assert judge.calls == 0


@pytest.mark.parametrize("weights", TABLE4_CONFIGS)
def test_perfect_completion_totals_one(weights, record):
    sc = parse_completion(f"<think>{record.reference_reasoning}</think><answer>{record.reference_answer}</answer>")
    assert total_reward(sc, record, weights, MockJudge()).total == pytest.approx(1.0, abs=1e-12)


unit = st.floats(0, 1)


@given(st.sampled_from(TABLE4_CONFIGS), st.sampled_from([0.0, 1.0]), unit, unit)
def test_total_bounds(weights, f, r, a):
    t = combine(f, r, a, weights)
    assert -1e-12 <= t <= 1 + 1e-12


@given(st.sampled_from(TABLE4_CONFIGS), unit, unit, unit, unit)
def test_total_monotone(weights, r, a, dr, da):
    base = combine(1.0, r, a, weights)
    assert combine(1.0, min(1, r + dr), a, weights) >= base - 1e-15
    assert combine(1.0, r, min(1, a + da), weights) >= base - 1e-15
    assert combine(1.0, r, a, weights) >= combine(0.0, r, a, weights)


@given(st.sampled_from(TABLE4_CONFIGS), unit, unit)
def test_weight_swap_symmetry(w, r, a):
    swapped = RewardWeights(w.w_format, w.w_answer, w.w_reasoning)
    assert combine(1.0, r, a, w) == pytest.approx(combine(1.0, a, r, swapped), abs=1e-15)


def test_constructed_malformed_completion_gated(record):
    sc = StructuredCompletion(raw="whatever", reasoning="x", answer="y", well_formed=False)
    judge = MockJudge()
    assert total_reward(sc, record, DEFAULT_WEIGHTS, judge).total == 0.0
    assert judge.calls == 0


@pytest.mark.parametrize("raw", malformed_completions())
def test_malformed_fixture_gated(raw, record):
    judge = MockJudge()
    br = total_reward(parse_completion(raw), record, DEFAULT_WEIGHTS, judge)
    assert br.total == 0.0 and judge.calls == 0
