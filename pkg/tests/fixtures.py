"""Fixture corpora shared between unit tests and the acceptance suite."""

import itertools

import numpy as np

from grpo_vqa.evaluation import CallableEmbedder
from grpo_vqa.judge import NoScoreFound
from grpo_vqa.refine import scripted_generator

from conftest import make_record

# (reply, expected score or the exception type it must raise)
WIRE_CASES = [
    # canonical replies in the format the system prompts ask for
    ("Similarity score: 0.85", 0.85),
    ("Similarity score: 1.0", 1.0),
    ("Similarity score: 0.0", 0.0),
    ("Similarity score: 0.5", 0.5),
    ("Similarity score: 1", 1.0),
    ("Similarity score: .25", 0.25),
    # case and whitespace variants
    ("similarity score:   1.0\n", 1.0),
    ("SIMILARITY SCORE: 0.3", 0.3),
    ("  Similarity Score :0.62  ", 0.62),
    ("Similarity\tscore:\t0.4", 0.4),
    ("The reasoning matches closely.\nSimilarity score: 0.9", 0.9),
    ("Similarity score: 0.70\nThe answers agree.", 0.7),
    # out-of-range replies clamp to [0, 1]
    ("Similarity score: 1.7", 1.0),
    ("Similarity score: -0.2", 0.0),
    ("Similarity score: 42", 1.0),
    ("Similarity score: 1e-1", 0.1),
    # no score at all
    ("The texts are similar.", NoScoreFound),
    ("", NoScoreFound),
    ("Similarity score: high", NoScoreFound),
    ("score: 0.8", NoScoreFound),
]


def malformed_completions():
    """50 completions that must fail the format check.

    Built from misorderings, omissions, duplications, nesting and empty
    blocks of the default tags.
    """
    T, Tc, A, Ac = "<think>", "</think>", "<answer>", "</answer>"
    out = []
    for perm in itertools.permutations([T, Tc, A, Ac]):
        if list(perm) != [T, Tc, A, Ac]:
            out.append("".join(tag + f"w{i} " for i, tag in enumerate(perm)))
    out += [
        "",
        "just an answer",
        f"{T}r{Tc}",
        f"{A}a{Ac}",
        f"{T}r{Tc}{A}a",
        f"{T}r{A}a{Ac}",
        f"{T}r{Tc}a{Ac}",
        f"r{Tc}{A}a{Ac}",
        f"{T}{Tc}{A}a{Ac}",
        f"{T}r{Tc}{A}{Ac}",
        f"{T}  {Tc}{A}a{Ac}",
        f"{T}r{Tc}{A}\n\t{Ac}",
        f"{T}r{Tc}{T}r{Tc}{A}a{Ac}",
        f"{T}r{Tc}{A}a{Ac}{A}b{Ac}",
        f"{T}r{A}a{Ac}{Tc}",
        f"{T}r{Tc}{A}a{T}x{Tc}{Ac}",
        f"{A}a{Ac}{T}r{Tc}",
        f"{T}{T}r{Tc}{A}a{Ac}",
        f"{T}r{Tc}{Tc}{A}a{Ac}",
        f"{T}r{Tc}{A}a{Ac}{Ac}",
        "<THINK>r</THINK><ANSWER>a</ANSWER>",
        "<think >r</think><answer>a</answer>",
        "<reasoning>r</reasoning><answer>a</answer>",
        f"{T}r</think {A}a{Ac}",
        f"{T}r{Tc}<answer a{Ac}",
        f"{Tc}{T}r{A}a{Ac}",
        f"{T}r{Tc}{Ac}a{A}",
    ]
    assert len(out) == 50, len(out)
    return out


# -- refinement scenarios ----------------------------------------------------

_WORDS = [f"w{i}" for i in range(64)]


def _one_hot(text):
    v = np.zeros(len(_WORDS))
    for tok in text.split():
        v[_WORDS.index(tok)] += 1.0
    return v


ONE_HOT = CallableEmbedder(_one_hot, len(_WORDS), name="one-hot")

AGREE = ("w0 w1", "w2")
TUNED_OFF = ("w10 w11", "w12")
BASE_OFF = ("w20 w21", "w22")


def scenario(schedule):
    """Records plus generators from a per-record agreement schedule.

    ``schedule[id]`` is a list of booleans by iteration: True means the
    tuned and base generators produce the same pair (score 1), False
    means disjoint pairs (score 0).
    """
    records = [make_record(i) for i in range(len(schedule))]
    ids = [r.id for r in records]
    tuned = {rid: [AGREE if ok else TUNED_OFF for ok in schedule[k]] for k, rid in enumerate(ids)}
    base = {rid: [AGREE if ok else BASE_OFF for ok in schedule[k]] for k, rid in enumerate(ids)}
    return records, scripted_generator("tuned", tuned), scripted_generator("base", base)


def immediate_convergence(n=10):
    return scenario([[True]] * n)


def improving_agreement(n=8):
    # record k starts agreeing at iteration k // 2: two records per iteration
    return scenario([[it >= k // 2 for it in range(n)] for k in range(n)])


def permanent_disagreement(n=6):
    return scenario([[False]] * n)


def random_scenario(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 25))
    depth = int(rng.integers(1, 8))
    return scenario([list(rng.random(depth) < rng.random()) for _ in range(n)]), rng
