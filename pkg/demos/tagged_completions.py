"""
Tagged completions and the format-gated reward
==============================================

A completion earns reward only when its reasoning and answer sit in
their own tagged blocks, in order. Malformed text never reaches the
judge.
"""

from grpo_vqa import RewardWeights, parse_completion, total_reward
from grpo_vqa.core import QaRecord
from grpo_vqa.judge import MockJudge

record = QaRecord(
    id="demo-1",
    image_ref="area_3/pano_0042.png",
    question="Which side of the sofa is the lamp on?",
    question_type="spatial_reasoning",
    reference_reasoning="the lamp stands to the left of the sofa near the window",
    reference_answer="left",
)

completions = [
    "<think>the lamp stands left of the sofa by the window</think><answer>left</answer>",
    "<answer>left</answer><think>the lamp is on the left</think>",
    "<think>the lamp is on the left</think> left",
    "<think> </think><answer>left</answer>",
]

# what the parser sees
for raw in completions:
    sc = parse_completion(raw)
    print(f"{sc.well_formed!s:5}  {raw[:60]!r}")
    for problem in sc.problems:
        print("       ", problem)

# the three weightings compared in the ablation
judge = MockJudge()  # token-overlap stand-in for an LLM judge
for weights in ("0.1:0.45:0.45", "0.1:0.4:0.5", "0.1:0.5:0.4"):
    w = RewardWeights.parse(weights)
    totals = [total_reward(parse_completion(raw), record, w, judge).total for raw in completions]
    print(weights, " ".join(f"{t:.3f}" for t in totals))

# only the first completion was sent to the judge: two calls per weighting
print("judge calls:", judge.calls)
