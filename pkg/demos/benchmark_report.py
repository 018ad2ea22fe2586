"""
An R/A/F1 benchmark report
==========================

Reasoning and answer are scored separately by each metric, averaged over
records, and fused by the harmonic mean. The mock judge stands in for a
hosted model and answers in the same reply formats.
"""

from grpo_vqa.core import QaRecord, parse_completion
from grpo_vqa.evaluation import HashedBagEmbedder, MetricConfig, MetricReport, ScoreTriple, run_benchmark
from grpo_vqa.judge import MockJudge

records = [
    QaRecord("q1", "pano_1.png", "What color is the chair?", "attribute_analysis",
             "the chair near the desk is upholstered in red fabric", "red"),
    QaRecord("q2", "pano_2.png", "Is there a plant in the room?", "object_identification",
             "a potted plant sits on the windowsill", "yes"),
    QaRecord("q3", "pano_3.png", "Where is the door relative to the bed?", "spatial_reasoning",
             "the door is on the wall to the right of the bed", "right"),
]
outputs = {
    "q1": "<think>the chair by the desk has red fabric</think><answer>red</answer>",
    "q2": "<think>I see a plant on the windowsill</think><answer>yes</answer>",
    "q3": "<think>the door is left of the bed</think><answer>left</answer>",
}
candidates = {rid: parse_completion(text) for rid, text in outputs.items()}

judge = MockJudge()
metrics = [
    MetricConfig("QwenScore", "five_level", judge=judge),
    MetricConfig("DeepSeekScore", "fractional", judge=judge),
    MetricConfig("SBERTScore", "embedding", embedder=HashedBagEmbedder()),
]
report = run_benchmark(records, candidates, metrics, model_name="demo-model")
print(report.to_markdown())

# F1 comes from the averaged R and A, not from averaging per-record F1
for rid, cells in report.per_record.items():
    t = cells["DeepSeekScore"]
    print(rid, f"R={t.reasoning:.3f} A={t.answer:.3f} F1={t.f1:.3f}")

# a published row, reproduced from its R and A
print(MetricReport("QwenVL2.5-7B", {"QwenScore": ScoreTriple.of(0.4400, 0.4220)}, {}, 0).to_markdown())
