"""
Iterative refinement by model agreement
=======================================

Two generators answer every record. Pairs on which they agree strongly
are accepted, the rest go round again, and whatever is left at the end
is exported for a person to review.
"""

import tempfile
from pathlib import Path

from grpo_vqa.core import QaRecord
from grpo_vqa.evaluation import HashedBagEmbedder
from grpo_vqa.refine import load_review_export, refine_loop, scripted_generator

records = [
    QaRecord(f"s{i}", f"pano_{i}.png", f"Where is object {i}?", "spatial_reasoning",
             f"object {i} is beside the table", "beside the table")
    for i in range(6)
]
agree = ("object is beside the table", "beside the table")

# the tuned model drifts toward the base model's answer over iterations, one record never does
tuned = scripted_generator("tuned", {
    "s0": [agree],
    "s1": [agree],
    "s2": [("it hangs on the wall", "wall"), agree],
    "s3": [("it hangs on the wall", "wall"), agree],
    "s4": [("under a blue rug", "floor"), ("under a blue rug", "floor"), agree],
    "s5": [("a ceiling fan spins", "ceiling")],
})
base = scripted_generator("base", {r.id: [agree] for r in records})

out = Path(tempfile.mkdtemp()) / "manual_review.jsonl"
state = refine_loop(records, tuned, base, HashedBagEmbedder(), threshold=0.8, stop_fraction=0.05, export_path=out)

for i, (accepted, pending) in enumerate(state.history, 1):
    print(f"iteration {i}: accepted {accepted}, pending {pending}")
print("stopped:", state.stop_reason)
print("for review:", [r.id for r in load_review_export(out)])
