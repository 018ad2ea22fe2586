"""GRPO post-training toolkit for structured VQA reasoning.

Rule-based rewards over tagged completions, LLM-as-judge scoring,
group-relative policy optimisation on a desk-scale toy policy, an R/A/F1
evaluation harness and an agreement-driven dataset refinement loop.
"""

from .core import (
    DatasetError,
    DatasetStats,
    QaRecord,
    QuestionType,
    StructuredCompletion,
    TagConfig,
    load_dataset,
    parse_completion,
    save_dataset,
    validate_dataset,
)
from .evaluation import ScoreTriple, f1_fuse, run_benchmark
from .grpo import GroupBatch, GrpoConfig, KLMode, ResponseSample, grpo_loss, normalize_group_rewards
from .rewards import RewardBreakdown, RewardWeights, total_reward

__all__ = [
    "DatasetError",
    "DatasetStats",
    "GroupBatch",
    "GrpoConfig",
    "KLMode",
    "QaRecord",
    "QuestionType",
    "ResponseSample",
    "RewardBreakdown",
    "RewardWeights",
    "ScoreTriple",
    "StructuredCompletion",
    "TagConfig",
    "f1_fuse",
    "grpo_loss",
    "load_dataset",
    "normalize_group_rewards",
    "parse_completion",
    "run_benchmark",
    "save_dataset",
    "total_reward",
    "validate_dataset",
]

__version__ = "0.1.0"
