"""Global-aware beam search: decoding that scores hypotheses against a
predicted global attention distribution over the source."""
from . import kernels
from .core import (
    AttentionLedger,
    GlobalAttention,
    GlobalAwareError,
    Hypothesis,
    ScorerConfig,
    SourceDocument,
    accumulate_attention,
    validate_distribution,
)
from .evaluation import (
    ExperimentRecord,
    divergence_position,
    length_stats,
    novel_word_pct,
    rouge,
    run_decode,
    run_degradation,
    run_sweep,
)
from .model import (
    Instance,
    StepOutput,
    SyntheticSpec,
    TableModel,
    load_model,
    make_synthetic,
    teacher_forced_global_attention,
)
from .predictor import PredictorParams, init_for_dataset, predict, train
from .scoring import (
    attention_score,
    final_hypothesis_score,
    joint_step_update,
    step_length_reward,
)
from .search import (
    BlockSchedule,
    DecodeResult,
    beam_search,
    blocked_decode,
    exhaustive_oracle,
    standard_beam_search,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionLedger", "BlockSchedule", "DecodeResult", "ExperimentRecord", "GlobalAttention",
    "GlobalAwareError", "Hypothesis", "Instance", "PredictorParams", "ScorerConfig",
    "SourceDocument", "StepOutput", "SyntheticSpec", "TableModel", "accumulate_attention",
    "attention_score", "beam_search", "blocked_decode", "divergence_position",
    "exhaustive_oracle", "final_hypothesis_score", "init_for_dataset", "joint_step_update",
    "kernels", "length_stats", "load_model", "make_synthetic", "novel_word_pct", "predict",
    "rouge", "run_decode", "run_degradation", "run_sweep", "standard_beam_search",
    "step_length_reward", "teacher_forced_global_attention", "train", "validate_distribution",
]
