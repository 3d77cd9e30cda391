"""Multimodal hand-action recognition from dense 3D hand-pose trajectories
factorized into micro-actions, fused with sparse per-frame features, and
aggregated by a masked temporal transformer.
"""
from .errors import DataError, HandFormerError, NumericsError
from .estimator import HandFormerClassifier
from .model import ModelConfig, PRESETS, build_model, prepare_samples, preset_config
from .pose import (
    Dataset,
    PoseSequence,
    SegmentSample,
    generate_synthetic_dataset,
    load_pose_sequence,
    write_pose_sequence,
)
from .training import (
    EvalReport,
    LossBreakdown,
    TrainConfig,
    TrainResult,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    split_dataset,
    train,
)
from .flops import FlopsLedger, count_model_flops, paper_reference_ledger, tsm_reference_ledger

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "HandFormerError",
    "NumericsError",
    "HandFormerClassifier",
    "ModelConfig",
    "PRESETS",
    "build_model",
    "prepare_samples",
    "preset_config",
    "Dataset",
    "PoseSequence",
    "SegmentSample",
    "generate_synthetic_dataset",
    "load_pose_sequence",
    "write_pose_sequence",
    "EvalReport",
    "LossBreakdown",
    "TrainConfig",
    "TrainResult",
    "evaluate",
    "load_checkpoint",
    "save_checkpoint",
    "split_dataset",
    "train",
    "FlopsLedger",
    "count_model_flops",
    "paper_reference_ledger",
    "tsm_reference_ledger",
    "__version__",
]
