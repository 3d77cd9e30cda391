"""Pose sequences: file I/O, resampling, factorization, synthesis."""
from .layout import FULL_JOINT_NAMES, JointLayout, layout_for, subset_indices
from .sequence import (
    MicroAction,
    PoseSequence,
    SegmentSample,
    block_count,
    block_start,
    derive_wrist_6d,
    factorize_micro_actions,
    fill_missing_hands,
    interpolate_sequence,
    nearest_frame_index,
    rescale_frame_indices,
    select_joint_subset,
)
from .fileio import (
    load_frame_features,
    load_labels,
    load_pose_sequence,
    write_frame_features,
    write_labels,
    write_pose_sequence,
)
from .synthetic import (
    Dataset,
    TEMPLATE_HAND_21,
    VERB_FAMILY_NAMES,
    build_verb_clip,
    generate_coupled_clip,
    generate_pinned_clip,
    generate_synthetic_dataset,
    object_feature_center,
)

__all__ = [
    "FULL_JOINT_NAMES",
    "JointLayout",
    "layout_for",
    "subset_indices",
    "MicroAction",
    "PoseSequence",
    "SegmentSample",
    "block_count",
    "block_start",
    "derive_wrist_6d",
    "factorize_micro_actions",
    "fill_missing_hands",
    "interpolate_sequence",
    "nearest_frame_index",
    "rescale_frame_indices",
    "select_joint_subset",
    "load_frame_features",
    "load_labels",
    "load_pose_sequence",
    "write_frame_features",
    "write_labels",
    "write_pose_sequence",
    "Dataset",
    "TEMPLATE_HAND_21",
    "VERB_FAMILY_NAMES",
    "build_verb_clip",
    "generate_coupled_clip",
    "generate_pinned_clip",
    "generate_synthetic_dataset",
    "object_feature_center",
]
