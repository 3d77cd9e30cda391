"""Full recognizer: factorized pose blocks + sparse frame features in,
action / verb / object logits out.

The network owns every learnable piece: trajectory encoder, frame-feature
projection, multimodal tokenizer, class tokens, modality embeddings,
temporal transformer, classifier heads, and the anticipation projection.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .encoder import EncoderConfig, TrajectoryEncoder
from .errors import DataError
from .frames import FrameFeatureProvider
from .fusion import (
    MultimodalTokenizer,
    TemporalTransformer,
    TokenSequence,
    assemble_token_sequence,
    class_token_outputs,
)
from .numerics import functional as F
from .numerics.layers import LayerNorm, Linear, Module, dtype_of, glorot_uniform
from .numerics.tensor import Parameter, Tensor
from .pose.sequence import (
    SegmentSample,
    derive_wrist_6d,
    factorize_micro_actions,
    fill_missing_hands,
    interpolate_sequence,
    rescale_frame_indices,
    select_joint_subset,
)


@dataclass
class ModelConfig:
    """Architecture + loss hyperparameters."""

    d: int = 64                     # shared embedding width
    t_n: int = 2                    # temporal transformer layers
    d_t: int = 32                   # trajectory token width
    joints: int = 6                 # J per hand
    n_frames: int = 15              # N, pose frames per micro-action
    stride: int = 15                # R, micro-action window stride
    k_blocks: int = 8               # K micro-actions
    coord_dim: int = 3
    d_f: int = 16                   # raw frame-feature width
    n_actions: int = 32
    n_verbs: int = 8
    n_objects: int = 4
    attn_layers: int = 2
    use_rgb: bool = True
    use_tokenizer: bool = True
    joint_identity_embeddings: bool = False
    wrist_relative: bool = False
    lambda_verb: float = 1.0
    lambda_obj: float = 1.0
    # the anticipation term is an unaveraged L1 over (K-1)*d coordinates;
    # a small weight keeps its gradients on the same scale as the CE terms
    lambda_ant: float = 0.01
    dtype: str = "single"

    @property
    def t_prime(self) -> int:
        """Interpolated segment length implied by the factorization identity."""
        return (self.k_blocks - 1) * self.stride + self.n_frames

    def __post_init__(self):
        if self.use_tokenizer and not self.use_rgb:
            raise DataError("the tokenizer option requires the frame modality; "
                            "drop use_tokenizer or enable use_rgb")
        if min(self.d, self.t_n, self.k_blocks, self.stride, self.n_frames) < 1:
            raise DataError("model extents must be positive")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            joints=self.joints,
            n_frames=self.n_frames,
            coord_dim=self.coord_dim,
            d_t=self.d_t,
            d=self.d,
            attn_layers=self.attn_layers,
            joint_identity_embeddings=self.joint_identity_embeddings,
        )


PRESETS = {
    # desk-scale default: 50-epoch runs stay in CPU-minutes territory
    "tiny": dict(d=64, t_n=2, d_t=32, joints=6, n_frames=15, stride=15, k_blocks=8),
    "b": dict(d=256, t_n=2, d_t=256, joints=21, n_frames=15, stride=15, k_blocks=8),
    "l": dict(d=512, t_n=4, d_t=512, joints=21, n_frames=15, stride=15, k_blocks=8),
    # pose-only efficiency point: 50% window overlap, J=6
    "b6-pose": dict(d=256, t_n=2, d_t=256, joints=6, n_frames=15, stride=7, k_blocks=16,
                    use_rgb=False, use_tokenizer=False),
    # smallest end-to-end differentiable configuration, for gradient checks
    "gradcheck-tiny": dict(d=8, t_n=1, d_t=8, joints=2, n_frames=4, stride=4, k_blocks=2,
                           d_f=6, attn_layers=1, n_actions=6, n_verbs=3, n_objects=2,
                           dtype="double"),
}


def preset_config(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise DataError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(PRESETS[name])
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


@dataclass
class PreparedData:
    """Dataset tensors ready for batched forward passes."""

    blocks: np.ndarray                # [S, K, N, 2, J, C]
    wrist: np.ndarray                 # [S, T', 2, 6]
    rgb: Optional[np.ndarray]         # [S, K, d_f] or None
    actions: np.ndarray               # [S]
    verbs: np.ndarray                 # [S]
    objects: np.ndarray               # [S]
    sample_ids: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)


def prepare_samples(samples: List[SegmentSample], cfg: ModelConfig,
                    provider: Optional[FrameFeatureProvider] = None) -> PreparedData:
    """Interpolate, factorize, and stack a sample list into model inputs."""
    if not samples:
        raise DataError("empty sample list")
    if provider is None:
        provider = FrameFeatureProvider(mode="file")
    np_dtype = dtype_of(cfg.dtype)
    S = len(samples)
    blocks = np.empty((S, cfg.k_blocks, cfg.n_frames, 2, cfg.joints, cfg.coord_dim), dtype=np_dtype)
    wrist = np.empty((S, cfg.t_prime, 2, 6), dtype=np_dtype)
    rgb = np.empty((S, cfg.k_blocks, cfg.d_f), dtype=np_dtype) if cfg.use_rgb else None
    actions = np.empty(S, dtype=np.int64)
    verbs = np.empty(S, dtype=np.int64)
    objects = np.empty(S, dtype=np.int64)
    ids = []
    for s_i, sample in enumerate(samples):
        seq, _ = fill_missing_hands(select_joint_subset(sample.pose, cfg.joints))
        source_len = len(seq)
        seq = interpolate_sequence(seq, cfg.t_prime)
        features = None
        if cfg.use_rgb:
            keys = sorted(sample.frame_features)
            if not keys and provider.mode == "stub":
                # no stored features: synthesize on an even grid
                step = max(1, source_len // cfg.k_blocks)
                keys = list(range(1, source_len + 1, step))
            materialized = {idx: provider.get(sample, idx).vector for idx in keys}
            features = rescale_frame_indices(materialized, source_len, cfg.t_prime)
        micro = factorize_micro_actions(seq, features, cfg.n_frames, cfg.stride,
                                        require_features=cfg.use_rgb)
        if len(micro) != cfg.k_blocks:
            raise DataError(
                f"{sample.sample_id}: factorization produced {len(micro)} blocks, "
                f"expected {cfg.k_blocks}"
            )
        for k, m in enumerate(micro):
            block = m.pose_block
            if cfg.wrist_relative:
                block = block - block[:, :, :1, :]
            blocks[s_i, k] = block
            if cfg.use_rgb:
                vec = features[m.rgb_frame_index]
                if len(vec) != cfg.d_f:
                    raise DataError(
                        f"{sample.sample_id}: feature dim {len(vec)} != configured {cfg.d_f}"
                    )
                rgb[s_i, k] = vec
        wrist[s_i] = derive_wrist_6d(seq)
        actions[s_i] = sample.action
        verbs[s_i] = sample.verb
        objects[s_i] = sample.obj
        ids.append(sample.sample_id)
    return PreparedData(blocks, wrist, rgb, actions, verbs, objects, ids)


@dataclass
class ModelOutput:
    logits_action: Tensor
    logits_verb: Tensor
    logits_obj: Tensor
    posergb: Optional[Tensor]      # shared-space features [B, K, d]
    rgb_proj: Optional[Tensor]     # projected frame features [B, K, d]
    token_sequence: TokenSequence


class HandFormerNet(Module):
    """End-to-end network over prepared micro-action batches."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        dtype = dtype_of(cfg.dtype)
        self.np_dtype = dtype
        d = cfg.d
        self.trajectory_encoder = TrajectoryEncoder(cfg.encoder_config(), rng, dtype)
        # per-modality feature norms keep token magnitudes bounded so the
        # stated momentum-SGD schedule is stable at full learning rate
        self.pose_norm = LayerNorm(d, dtype)
        if cfg.use_rgb:
            self.frame_projection = Linear(cfg.d_f, d, rng, dtype)
            self.frame_norm = LayerNorm(d, dtype)
        else:
            self.frame_projection = None
            self.frame_norm = None
        if cfg.use_rgb and cfg.use_tokenizer:
            self.tokenizer = MultimodalTokenizer(d, rng, dtype)
        else:
            self.tokenizer = None
        self.class_tokens = Parameter(glorot_uniform(rng, (3, d), d, d, dtype))
        self.modality_embeddings = Parameter(glorot_uniform(rng, (3, d), d, d, dtype))
        self.temporal_transformer = TemporalTransformer(d, cfg.t_n, rng, dtype)
        self.action_head = Linear(d, cfg.n_actions, rng, dtype)
        self.verb_head = Linear(d, cfg.n_verbs, rng, dtype)
        self.object_head = Linear(d, cfg.n_objects, rng, dtype)
        if cfg.use_rgb and cfg.use_tokenizer:
            self.anticipation_head = Linear(d, d, rng, dtype)
        else:
            self.anticipation_head = None

    def forward(self, blocks: np.ndarray, wrist: np.ndarray,
                rgb: Optional[np.ndarray] = None,
                collect_attention: Optional[list] = None) -> ModelOutput:
        cfg = self.cfg
        blocks_t = Tensor(np.ascontiguousarray(blocks, dtype=self.np_dtype))
        wrist_t = Tensor(np.ascontiguousarray(wrist, dtype=self.np_dtype))
        pose_feats = self.pose_norm(self.trajectory_encoder(blocks_t, wrist_t))  # [B, K, d]

        rgb_proj = None
        posergb = None
        if cfg.use_rgb:
            if rgb is None:
                raise DataError("model configured for the frame modality but got no features")
            rgb_t = Tensor(np.ascontiguousarray(rgb, dtype=self.np_dtype))
            rgb_proj = self.frame_norm(self.frame_projection(rgb_t))             # [B, K, d]
            rgb_tokens = rgb_proj
            pose_tokens = pose_feats
            if self.tokenizer is not None:
                rgb_tokens, pose_tokens, posergb = self.tokenizer(rgb_proj, pose_feats)
            seq = assemble_token_sequence(pose_tokens, rgb_tokens,
                                          self.class_tokens, self.modality_embeddings)
        else:
            seq = assemble_token_sequence(pose_feats, None,
                                          self.class_tokens, self.modality_embeddings)

        states = self.temporal_transformer(seq, collect=collect_attention)
        cls_out, verb_out, obj_out = class_token_outputs(states)
        return ModelOutput(
            logits_action=self.action_head(cls_out),
            logits_verb=self.verb_head(verb_out),
            logits_obj=self.object_head(obj_out),
            posergb=posergb,
            rgb_proj=rgb_proj,
            token_sequence=seq,
        )

    __call__ = forward

    def forward_prepared(self, data: PreparedData, index: np.ndarray,
                         collect_attention: Optional[list] = None) -> ModelOutput:
        rgb = data.rgb[index] if data.rgb is not None else None
        return self.forward(data.blocks[index], data.wrist[index], rgb,
                            collect_attention=collect_attention)


def build_model(cfg: ModelConfig, seed: int = 0) -> HandFormerNet:
    return HandFormerNet(cfg, np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0x11])))


def config_for_dataset(cfg: ModelConfig, n_verbs: int, n_objects: int,
                       n_actions: Optional[int] = None, d_f: Optional[int] = None) -> ModelConfig:
    """Clone a config with class counts (and feature width) from a dataset."""
    return replace(
        cfg,
        n_verbs=n_verbs,
        n_objects=n_objects,
        n_actions=n_actions if n_actions is not None else n_verbs * n_objects,
        d_f=d_f if d_f is not None else cfg.d_f,
    )
