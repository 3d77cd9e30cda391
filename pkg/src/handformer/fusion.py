"""Cross-modal token mixing and temporal aggregation.

The tokenizer projects concatenated frame/pose features into a shared
space and adds the split halves back to each modality; its output layer is
zero-initialized, so a fresh model starts out exactly tokenizer-free. The
temporal transformer aggregates micro-action tokens plus three class
tokens, with the verb token masked to pose columns and the object token to
frame columns in every layer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DataError
from .numerics import functional as F
from .numerics.layers import Linear, Module, ModuleList, TransformerLayer
from .numerics.tensor import Parameter, Tensor

MODALITY_CLS = 0
MODALITY_POSE = 1
MODALITY_RGB = 2

TOKEN_CLS = 0
TOKEN_VERB = 1
TOKEN_OBJ = 2
N_CLASS_TOKENS = 3


def positional_encoding(position: int, d: int) -> np.ndarray:
    """Fixed sin/cos encoding: entry 2i = sin(p/10000^(2i/d)), 2i+1 = cos."""
    if position < 0:
        raise DataError("position must be non-negative")
    if d % 2 != 0:
        raise DataError("positional encoding needs an even width")
    i = np.arange(d // 2, dtype=np.float64)
    rate = position / np.power(10000.0, 2.0 * i / d)
    out = np.empty(d, dtype=np.float64)
    out[0::2] = np.sin(rate)
    out[1::2] = np.cos(rate)
    return out


def positional_table(position_ids: np.ndarray, d: int) -> np.ndarray:
    return np.stack([positional_encoding(int(p), d) for p in position_ids])


class MultimodalTokenizer(Module):
    """Residual cross-modal mixer with a shared d-dim bottleneck."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.d = d
        self.mix_in = Linear(2 * d, d, rng, dtype)
        self.mix_out = Linear(d, 2 * d, rng, dtype, zero_init=True)

    def __call__(self, f_rgb: Tensor, f_pose: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """Returns (enhanced rgb, enhanced pose, shared-space bottleneck)."""
        d = self.d
        joint = F.concat([f_rgb, f_pose], axis=-1)
        hidden = F.relu(self.mix_in(joint))
        out = self.mix_out(hidden)
        f_rgb_hat = f_rgb + F.narrow(out, out.ndim - 1, 0, d)
        f_pose_hat = f_pose + F.narrow(out, out.ndim - 1, d, d)
        return f_rgb_hat, f_pose_hat, hidden


@dataclass
class TokenSequence:
    """Ordered class + micro-action tokens with their routing metadata."""

    tokens: Tensor                 # [B, T, d]
    position_ids: np.ndarray       # [T]
    modality_ids: np.ndarray       # [T], values in {cls, pose, rgb}
    attention_mask: np.ndarray     # [T, T] boolean, True = may attend

    def __post_init__(self):
        T = self.tokens.shape[-2]
        if not (len(self.position_ids) == len(self.modality_ids) == T):
            raise DataError("token metadata length mismatch")
        if self.attention_mask.shape != (T, T):
            raise DataError("attention mask shape mismatch")
        if np.any(~self.attention_mask.any(axis=1)):
            raise DataError("attention mask has an all-false row")


def build_attention_mask(modality_ids: np.ndarray) -> np.ndarray:
    """All rows unrestricted except the verb and object class-token rows."""
    T = len(modality_ids)
    mask = np.ones((T, T), dtype=bool)
    mask[TOKEN_VERB] = modality_ids == MODALITY_POSE
    mask[TOKEN_VERB, TOKEN_VERB] = True
    mask[TOKEN_OBJ] = modality_ids == MODALITY_RGB
    mask[TOKEN_OBJ, TOKEN_OBJ] = True
    return mask


def assemble_token_sequence(
    pose_feats: Tensor,
    rgb_feats: Optional[Tensor],
    class_tokens: Parameter,
    modality_embeddings: Parameter,
) -> TokenSequence:
    """Build [CLS][VERB][OBJ] + interleaved pose/rgb tokens for K micro-actions.

    Pose and frame tokens of micro-action k share position id k; class
    tokens use the reserved position 0. Positional encodings and learned
    per-modality embeddings are added here.
    """
    B, K, d = pose_feats.shape
    if rgb_feats is not None and rgb_feats.shape != pose_feats.shape:
        raise DataError(
            f"micro-action feature shapes differ: pose {pose_feats.shape} vs rgb {rgb_feats.shape}"
        )
    cls = F.broadcast_to(F.reshape(class_tokens, (1, N_CLASS_TOKENS, d)), (B, N_CLASS_TOKENS, d))
    if rgb_feats is None:
        body = pose_feats
        body_modalities = [MODALITY_POSE] * K
        body_positions = list(range(1, K + 1))
    else:
        paired = F.concat(
            [F.reshape(pose_feats, (B, K, 1, d)), F.reshape(rgb_feats, (B, K, 1, d))], axis=2
        )
        body = F.reshape(paired, (B, 2 * K, d))
        body_modalities = [MODALITY_POSE, MODALITY_RGB] * K
        body_positions = [k for k in range(1, K + 1) for _ in range(2)]

    tokens = F.concat([cls, body], axis=1)
    position_ids = np.array([0] * N_CLASS_TOKENS + body_positions)
    modality_ids = np.array([MODALITY_CLS] * N_CLASS_TOKENS + body_modalities)

    dtype = pose_feats.data.dtype
    pos = Tensor(positional_table(position_ids, d).astype(dtype))
    onehot = Tensor(np.eye(3, dtype=dtype)[modality_ids])
    tokens = tokens + pos + F.matmul(onehot, modality_embeddings)
    return TokenSequence(
        tokens=tokens,
        position_ids=position_ids,
        modality_ids=modality_ids,
        attention_mask=build_attention_mask(modality_ids),
    )


class TemporalTransformer(Module):
    """Stack of masked pre-norm encoder layers over the token sequence."""

    def __init__(self, d: int, n_layers: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.layers = ModuleList([TransformerLayer(d, rng, dtype=dtype) for _ in range(n_layers)])

    def __call__(self, seq: TokenSequence, collect: Optional[List] = None) -> Tensor:
        x = seq.tokens
        for layer in self.layers:
            x = layer(x, mask=seq.attention_mask, collect=collect)
        return x


def class_token_outputs(states: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Final [CLS], [VERB], [OBJ] states from transformer output [B, T, d]."""
    B, T, d = states.shape
    cls = F.reshape(F.narrow(states, 1, TOKEN_CLS, 1), (B, d))
    verb = F.reshape(F.narrow(states, 1, TOKEN_VERB, 1), (B, d))
    obj = F.reshape(F.narrow(states, 1, TOKEN_OBJ, 1), (B, d))
    return cls, verb, obj
