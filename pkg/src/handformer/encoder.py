"""Trajectory encoder: per-joint TCN tokens, a global wrist token, joint
self-attention at each temporal step, and spatiotemporal pooling.

One shared temporal CNN processes every joint trajectory, so local tokens
are equivariant to joint reordering by construction. The wrist TCN sees the
action-wide two-hand 6D pose sequence once per segment and its token is
shared across all micro-actions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .numerics import functional as F
from .numerics.layers import Conv1d, Linear, Module, ModuleList, SelfAttentionBlock
from .numerics.tensor import Parameter, Tensor

TCN_KERNEL = 3
TCN_STRIDES = (1, 2, 2)


def tcn_output_len(n_frames: int) -> int:
    """Temporal length after the three-stage TCN (kernel 3, padding 1)."""
    length = n_frames
    for stride in TCN_STRIDES:
        length = (length + 2 - TCN_KERNEL) // stride + 1
    return length


@dataclass
class EncoderConfig:
    joints: int = 6            # J per hand
    n_frames: int = 15         # N, frames per micro-action
    coord_dim: int = 3
    d_t: int = 32              # token channel width
    d: int = 64                # output feature width
    attn_layers: int = 2
    joint_identity_embeddings: bool = False

    def __post_init__(self):
        if self.n_frames < TCN_KERNEL:
            raise DataError(
                f"micro-action length {self.n_frames} below the TCN receptive-field minimum {TCN_KERNEL}"
            )
        if self.d_t % 2 != 0:
            raise DataError("token width must be even")

    @property
    def n_local_tokens(self) -> int:
        return 2 * self.joints

    @property
    def l_t(self) -> int:
        return tcn_output_len(self.n_frames)


class _Tcn(Module):
    """Three temporal conv layers, ReLU between, channels c_in -> d_t/2 -> d_t -> d_t."""

    def __init__(self, c_in: int, d_t: int, rng, dtype):
        super().__init__()
        widths = (c_in, d_t // 2, d_t, d_t)
        self.convs = ModuleList([
            Conv1d(widths[i], widths[i + 1], TCN_KERNEL, rng,
                   stride=TCN_STRIDES[i], padding=1, dtype=dtype)
            for i in range(3)
        ])

    def __call__(self, x: Tensor) -> Tensor:
        x = F.relu(self.convs[0](x))
        x = F.relu(self.convs[1](x))
        return self.convs[2](x)


class TrajectoryEncoder(Module):
    """Maps micro-action pose blocks [B, K, N, 2, J, C] to features [B, K, d]."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.joint_tcn = _Tcn(cfg.coord_dim, cfg.d_t, rng, dtype)
        self.wrist_tcn = _Tcn(12, cfg.d_t, rng, dtype)
        self.attn_blocks = ModuleList([
            SelfAttentionBlock(cfg.d_t, rng, dtype) for _ in range(cfg.attn_layers)
        ])
        self.out_proj = Linear(cfg.d_t, cfg.d, rng, dtype)
        if cfg.joint_identity_embeddings:
            limit = np.sqrt(6.0 / (2 * cfg.d_t))
            self.joint_embeddings = Parameter(
                rng.uniform(-limit, limit, size=(cfg.n_local_tokens, 1, cfg.d_t)).astype(dtype)
            )
        else:
            self.joint_embeddings = None

    # -- stages ----------------------------------------------------------

    def local_tokens(self, blocks: Tensor) -> Tensor:
        """[B, K, N, 2, J, C] -> local trajectory tokens [B, K, 2J, L_t, d_t]."""
        B, K, N, hands, J, C = blocks.shape
        if N != self.cfg.n_frames:
            raise DataError(f"block length {N} != configured {self.cfg.n_frames}")
        x = F.transpose(blocks, (0, 1, 3, 4, 5, 2))       # [B,K,2,J,C,N]
        x = F.reshape(x, (B * K * hands * J, C, N))
        x = self.joint_tcn(x)                              # [BK2J, d_t, L_t]
        l_t = x.shape[-1]
        x = F.reshape(x, (B, K, hands * J, self.cfg.d_t, l_t))
        x = F.transpose(x, (0, 1, 2, 4, 3))               # [B,K,2J,L_t,d_t]
        if self.joint_embeddings is not None:
            x = x + self.joint_embeddings
        return x

    def wrist_token(self, wrist6d: Tensor) -> Tensor:
        """Action-wide [B, T', 2, 6] -> one global reference token [B, d_t].

        The 6D channels are mean-centered over time first: the global token
        describes the segment's motion pattern, while absolute placement
        stays visible to the local trajectory tokens.
        """
        B, T, hands, six = wrist6d.shape
        x = F.reshape(wrist6d, (B, T, hands * six))
        x = x - F.tmean(x, axis=1, keepdims=True)
        x = F.transpose(x, (0, 2, 1))                      # [B, 12, T']
        x = self.wrist_tcn(x)                              # [B, d_t, L_w]
        return F.tmean(x, axis=2)                          # [B, d_t]

    def __call__(self, blocks: Tensor, wrist6d: Tensor) -> Tensor:
        local = self.local_tokens(blocks)                  # [B,K,2J,L_t,d_t]
        B, K, n_local, l_t, d_t = local.shape
        wrist = self.wrist_token(wrist6d)                  # [B, d_t]
        wrist = F.reshape(wrist, (B, 1, 1, 1, d_t))
        wrist = F.broadcast_to(wrist, (B, K, 1, l_t, d_t))
        tokens = F.concat([local, wrist], axis=2)          # [B,K,T,L_t,d_t]
        tokens = F.transpose(tokens, (0, 1, 3, 2, 4))      # attend across joints per step
        for block in self.attn_blocks:
            tokens = block(tokens)
        pooled = F.tmean(tokens, axis=(2, 3))              # [B, K, d_t]
        return self.out_proj(pooled)


# -- single-block views of the stages (contract-level API) -----------------

def encode_joint_trajectories(encoder: TrajectoryEncoder, block: np.ndarray) -> np.ndarray:
    """One pose block [N, 2, J, C] -> local tokens [2J, L_t, d_t]."""
    block = np.asarray(block)
    if not np.isfinite(block).all():
        raise DataError("pose block contains non-finite values")
    t = Tensor(block[None, None].astype(encoder.out_proj.weight.data.dtype))
    out = encoder.local_tokens(t)
    return out.data[0, 0]


def encode_global_wrist(encoder: TrajectoryEncoder, wrist6d: np.ndarray) -> np.ndarray:
    """Action-wide [T', 2, 6] -> global token broadcast to [L_t, d_t]."""
    t = Tensor(np.asarray(wrist6d)[None].astype(encoder.out_proj.weight.data.dtype))
    token = encoder.wrist_token(t).data[0]
    return np.broadcast_to(token, (encoder.cfg.l_t, encoder.cfg.d_t)).copy()


def trajectory_encoder_forward(encoder: TrajectoryEncoder, block: np.ndarray,
                               wrist6d: np.ndarray) -> np.ndarray:
    """One micro-action -> pose feature [d]."""
    dtype = encoder.out_proj.weight.data.dtype
    blocks = Tensor(np.asarray(block)[None, None].astype(dtype))
    wrist = Tensor(np.asarray(wrist6d)[None].astype(dtype))
    return encoder(blocks, wrist).data[0, 0]
