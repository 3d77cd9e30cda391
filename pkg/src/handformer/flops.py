"""Analytical FLOPs accounting.

Counting convention: 2*m*n per m-by-n matrix-vector product (multiply +
add), the same expanded for convolutions and attention projections.
Normalizations and activations are not counted. Reference component tables
for the published comparison are reproduced as constants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

from .encoder import TCN_KERNEL, TCN_STRIDES, tcn_output_len
from .errors import DataError
from .model import ModelConfig
from .numerics.layers import attention_heads


@dataclass
class FlopsEntry:
    name: str
    gflops: float       # per invocation
    count: int

    @property
    def total(self) -> float:
        return self.gflops * self.count


@dataclass
class FlopsLedger:
    entries: List[FlopsEntry] = field(default_factory=list)

    @property
    def total(self) -> float:
        return sum(e.total for e in self.entries)

    def add(self, name: str, gflops: float, count: int = 1) -> None:
        self.entries.append(FlopsEntry(name, gflops, count))

    def find(self, name: str) -> FlopsEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise DataError(f"no ledger entry named {name!r}")

    def format(self) -> str:
        lines = [f"{'component':<24} {'gflops':>10} {'count':>7} {'total':>10}"]
        for e in self.entries:
            lines.append(f"{e.name:<24} {e.gflops:>10.4f} {e.count:>7d} {e.total:>10.2f}")
        lines.append(f"{'total':<24} {'':>10} {'':>7} {self.total:>10.2f}")
        return "\n".join(lines)


# -- published reference tables ---------------------------------------------

def paper_reference_ledger() -> FlopsLedger:
    """Published per-component inference budget of the multimodal B/21 system."""
    ledger = FlopsLedger()
    ledger.add("pose_estimator", 0.30, 162)
    ledger.add("frame_encoder", 4.12, 8)
    ledger.add("trajectory_encoder", 0.29, 8)
    ledger.add("multimodal_tokenizer", 0.01, 8)
    ledger.add("temporal_transformer", 0.05, 1)
    return ledger


def tsm_reference_ledger() -> FlopsLedger:
    """Dense-frame video baseline total at the same temporal resolution."""
    ledger = FlopsLedger()
    ledger.add("tsm_resnet50", 669.79, 1)
    return ledger


REFERENCE_TABLES = {
    "paper": paper_reference_ledger,
    "tsm": tsm_reference_ledger,
}


# -- analytical counting of this implementation ------------------------------

def _linear_flops(d_in: int, d_out: int, tokens: int = 1) -> float:
    return 2.0 * d_in * d_out * tokens


def _tcn_flops(c_in: int, d_t: int, length: int) -> float:
    widths = (c_in, d_t // 2, d_t, d_t)
    total = 0.0
    for i, stride in enumerate(TCN_STRIDES):
        length = (length + 2 - TCN_KERNEL) // stride + 1
        total += 2.0 * widths[i] * TCN_KERNEL * widths[i + 1] * length
    return total


def _attention_round_flops(n_tokens: int, d: int, with_ffn: bool) -> float:
    heads = attention_heads(d)
    d_h = d // heads
    proj = 4.0 * _linear_flops(d, d, n_tokens)
    scores = 2.0 * heads * n_tokens * n_tokens * d_h   # QK^T
    mix = 2.0 * heads * n_tokens * n_tokens * d_h      # weights @ V
    ffn = 2.0 * _linear_flops(d, 4 * d, n_tokens) if with_ffn else 0.0
    return proj + scores + mix + ffn


def trajectory_encoder_flops(cfg: ModelConfig) -> float:
    """One micro-action through the pose branch (excluding the shared wrist TCN)."""
    n_joints = 2 * cfg.joints
    per_joint = _tcn_flops(cfg.coord_dim, cfg.d_t, cfg.n_frames)
    l_t = tcn_output_len(cfg.n_frames)
    n_tokens = n_joints + 1
    attn = cfg.attn_layers * l_t * _attention_round_flops(n_tokens, cfg.d_t, with_ffn=False)
    out_proj = _linear_flops(cfg.d_t, cfg.d)
    return n_joints * per_joint + attn + out_proj


def wrist_tcn_flops(cfg: ModelConfig) -> float:
    return _tcn_flops(12, cfg.d_t, cfg.t_prime)


def tokenizer_flops(cfg: ModelConfig) -> float:
    return _linear_flops(2 * cfg.d, cfg.d) + _linear_flops(cfg.d, 2 * cfg.d)


def temporal_transformer_flops(cfg: ModelConfig) -> float:
    n_tokens = (2 * cfg.k_blocks if cfg.use_rgb else cfg.k_blocks) + 3
    return cfg.t_n * _attention_round_flops(n_tokens, cfg.d, with_ffn=True)


def heads_flops(cfg: ModelConfig) -> float:
    return (_linear_flops(cfg.d, cfg.n_actions) + _linear_flops(cfg.d, cfg.n_verbs)
            + _linear_flops(cfg.d, cfg.n_objects))


def count_model_flops(cfg: ModelConfig) -> FlopsLedger:
    """Itemized forward-pass budget of this implementation at a given config."""
    giga = 1e-9
    ledger = FlopsLedger()
    ledger.add("wrist_tcn", wrist_tcn_flops(cfg) * giga, 1)
    ledger.add("trajectory_encoder", trajectory_encoder_flops(cfg) * giga, cfg.k_blocks)
    if cfg.use_rgb:
        ledger.add("frame_projection", _linear_flops(cfg.d_f, cfg.d) * giga, cfg.k_blocks)
        if cfg.use_tokenizer:
            ledger.add("multimodal_tokenizer", tokenizer_flops(cfg) * giga, cfg.k_blocks)
    ledger.add("temporal_transformer", temporal_transformer_flops(cfg) * giga, 1)
    ledger.add("classifier_heads", heads_flops(cfg) * giga, 1)
    return ledger
