"""Deterministic tensor library with reverse-mode gradients."""
from .tensor import DOUBLE, SINGLE, Parameter, Tensor, grad_enabled, no_grad
from . import functional
from .functional import (
    concat,
    conv1d,
    cross_entropy,
    cross_entropy_mean,
    linear,
    masked_multihead_attention,
    matmul,
    softmax,
    softmax_attention,
    temporal_conv1d,
)
from .layers import (
    Conv1d,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    MultiHeadAttention,
    SelfAttentionBlock,
    TransformerLayer,
    attention_heads,
    dtype_of,
    glorot_uniform,
)
from .optim import SgdMomentum
from .gradcheck import GradCheckReport, finite_diff_check

__all__ = [
    "DOUBLE",
    "SINGLE",
    "Parameter",
    "Tensor",
    "grad_enabled",
    "no_grad",
    "functional",
    "concat",
    "conv1d",
    "cross_entropy",
    "cross_entropy_mean",
    "linear",
    "masked_multihead_attention",
    "matmul",
    "softmax",
    "softmax_attention",
    "temporal_conv1d",
    "Conv1d",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleList",
    "MultiHeadAttention",
    "SelfAttentionBlock",
    "TransformerLayer",
    "attention_heads",
    "dtype_of",
    "glorot_uniform",
    "SgdMomentum",
    "GradCheckReport",
    "finite_diff_check",
]
