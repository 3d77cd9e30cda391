"""End-to-end gradient verification of the smallest full model.

Builds the gradcheck-tiny configuration in double precision, forms a fixed
random two-sample batch, and compares every analytic parameter gradient of
the complete four-term loss against central differences.
"""
from __future__ import annotations

import numpy as np

from .model import build_model, preset_config
from .numerics.gradcheck import GradCheckReport, finite_diff_check
from .training import compute_losses

GRADCHECK_PRESETS = {"tiny": "gradcheck-tiny"}


def full_model_gradcheck(seed: int = 0, eps: float = 1e-5, tol: float = 1e-4,
                         preset: str = "tiny", batch: int = 2) -> GradCheckReport:
    cfg = preset_config(GRADCHECK_PRESETS.get(preset, preset))
    net = build_model(cfg, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0x6C]))
    blocks = rng.normal(size=(batch, cfg.k_blocks, cfg.n_frames, 2, cfg.joints, cfg.coord_dim))
    wrist = rng.normal(size=(batch, cfg.t_prime, 2, 6))
    rgb = rng.normal(size=(batch, cfg.k_blocks, cfg.d_f))
    actions = rng.integers(0, cfg.n_actions, size=batch)
    verbs = rng.integers(0, cfg.n_verbs, size=batch)
    objects = rng.integers(0, cfg.n_objects, size=batch)

    # anticipation targets are stop-gradient in training, so the checked
    # loss must hold them at their initial values
    initial = net.forward(blocks, wrist, rgb)
    fixed_targets = initial.rgb_proj.data[:, 1:, :].copy()

    def loss():
        out = net.forward(blocks, wrist, rgb)
        total, _ = compute_losses(out, actions, verbs, objects, cfg, "multimodal",
                                  ant_head=net.anticipation_head,
                                  ant_targets=fixed_targets)
        return total

    return finite_diff_check(loss, list(net.named_parameters()), eps=eps, tol=tol)
