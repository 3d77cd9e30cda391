"""Scikit-learn style estimator wrapping the full pipeline.

HandFormerClassifier follows the sklearn parameter conventions: every
constructor argument is stored untouched, get_params/set_params come from
BaseEstimator, fit returns self, and fitted state lives in trailing
underscore attributes.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DataError
from .model import ModelConfig, build_model, prepare_samples
from .numerics.tensor import no_grad
from .pose.sequence import SegmentSample
from .training import (
    EvalReport,
    TrainConfig,
    apply_checkpoint,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .validation import check_segment_samples


class HandFormerClassifier(BaseEstimator):
    """Compositional action classifier over segment samples.

    Parameters mirror the architecture and schedule knobs; class counts and
    the frame-feature width are inferred from the data at fit time.
    """

    def __init__(self, d=64, t_n=2, d_t=32, joints=6, n_frames=15, stride=15,
                 k_blocks=8, attn_layers=2, use_rgb=True, use_tokenizer=True,
                 joint_identity_embeddings=False, wrist_relative=False,
                 lambda_verb=1.0, lambda_obj=1.0, lambda_ant=0.01,
                 epochs=50, batch_size=32, lr=0.005, momentum=0.9,
                 decay_epochs=(25, 40), decay_factor=0.1,
                 mode="multimodal", init_checkpoint=None, seed=0, verbose=False):
        self.d = d
        self.t_n = t_n
        self.d_t = d_t
        self.joints = joints
        self.n_frames = n_frames
        self.stride = stride
        self.k_blocks = k_blocks
        self.attn_layers = attn_layers
        self.use_rgb = use_rgb
        self.use_tokenizer = use_tokenizer
        self.joint_identity_embeddings = joint_identity_embeddings
        self.wrist_relative = wrist_relative
        self.lambda_verb = lambda_verb
        self.lambda_obj = lambda_obj
        self.lambda_ant = lambda_ant
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.decay_epochs = decay_epochs
        self.decay_factor = decay_factor
        self.mode = mode
        self.init_checkpoint = init_checkpoint
        self.seed = seed
        self.verbose = verbose

    # -- fitting -----------------------------------------------------------

    def _model_config(self, n_actions, n_verbs, n_objects, d_f) -> ModelConfig:
        use_rgb = self.use_rgb and self.mode != "pose_only_pretrain"
        return ModelConfig(
            d=self.d, t_n=self.t_n, d_t=self.d_t, joints=self.joints,
            n_frames=self.n_frames, stride=self.stride, k_blocks=self.k_blocks,
            d_f=d_f if d_f is not None else 16,
            n_actions=n_actions, n_verbs=n_verbs, n_objects=n_objects,
            attn_layers=self.attn_layers, use_rgb=use_rgb,
            use_tokenizer=self.use_tokenizer and use_rgb,
            joint_identity_embeddings=self.joint_identity_embeddings,
            wrist_relative=self.wrist_relative,
            lambda_verb=self.lambda_verb, lambda_obj=self.lambda_obj,
            lambda_ant=self.lambda_ant,
        )

    def fit(self, samples: Sequence[SegmentSample], y=None,
            eval_samples: Optional[Sequence[SegmentSample]] = None,
            out_dir: Optional[str] = None) -> "HandFormerClassifier":
        """Train on segment samples (labels ride inside the samples)."""
        require_features = self.use_rgb and self.mode != "pose_only_pretrain"
        n_actions, n_verbs, n_objects, d_f = check_segment_samples(
            samples, require_features=require_features
        )
        cfg = self._model_config(n_actions, n_verbs, n_objects, d_f)
        tc = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            momentum=self.momentum, decay_epochs=tuple(self.decay_epochs),
            decay_factor=self.decay_factor, seed=self.seed, mode=self.mode,
            init_checkpoint=self.init_checkpoint, out_dir=out_dir,
            log=print if self.verbose else None,
        )
        result = train(samples, cfg, tc, eval_samples=eval_samples)
        self.net_ = result.net
        self.config_ = result.net.cfg
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.best_metric_ = result.best_metric
        return self

    def _require_fitted(self):
        if not hasattr(self, "net_"):
            raise DataError("estimator is not fitted; call fit() or load()")

    # -- inference ---------------------------------------------------------

    def _forward(self, samples: Sequence[SegmentSample]):
        self._require_fitted()
        data = prepare_samples(list(samples), self.config_)
        with no_grad():
            out = self.net_.forward_prepared(data, np.arange(len(data)))
        return out, data

    def predict(self, samples: Sequence[SegmentSample]) -> np.ndarray:
        """Action class ids from the dedicated action head."""
        out, _ = self._forward(samples)
        return out.logits_action.data.argmax(axis=1)

    def predict_parts(self, samples: Sequence[SegmentSample]):
        """(action, verb, object) predictions as three arrays."""
        out, _ = self._forward(samples)
        return (out.logits_action.data.argmax(axis=1),
                out.logits_verb.data.argmax(axis=1),
                out.logits_obj.data.argmax(axis=1))

    def score(self, samples: Sequence[SegmentSample], y=None) -> float:
        """Top-1 action accuracy in [0, 1]."""
        preds = self.predict(samples)
        truth = np.array([s.action for s in samples])
        return float((preds == truth).mean())

    def evaluate(self, samples: Sequence[SegmentSample]) -> EvalReport:
        self._require_fitted()
        data = prepare_samples(list(samples), self.config_)
        return evaluate(self.net_, data)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        self._require_fitted()
        save_checkpoint(self.net_, path)

    def load(self, path, n_actions: int, n_verbs: int, n_objects: int,
             d_f: Optional[int] = None) -> "HandFormerClassifier":
        """Restore weights into a freshly built model of matching shape."""
        cfg = self._model_config(n_actions, n_verbs, n_objects, d_f)
        net = build_model(cfg, seed=self.seed)
        apply_checkpoint(net, load_checkpoint(path))
        self.net_ = net
        self.config_ = cfg
        self.history_ = []
        return self
