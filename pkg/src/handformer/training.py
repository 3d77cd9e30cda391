"""Loss composition, the training loop, evaluation, and checkpoint files.

Training is deterministic given the seed: initialization, shuffling, and
batch reduction all draw from seeded generators, and checkpoints carry no
timestamps, so equal seeds give bit-identical runs.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, NumericsError
from .frames import FrameFeatureProvider
from .model import (
    HandFormerNet,
    ModelConfig,
    ModelOutput,
    PreparedData,
    build_model,
    prepare_samples,
)
from .numerics import functional as F
from .numerics.layers import Linear
from .numerics.optim import SgdMomentum
from .numerics.tensor import Tensor, no_grad
from .pose.sequence import SegmentSample

METRICS_HEADER = "epoch,l_cls,l_verb,l_obj,l_ant,total,action_acc,verb_acc,object_acc"


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

@dataclass
class LossBreakdown:
    l_cls: float
    l_verb: float
    l_obj: float
    l_ant: float
    lambda_verb: float
    lambda_obj: float
    lambda_ant: float
    total: float = field(init=False)

    def __post_init__(self):
        # plain Python floats keep reprs clean in the metrics CSV
        self.l_cls = float(self.l_cls)
        self.l_verb = float(self.l_verb)
        self.l_obj = float(self.l_obj)
        self.l_ant = float(self.l_ant)
        self.total = (self.l_cls + self.lambda_verb * self.l_verb
                      + self.lambda_obj * self.l_obj + self.lambda_ant * self.l_ant)


def anticipation_loss(posergb_feats: Tensor, rgb_feats: Tensor, ant_head: Linear,
                      fixed_targets: Optional[np.ndarray] = None) -> Tensor:
    """L1 gap between projected shared-space features and the next frame feature.

    Accepts [K, d] (single segment: plain sum over k=1..K-1) or [B, K, d]
    (batch: per-segment sums averaged). Targets are detached; no gradient
    reaches them. ``fixed_targets`` substitutes a constant [.., K-1, d]
    target array, which gradient checks need so the finite-difference loss
    matches the stop-gradient semantics.
    """
    single = posergb_feats.ndim == 2
    if single:
        posergb_feats = F.reshape(posergb_feats, (1, *posergb_feats.shape))
        rgb_feats = F.reshape(rgb_feats, (1, *rgb_feats.shape))
    B, K, d = posergb_feats.shape
    if rgb_feats.shape != (B, K, d):
        raise DataError("anticipation inputs must have matching [.., K, d] shapes")
    if K < 2:
        return Tensor(np.zeros((), dtype=posergb_feats.data.dtype))
    pred = ant_head(F.narrow(posergb_feats, 1, 0, K - 1))
    if fixed_targets is not None:
        target = Tensor(np.asarray(fixed_targets, dtype=posergb_feats.data.dtype))
    else:
        target = F.narrow(rgb_feats, 1, 1, K - 1).detach()
    gaps = F.tsum(F.absolute(pred - target), axis=(1, 2))  # [B]
    return F.tmean(gaps) if not single else F.tsum(gaps)


def compute_losses(out: ModelOutput, actions: np.ndarray, verbs: np.ndarray,
                   objects: np.ndarray, cfg: ModelConfig, mode: str,
                   ant_head: Optional[Linear] = None,
                   ant_targets: Optional[np.ndarray] = None) -> Tuple[Tensor, LossBreakdown]:
    """Total training loss tensor plus its float breakdown."""
    l_verb = F.cross_entropy_mean(out.logits_verb, verbs)
    if mode == "pose_only_pretrain":
        breakdown = LossBreakdown(0.0, float(l_verb.data), 0.0, 0.0, 1.0, 0.0, 0.0)
        return l_verb, breakdown
    l_cls = F.cross_entropy_mean(out.logits_action, actions)
    l_obj = F.cross_entropy_mean(out.logits_obj, objects)
    total = l_cls + F.scale(l_verb, cfg.lambda_verb) + F.scale(l_obj, cfg.lambda_obj)
    l_ant_value = 0.0
    if out.posergb is not None and cfg.lambda_ant != 0.0 and ant_head is not None:
        l_ant = anticipation_loss(out.posergb, out.rgb_proj, ant_head,
                                  fixed_targets=ant_targets)
        total = total + F.scale(l_ant, cfg.lambda_ant)
        l_ant_value = float(l_ant.data.reshape(()))
    breakdown = LossBreakdown(
        float(l_cls.data), float(l_verb.data), float(l_obj.data), l_ant_value,
        cfg.lambda_verb, cfg.lambda_obj, cfg.lambda_ant,
    )
    return total, breakdown


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    action_acc: float        # dedicated action head, percent
    verb_acc: float
    object_acc: float
    pair_action_acc: float   # (verb, object) readout composed into an action
    n_samples: int

    def as_row(self) -> str:
        return (f"action={self.action_acc:.2f} verb={self.verb_acc:.2f} "
                f"object={self.object_acc:.2f} pair={self.pair_action_acc:.2f}")


def evaluate(net: HandFormerNet, data: PreparedData, batch_size: int = 128) -> EvalReport:
    if len(data) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    n = len(data)
    action_hits = verb_hits = obj_hits = pair_hits = 0
    with no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(start + batch_size, n))
            out = net.forward_prepared(data, idx)
            pa = out.logits_action.data.argmax(axis=1)
            pv = out.logits_verb.data.argmax(axis=1)
            po = out.logits_obj.data.argmax(axis=1)
            action_hits += int((pa == data.actions[idx]).sum())
            verb_hits += int((pv == data.verbs[idx]).sum())
            obj_hits += int((po == data.objects[idx]).sum())
            pair = pv * net.cfg.n_objects + po
            pair_hits += int((pair == data.actions[idx]).sum())
    return EvalReport(
        action_acc=100.0 * action_hits / n,
        verb_acc=100.0 * verb_hits / n,
        object_acc=100.0 * obj_hits / n,
        pair_action_acc=100.0 * pair_hits / n,
        n_samples=n,
    )


def split_dataset(samples: Sequence[SegmentSample], test_fraction: float,
                  seed: int) -> Tuple[list, list]:
    """Deterministic per-action stratified split into (train, held-out)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0x5B11]))
    by_action: dict = {}
    for s in samples:
        by_action.setdefault(s.action, []).append(s)
    train, test = [], []
    for action in sorted(by_action):
        group = by_action[action]
        perm = rng.permutation(len(group))
        n_test = max(1, int(round(test_fraction * len(group)))) if len(group) > 1 else 0
        for pos, g_i in enumerate(perm):
            (test if pos < n_test else train).append(group[g_i])
    return train, test


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {np.dtype(np.float32): "f4", np.dtype(np.float64): "f8"}


def save_checkpoint(net: HandFormerNet, path) -> None:
    """Sectioned binary: text manifest (name dtype shape offset nbytes) + raw values."""
    entries = []
    blob = io.BytesIO()
    offset = 0
    for name, p in net.named_parameters():
        tag = _DTYPE_TAGS[p.data.dtype]
        raw = np.ascontiguousarray(p.data).astype(f"<{tag}").tobytes()
        shape = ",".join(str(int(s)) for s in p.data.shape) or "scalar"
        entries.append(f"{name} {tag} {shape} {offset} {len(raw)}")
        blob.write(raw)
        offset += len(raw)
    header = "\n".join([f"HFCK v1 PARAMS={len(entries)}", *entries, "DATA"]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(blob.getvalue())


def load_checkpoint(path) -> dict:
    raw = Path(path).read_bytes()
    sep = raw.find(b"DATA\n")
    if not raw.startswith(b"HFCK v1") or sep < 0:
        raise DataError(f"not a checkpoint file: {path}")
    lines = raw[:sep].decode("ascii").strip().splitlines()
    data = raw[sep + 5:]
    arrays = {}
    for line in lines[1:]:
        name, tag, shape_s, offset_s, nbytes_s = line.split(" ")
        offset, nbytes = int(offset_s), int(nbytes_s)
        shape = () if shape_s == "scalar" else tuple(int(x) for x in shape_s.split(","))
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=f"<{tag}").reshape(shape)
        arrays[name] = arr.astype(tag.replace("f4", "float32").replace("f8", "float64"))
    return arrays


def apply_checkpoint(net: HandFormerNet, arrays: dict,
                     sections: Optional[Sequence[str]] = None) -> List[str]:
    """Copy matching arrays into the net; returns the parameter names loaded."""
    loaded = []
    for name, p in net.named_parameters():
        if sections is not None and not any(name.startswith(s + ".") or name == s
                                            for s in sections):
            continue
        if name not in arrays:
            if sections is not None:
                raise DataError(f"checkpoint missing parameter {name!r} for requested sections")
            continue
        arr = arrays[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise DataError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape} vs model {p.data.shape}"
            )
        p.data[...] = arr.astype(p.data.dtype)
        loaded.append(name)
    if not loaded:
        raise DataError("checkpoint contained no matching parameters")
    return loaded


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    # 0.025 is the published large-data schedule; the desk-scale presets
    # shipped here are only stable at a smaller step (no warmup by design)
    lr: float = 0.005
    momentum: float = 0.9
    decay_epochs: Tuple[int, ...] = (25, 40)
    decay_factor: float = 0.1
    seed: int = 0
    mode: str = "multimodal"  # multimodal | pose_only_pretrain
    init_checkpoint: Optional[str] = None
    out_dir: Optional[str] = None
    log: Optional[Callable[[str], None]] = None


@dataclass
class TrainResult:
    net: HandFormerNet
    history: List[dict]
    best_epoch: int
    best_metric: float
    last_report: EvalReport


def _history_row(epoch: int, breakdown: LossBreakdown, report: EvalReport) -> dict:
    return {
        "epoch": epoch,
        "l_cls": breakdown.l_cls,
        "l_verb": breakdown.l_verb,
        "l_obj": breakdown.l_obj,
        "l_ant": breakdown.l_ant,
        "total": breakdown.total,
        "action_acc": float(report.action_acc),
        "verb_acc": float(report.verb_acc),
        "object_acc": float(report.object_acc),
    }


def write_metrics_csv(history: List[dict], path) -> None:
    lines = [METRICS_HEADER]
    for row in history:
        lines.append(
            f"{row['epoch']},{row['l_cls']!r},{row['l_verb']!r},{row['l_obj']!r},"
            f"{row['l_ant']!r},{row['total']!r},{row['action_acc']!r},"
            f"{row['verb_acc']!r},{row['object_acc']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def train(samples: Sequence[SegmentSample], model_cfg: ModelConfig, train_cfg: TrainConfig,
          eval_samples: Optional[Sequence[SegmentSample]] = None,
          provider: Optional[FrameFeatureProvider] = None) -> TrainResult:
    """Train on the sample list; deterministic for a fixed TrainConfig.seed."""
    if not samples:
        raise DataError("training needs a non-empty dataset")
    if train_cfg.mode not in ("multimodal", "pose_only_pretrain"):
        raise DataError(f"unknown training mode {train_cfg.mode!r}")
    log = train_cfg.log or (lambda line: None)

    cfg = model_cfg
    if train_cfg.mode == "pose_only_pretrain":
        cfg = replace(cfg, use_rgb=False, use_tokenizer=False)

    net = build_model(cfg, seed=train_cfg.seed)
    if train_cfg.init_checkpoint:
        arrays = load_checkpoint(train_cfg.init_checkpoint)
        loaded = apply_checkpoint(net, arrays, sections=["trajectory_encoder"])
        log(f"event=init_from_checkpoint params={len(loaded)}")

    prepared = prepare_samples(list(samples), cfg, provider)
    eval_prepared = (prepare_samples(list(eval_samples), cfg, provider)
                     if eval_samples else prepared)

    opt = SgdMomentum(net.parameters(), lr=train_cfg.lr, momentum=train_cfg.momentum,
                      decay_epochs=train_cfg.decay_epochs, decay_factor=train_cfg.decay_factor)
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=[train_cfg.seed, 0x5417])
    )

    out_dir = Path(train_cfg.out_dir) if train_cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    history: List[dict] = []
    best_metric = -1.0
    best_epoch = 0
    last_report: Optional[EvalReport] = None
    n = len(prepared)
    for epoch in range(1, train_cfg.epochs + 1):
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(4)
        seen = 0
        for start in range(0, n, train_cfg.batch_size):
            idx = perm[start : start + train_cfg.batch_size]
            out = net.forward_prepared(prepared, idx)
            loss, breakdown = compute_losses(
                out, prepared.actions[idx], prepared.verbs[idx], prepared.objects[idx],
                cfg, train_cfg.mode, ant_head=net.anticipation_head,
            )
            if not np.isfinite(breakdown.total):
                raise NumericsError(
                    f"non-finite loss at epoch {epoch}, batch {start // train_cfg.batch_size}"
                )
            net.zero_grad()
            loss.backward()
            opt.step(epoch)
            sums += np.array([breakdown.l_cls, breakdown.l_verb,
                              breakdown.l_obj, breakdown.l_ant]) * len(idx)
            seen += len(idx)
        mean = sums / seen
        epoch_breakdown = LossBreakdown(mean[0], mean[1], mean[2], mean[3],
                                        cfg.lambda_verb if train_cfg.mode == "multimodal" else 1.0,
                                        cfg.lambda_obj if train_cfg.mode == "multimodal" else 0.0,
                                        cfg.lambda_ant if train_cfg.mode == "multimodal" else 0.0)
        report = evaluate(net, eval_prepared)
        last_report = report
        history.append(_history_row(epoch, epoch_breakdown, report))
        metric = report.verb_acc if train_cfg.mode == "pose_only_pretrain" else report.action_acc
        log(f"event=epoch epoch={epoch} total={epoch_breakdown.total:.6f} "
            f"lr={opt.lr:.6g} {report.as_row()}")
        if out_dir:
            save_checkpoint(net, out_dir / "last.hfck")
            write_metrics_csv(history, out_dir / "metrics.csv")
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            if out_dir:
                save_checkpoint(net, out_dir / "best.hfck")
    return TrainResult(net=net, history=history, best_epoch=best_epoch,
                       best_metric=best_metric, last_report=last_report)
