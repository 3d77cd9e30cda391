"""Command-line entry point.

Subcommands: gen-data, train, pretrain-traj, eval, gradcheck, flops,
analyze. Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
failure. All randomness flows from --seed (fallback: HANDFORMER_SEED).
Events are logged one per line as key=value pairs on stdout.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import compute_profiles, export_profile_csv, sample_clip_ids
from .errors import DataError, HandFormerError, NumericsError
from .flops import REFERENCE_TABLES, count_model_flops
from .gradcheck_model import full_model_gradcheck
from .model import ModelConfig, PRESETS, preset_config
from .pose import (
    Dataset,
    generate_coupled_clip,
    generate_pinned_clip,
    generate_synthetic_dataset,
    load_frame_features,
    load_labels,
    load_pose_sequence,
    write_frame_features,
    write_labels,
    write_pose_sequence,
)
from .pose.sequence import SegmentSample
from .training import (
    TrainConfig,
    apply_checkpoint,
    evaluate,
    load_checkpoint,
    split_dataset,
    train,
)
from .model import build_model, prepare_samples

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def log(**kv) -> None:
    print(" ".join(f"{k}={v}" for k, v in kv.items()))


def default_seed() -> int:
    return int(os.environ.get("HANDFORMER_SEED", "0"))


# ---------------------------------------------------------------------------
# dataset directory layout
# ---------------------------------------------------------------------------

def save_dataset(ds: Dataset, out_dir: Path) -> None:
    poses = out_dir / "poses"
    feats = out_dir / "features"
    poses.mkdir(parents=True, exist_ok=True)
    feats.mkdir(parents=True, exist_ok=True)
    label_rows = []
    ids = []
    for s in ds.samples:
        write_pose_sequence(s.pose, poses / f"{s.sample_id}.pose")
        write_frame_features(s.frame_features, feats / f"{s.sample_id}.feat")
        label_rows.append((s.sample_id, s.action, s.verb, s.obj))
        ids.append(s.sample_id)
    write_labels(label_rows, out_dir / "labels.txt")
    meta = {
        "format": "handformer-dataset-v1",
        "n_verbs": ds.n_verbs,
        "n_objects": ds.n_objects,
        "d_f": ds.d_f,
        "joints": ds.joints,
        "samples": ids,
    }
    (out_dir / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(data_dir: Path) -> Dataset:
    meta_path = data_dir / "dataset.json"
    if not meta_path.exists():
        raise DataError(f"no dataset.json in {data_dir}")
    meta = json.loads(meta_path.read_text())
    labels = load_labels(data_dir / "labels.txt")
    samples = []
    for sid in meta["samples"]:
        pose = load_pose_sequence(data_dir / "poses" / f"{sid}.pose")
        feat_path = data_dir / "features" / f"{sid}.feat"
        features = load_frame_features(feat_path) if feat_path.exists() else {}
        action, verb, obj = labels[sid]
        samples.append(SegmentSample(sid, pose, features, action, verb, obj))
    return Dataset(samples=samples, n_verbs=meta["n_verbs"], n_objects=meta["n_objects"],
                   d_f=meta["d_f"], joints=meta.get("joints", 6))


# ---------------------------------------------------------------------------
# shared model/config flags
# ---------------------------------------------------------------------------

def add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), default="tiny",
                   help="architecture preset")
    p.add_argument("--d", type=int, help="embedding width")
    p.add_argument("--tn", type=int, help="temporal transformer layers")
    p.add_argument("--dt", type=int, help="trajectory token width")
    p.add_argument("--joints", type=int, choices=(6, 11, 21), help="joints per hand")
    p.add_argument("--n", type=int, help="pose frames per micro-action")
    p.add_argument("--r", type=int, help="micro-action window stride")
    p.add_argument("--k", type=int, help="number of micro-actions")
    p.add_argument("--tprime", type=int,
                   help="interpolated length; must equal (k-1)*r + n")
    p.add_argument("--attn-layers", type=int, help="encoder attention rounds")
    p.add_argument("--pose-only", action="store_true",
                   help="drop the frame modality")
    p.add_argument("--tokenizer", dest="tokenizer", action="store_true", default=None,
                   help="force the multimodal tokenizer on")
    p.add_argument("--no-tokenizer", dest="tokenizer", action="store_false",
                   help="bypass the multimodal tokenizer")
    p.add_argument("--wrist-relative", action="store_true",
                   help="express joint trajectories relative to the wrist")
    p.add_argument("--joint-identity-embeddings", action="store_true",
                   help="add learned per-joint embeddings to local tokens")
    p.add_argument("--lambda1", type=float, help="verb loss weight")
    p.add_argument("--lambda2", type=float, help="object loss weight")
    p.add_argument("--lambda3", type=float, help="anticipation loss weight")


def model_config_from_args(args, ds: Optional[Dataset] = None) -> ModelConfig:
    if args.pose_only and args.tokenizer is True:
        raise DataError("invalid flag combination: --pose-only conflicts with --tokenizer "
                        "(the tokenizer needs the frame modality)")
    cfg = preset_config(args.preset)
    over = {}
    for flag, field_name in [("d", "d"), ("tn", "t_n"), ("dt", "d_t"), ("joints", "joints"),
                             ("n", "n_frames"), ("r", "stride"), ("k", "k_blocks"),
                             ("attn_layers", "attn_layers"),
                             ("lambda1", "lambda_verb"), ("lambda2", "lambda_obj"),
                             ("lambda3", "lambda_ant")]:
        value = getattr(args, flag)
        if value is not None:
            over[field_name] = value
    if args.pose_only:
        over["use_rgb"] = False
        over["use_tokenizer"] = False
    elif args.tokenizer is not None:
        over["use_tokenizer"] = args.tokenizer
    if args.wrist_relative:
        over["wrist_relative"] = True
    if args.joint_identity_embeddings:
        over["joint_identity_embeddings"] = True
    cfg = replace(cfg, **over)
    if args.tprime is not None and args.tprime != cfg.t_prime:
        raise DataError(
            f"invalid flag combination: --tprime {args.tprime} but --k/--r/--n imply "
            f"(k-1)*r + n = {cfg.t_prime}"
        )
    if ds is not None:
        cfg = replace(cfg, n_verbs=ds.n_verbs, n_objects=ds.n_objects,
                      n_actions=ds.n_verbs * ds.n_objects, d_f=ds.d_f)
    return cfg


def add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.005,
                   help="learning rate (0.025 is the published large-data schedule)")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--decay-epochs", default="25,40",
                   help="comma-separated epochs where lr drops")
    p.add_argument("--decay-factor", type=float, default=0.1)
    p.add_argument("--split", type=float, default=0.2,
                   help="held-out fraction for per-epoch evaluation")
    p.add_argument("--init-checkpoint", help="warm-start the trajectory encoder")


def run_training(args, mode: str) -> int:
    ds = load_dataset(Path(args.data))
    cfg = model_config_from_args(args, ds)
    train_samples, eval_samples = split_dataset(ds.samples, args.split, args.seed)
    if not eval_samples:
        eval_samples = None
    decay = tuple(int(e) for e in str(args.decay_epochs).split(",") if e.strip())
    tc = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        momentum=args.momentum, decay_epochs=decay, decay_factor=args.decay_factor,
        seed=args.seed, mode=mode, init_checkpoint=args.init_checkpoint,
        out_dir=args.out, log=print,
    )
    log(event="train_start", mode=mode, samples=len(train_samples),
        eval_samples=len(eval_samples or []), seed=args.seed, preset=args.preset)
    result = train(train_samples, cfg, tc, eval_samples=eval_samples)
    log(event="train_done", best_epoch=result.best_epoch,
        best_metric=f"{result.best_metric:.2f}",
        last_action_acc=f"{result.last_report.action_acc:.2f}",
        last_verb_acc=f"{result.last_report.verb_acc:.2f}",
        last_object_acc=f"{result.last_report.object_acc:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    ds = generate_synthetic_dataset(
        n_verbs=args.verbs, n_objects=args.objects, per_class=args.per_class,
        noise=args.noise, seed=args.seed, joints=args.joints, d_f=args.d_f,
        length=args.length, feature_stride=args.feature_stride,
    )
    out_dir = Path(args.out)
    save_dataset(ds, out_dir)
    log(event="gen_data", out=str(out_dir), samples=len(ds.samples),
        verbs=args.verbs, objects=args.objects, seed=args.seed)
    return EXIT_OK


def cmd_train(args) -> int:
    # pose-only training still supervises all class tokens; only the
    # dedicated pretraining command restricts supervision to the verb loss
    return run_training(args, "multimodal")


def cmd_pretrain(args) -> int:
    return run_training(args, "pose_only_pretrain")


def cmd_eval(args) -> int:
    ds = load_dataset(Path(args.data))
    cfg = model_config_from_args(args, ds)
    net = build_model(cfg, seed=args.seed)
    apply_checkpoint(net, load_checkpoint(args.checkpoint))
    if args.split > 0:
        _, samples = split_dataset(ds.samples, args.split, args.seed)
    else:
        samples = ds.samples
    data = prepare_samples(samples, cfg)
    report = evaluate(net, data)
    log(event="eval", checkpoint=args.checkpoint, samples=report.n_samples,
        action_acc=f"{report.action_acc:.2f}", verb_acc=f"{report.verb_acc:.2f}",
        object_acc=f"{report.object_acc:.2f}",
        pair_action_acc=f"{report.pair_action_acc:.2f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = full_model_gradcheck(seed=args.seed, eps=args.eps, tol=args.tol,
                                  preset=args.preset)
    worst_name, worst = report.worst()
    log(event="gradcheck", preset=args.preset, params=len(report.per_param),
        max_rel_err=f"{report.max_rel_err:.3e}", worst=worst_name, tol=report.tol)
    if not report.passed:
        log(event="gradcheck_failed", max_rel_err=f"{worst:.3e}")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_flops(args) -> int:
    if args.table is not None:
        ledger = REFERENCE_TABLES[args.table]()
        print(ledger.format())
        log(event="flops", table=args.table, total_gflops=f"{ledger.total:.2f}")
        return EXIT_OK
    cfg = model_config_from_args(args)
    if args.actions is not None:
        cfg = replace(cfg, n_actions=args.actions)
    if args.verbs is not None:
        cfg = replace(cfg, n_verbs=args.verbs)
    if args.objects is not None:
        cfg = replace(cfg, n_objects=args.objects)
    ledger = count_model_flops(cfg)
    print(ledger.format())
    log(event="flops", preset=args.preset, total_gflops=f"{ledger.total:.2f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    clips = []
    if args.contrast:
        for i in range(args.contrast):
            clips.append((f"hand_{i:04d}", generate_coupled_clip(args.seed + i)))
            clips.append((f"body_{i:04d}", generate_pinned_clip(args.seed + i)))
    elif args.input:
        paths = sorted(Path(args.input).glob("**/*.pose"))
        if not paths:
            raise DataError(f"no .pose files under {args.input}")
        ids = {p.stem: p for p in paths}
        picked = sample_clip_ids(list(ids), args.sample, args.seed) if args.sample else sorted(ids)
        clips = [(cid, load_pose_sequence(ids[cid])) for cid in picked]
    else:
        raise DataError("analyze needs --input or --contrast")
    profiles = compute_profiles(clips, threads=args.threads)
    export_profile_csv(profiles, args.out, summary_path=args.summary)
    rs = [p.r for p in profiles]
    log(event="analyze", clips=len(profiles), mean_r=f"{float(np.mean(rs)):.4f}",
        out=args.out)
    if args.contrast:
        hand = [p.r for p in profiles if p.clip_id.startswith("hand_")]
        body = [p.r for p in profiles if p.clip_id.startswith("body_")]
        log(event="contrast", hand_mean_r=f"{float(np.mean(hand)):.4f}",
            body_mean_r=f"{float(np.mean(body)):.4f}",
            gap=f"{float(np.mean(hand) - np.mean(body)):.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handformer",
        description="Multimodal hand-action recognition: dense pose trajectories "
                    "plus sparse frame features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--verbs", type=int, default=8)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--joints", type=int, choices=(6, 11, 21), default=6)
    p.add_argument("--d-f", type=int, default=16, help="frame feature width")
    p.add_argument("--length", type=int, default=120, help="nominal clip length")
    p.add_argument("--feature-stride", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the multimodal model")
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain-traj", help="pose-only verb pretraining of the trajectory encoder")
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_model_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", type=float, default=0.2,
                   help="evaluate the held-out fraction (0 = whole dataset)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--preset", choices=("tiny",), default="tiny",
                   help="gradcheck model size")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flops", help="FLOPs accounting")
    p.add_argument("--table", choices=sorted(REFERENCE_TABLES),
                   help="print a published reference table")
    add_model_flags(p)
    p.add_argument("--actions", type=int, help="action classes for head counting")
    p.add_argument("--verbs", type=int, help="verb classes for head counting")
    p.add_argument("--objects", type=int, help="object classes for head counting")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("analyze", help="joint-activity statistics over pose clips")
    p.add_argument("--input", help="directory of .pose files")
    p.add_argument("--contrast", type=int,
                   help="generate N coupled-hand and N pinned-joint clips instead")
    p.add_argument("--sample", type=int, help="seeded subsample size")
    p.add_argument("--out", required=True, help="per-timestep CSV path")
    p.add_argument("--summary", help="per-clip summary CSV path")
    p.set_defaults(func=cmd_analyze)

    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, default=default_seed(),
                        help="master RNG seed (env fallback: HANDFORMER_SEED)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker cap for parallel sections")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericsError as exc:
        log(event="error", kind="numerical", message=str(exc))
        return EXIT_NUMERIC
    except DataError as exc:
        log(event="error", kind="data", message=str(exc))
        return EXIT_DATA
    except HandFormerError as exc:
        log(event="error", kind="general", message=str(exc))
        return EXIT_DATA
    except FileNotFoundError as exc:
        log(event="error", kind="data", message=str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
