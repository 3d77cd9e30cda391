#!/usr/bin/env python3
"""Convert third-party pose dumps into POSE v1 / label files.

Supported source formats:

  json-keypoints   one JSON file per segment:
                   {"fps": 60.0,
                    "frames": [{"left": [[x,y,z], ...], "right": [...]},
                               ...],
                    "labels": {"action": 3, "verb": 1, "object": 0}}
                   labels are optional.

  framedump        a directory per segment with one text file per frame
                   (frame index in the file name, e.g. 000017.txt), each
                   carrying one "x y z" line per joint, left hand first.

The manifest (TOML) declares the source format, the unit scale into
meters, the frame rate, the target joint count, and the joint remapping
table. Converters never guess units: scale is mandatory.

Usage:
  convert.py --format json-keypoints --manifest m.toml --out dir SOURCE...

Exit codes: 0 all sources converted, 1 any source failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

try:
    import tomllib as toml_reader
except ImportError:  # Python < 3.11
    import tomli as toml_reader

TARGET_JOINT_COUNTS = (6, 11, 21)


class ConversionError(Exception):
    pass


@dataclass
class ConversionManifest:
    source_format: str
    scale: float
    fps: float
    joints: int
    remap: Dict[int, int]  # source joint index -> artifact joint index

    def __post_init__(self):
        if self.scale <= 0:
            raise ConversionError(f"manifest scale must be positive, got {self.scale}")
        if self.fps <= 0:
            raise ConversionError(f"manifest fps must be positive, got {self.fps}")
        if self.joints not in TARGET_JOINT_COUNTS:
            raise ConversionError(
                f"manifest joints must be one of {TARGET_JOINT_COUNTS}, got {self.joints}"
            )
        targets = sorted(self.remap.values())
        if targets != list(range(self.joints)):
            raise ConversionError(
                "manifest remap must be a bijection onto joint indices "
                f"0..{self.joints - 1}; got targets {targets}"
            )

    def inverse(self) -> "ConversionManifest":
        return ConversionManifest(
            source_format=self.source_format,
            scale=1.0 / self.scale,
            fps=self.fps,
            joints=self.joints,
            remap={v: k for k, v in self.remap.items()},
        )


def load_manifest(path: Path) -> ConversionManifest:
    with open(path, "rb") as fh:
        raw = toml_reader.load(fh)
    try:
        remap = {int(k): int(v) for k, v in raw["remap"].items()}
        return ConversionManifest(
            source_format=raw["format"],
            scale=float(raw["scale"]),
            fps=float(raw["fps"]),
            joints=int(raw["joints"]),
            remap=remap,
        )
    except KeyError as exc:
        raise ConversionError(f"manifest {path} missing key {exc}")


# ---------------------------------------------------------------------------
# source parsing: frames as nested lists [T][2][J_src][3]
# ---------------------------------------------------------------------------

def parse_json_keypoints(path: Path) -> Tuple[list, float, Optional[tuple]]:
    data = json.loads(path.read_text())
    if "frames" not in data:
        raise ConversionError(f"{path}: no 'frames' key")
    frames = []
    for i, frame in enumerate(data["frames"], start=1):
        try:
            frames.append([frame["left"], frame["right"]])
        except (KeyError, TypeError):
            raise ConversionError(f"{path}: frame {i} lacks left/right hand arrays")
    labels = None
    if "labels" in data:
        lab = data["labels"]
        labels = (int(lab["action"]), int(lab["verb"]), int(lab["object"]))
    return frames, float(data.get("fps", 0.0)), labels


def parse_framedump(path: Path) -> Tuple[list, float, Optional[tuple]]:
    if not path.is_dir():
        raise ConversionError(f"{path}: framedump source must be a directory")
    files = sorted(path.glob("*.txt"), key=lambda p: int(p.stem))
    if not files:
        raise ConversionError(f"{path}: no frame files (*.txt)")
    frames = []
    for fp in files:
        rows = [ln.split() for ln in fp.read_text().splitlines() if ln.strip()]
        if len(rows) % 2 != 0:
            raise ConversionError(f"{fp}: odd joint-row count {len(rows)}")
        half = len(rows) // 2
        try:
            pts = [[float(a), float(b), float(c)] for a, b, c in rows]
        except ValueError:
            raise ConversionError(f"{fp}: unparseable coordinate row")
        frames.append([pts[:half], pts[half:]])
    return frames, 0.0, None


PARSERS = {
    "json-keypoints": parse_json_keypoints,
    "framedump": parse_framedump,
}


# ---------------------------------------------------------------------------
# conversion core
# ---------------------------------------------------------------------------

def remap_frames(frames: list, manifest: ConversionManifest, source_name: str) -> list:
    """Apply the joint remap and unit scale; validates finiteness.

    Returns [T][2][J][3] nested lists in artifact joint order.
    """
    out = []
    expected_src = None
    for t, hands in enumerate(frames, start=1):
        if len(hands) != 2:
            raise ConversionError(f"{source_name}: frame {t} has {len(hands)} hands, expected 2")
        new_hands = []
        for hand in hands:
            if expected_src is None:
                expected_src = len(hand)
                for src in manifest.remap:
                    if not 0 <= src < expected_src:
                        raise ConversionError(
                            f"{source_name}: unmapped joint: manifest references source "
                            f"joint {src} but frames carry {expected_src} joints"
                        )
            if len(hand) != expected_src:
                raise ConversionError(
                    f"{source_name}: frame {t} joint count {len(hand)} != {expected_src}"
                )
            new_hand = [None] * manifest.joints
            for src, dst in manifest.remap.items():
                x, y, z = hand[src]
                for axis_name, v in zip("xyz", (x, y, z)):
                    if not math.isfinite(v):
                        raise ConversionError(
                            f"{source_name}: non-finite value at frame {t}, "
                            f"source joint {src}, axis {axis_name}"
                        )
                new_hand[dst] = [x * manifest.scale, y * manifest.scale, z * manifest.scale]
            new_hands.append(new_hand)
        out.append(new_hands)
    return out


def write_pose_file(frames: list, fps: float, path: Path) -> None:
    """Emit the line-oriented POSE v1 text format."""
    T = len(frames)
    J = len(frames[0][0])
    lines = [f"POSE v1 J={J} C=3 FPS={fps!r} HANDS=2 FRAMES={T}"]
    for hands in frames:
        flat = []
        for hand in hands:
            for joint in hand:
                flat.extend(repr(float(v)) for v in joint)
        lines.append(" ".join(flat))
    path.write_text("\n".join(lines) + "\n")


@dataclass
class ConversionReport:
    converted: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)


def convert(sources: List[Path], manifest: ConversionManifest, out_dir: Path) -> ConversionReport:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ConversionReport()
    label_rows = []
    parser = PARSERS[manifest.source_format]
    for source in sources:
        try:
            frames, fps, labels = parser(source)
            if not frames:
                raise ConversionError(f"{source}: empty segment")
            if len(frames) < 2:
                raise ConversionError(f"{source}: frame-count mismatch: need >= 2 frames")
            fps = fps or manifest.fps
            remapped = remap_frames(frames, manifest, str(source))
            pose_path = out_dir / f"{source.stem}.pose"
            write_pose_file(remapped, fps, pose_path)
            report.converted.append(str(pose_path))
            if labels is not None:
                label_rows.append((source.stem, *labels))
        except ConversionError as exc:
            report.errors.append(str(exc))
    if label_rows:
        rows = [f"{sid} {a} {v} {o}" for sid, a, v, o in label_rows]
        (out_dir / "labels.txt").write_text("\n".join(rows) + "\n")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Convert third-party pose dumps into POSE v1 files."
    )
    parser.add_argument("--format", required=True, choices=sorted(PARSERS),
                        help="source format id (must match the manifest)")
    parser.add_argument("--manifest", required=True, help="TOML conversion manifest")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("sources", nargs="+", help="source files or directories")
    args = parser.parse_args(argv)

    try:
        manifest = load_manifest(Path(args.manifest))
    except (ConversionError, OSError, toml_reader.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if manifest.source_format != args.format:
        print(f"error: --format {args.format} but manifest declares "
              f"{manifest.source_format!r}", file=sys.stderr)
        return 1

    report = convert([Path(s) for s in args.sources], manifest, Path(args.out))
    for path in report.converted:
        print(f"converted={path}")
    for err in report.errors:
        print(f"error: {err}", file=sys.stderr)
    return 1 if report.errors else 0


if __name__ == "__main__":
    sys.exit(main())
