"""Line-oriented text formats for poses, frame features, and labels.

POSE v1: header then one line of 2*J*C reals per frame (hand-major,
joint-major, coordinate-minor). Values are written with shortest
round-tripping decimal repr, so write -> read is bit-exact.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable

import numpy as np

from ..errors import DataError, ExtentMismatchError, MalformedHeaderError, NonFiniteValueError
from .layout import layout_for
from .sequence import PoseSequence


def _fmt(x: float) -> str:
    return repr(float(x))


def write_pose_sequence(seq: PoseSequence, path) -> None:
    T, _, J, C = seq.frames.shape
    lines = [f"POSE v1 J={J} C={C} FPS={_fmt(seq.fps)} HANDS=2 FRAMES={T}"]
    flat = seq.frames.reshape(T, -1)
    for row in flat:
        lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header(line: str) -> dict:
    parts = line.split()
    if len(parts) != 7 or parts[0] != "POSE" or parts[1] != "v1":
        raise MalformedHeaderError(f"malformed header: {line!r}")
    fields = {}
    for part in parts[2:]:
        if "=" not in part:
            raise MalformedHeaderError(f"malformed header field: {part!r}")
        key, value = part.split("=", 1)
        fields[key] = value
    try:
        return {
            "J": int(fields["J"]),
            "C": int(fields["C"]),
            "FPS": float(fields["FPS"]),
            "HANDS": int(fields["HANDS"]),
            "FRAMES": int(fields["FRAMES"]),
        }
    except (KeyError, ValueError) as exc:
        raise MalformedHeaderError(f"malformed header: {line!r}") from exc


def load_pose_sequence(path) -> PoseSequence:
    """Parse a POSE v1 file; rejects non-finite values and extent mismatches."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeaderError(f"empty pose file: {path}")
    header = _parse_header(lines[0])
    J, C, T = header["J"], header["C"], header["FRAMES"]
    if header["HANDS"] != 2:
        raise MalformedHeaderError(f"expected HANDS=2, got {header['HANDS']}")
    body = lines[1:]
    if len(body) != T:
        raise ExtentMismatchError(f"header declares {T} frames, file has {len(body)}")
    width = 2 * J * C
    frames = np.empty((T, width), dtype=np.float64)
    for t, line in enumerate(body):
        parts = line.split()
        if len(parts) != width:
            raise ExtentMismatchError(
                f"frame {t + 1}: expected {width} values (2x{J}x{C}), got {len(parts)}"
            )
        try:
            frames[t] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"frame {t + 1}: unparseable value") from exc
    if not np.isfinite(frames).all():
        raise NonFiniteValueError(f"non-finite coordinates in {path}")
    return PoseSequence(frames.reshape(T, 2, J, C), header["FPS"], layout_for(J))


def write_frame_features(features: Dict[int, np.ndarray], path) -> None:
    items = sorted(features.items())
    if not items:
        raise DataError("cannot write an empty feature map")
    d_f = len(items[0][1])
    lines = [f"FEAT v1 D={d_f}"]
    for idx, vec in items:
        if len(vec) != d_f:
            raise ExtentMismatchError(f"feature {idx}: dim {len(vec)} != header dim {d_f}")
        lines.append(str(int(idx)) + " " + " ".join(_fmt(v) for v in vec))
    Path(path).write_text("\n".join(lines) + "\n")


def load_frame_features(path) -> Dict[int, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeaderError(f"empty feature file: {path}")
    parts = lines[0].split()
    if len(parts) != 3 or parts[0] != "FEAT" or parts[1] != "v1" or not parts[2].startswith("D="):
        raise MalformedHeaderError(f"malformed feature header: {lines[0]!r}")
    d_f = int(parts[2][2:])
    out: Dict[int, np.ndarray] = {}
    for line in lines[1:]:
        fields = line.split()
        if len(fields) != d_f + 1:
            raise ExtentMismatchError(f"feature row has {len(fields) - 1} values, expected {d_f}")
        idx = int(fields[0])
        vec = np.array([float(f) for f in fields[1:]], dtype=np.float64)
        if not np.isfinite(vec).all():
            raise NonFiniteValueError(f"non-finite feature values at frame {idx}")
        out[idx] = vec
    return out


def write_labels(rows: Iterable[tuple], path) -> None:
    """Rows of (sample_id, action, verb, object)."""
    lines = [f"{sid} {int(a)} {int(v)} {int(o)}" for sid, a, v, o in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def load_labels(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"label line needs 4 fields: {line!r}")
        out[parts[0]] = (int(parts[1]), int(parts[2]), int(parts[3]))
    return out
