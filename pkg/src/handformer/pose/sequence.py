"""Pose sequences: interpolation, micro-action factorization, wrist 6D pose."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import DataError, NonFiniteValueError
from .layout import JointLayout, layout_for


@dataclass
class PoseSequence:
    """Time-major two-hand joint coordinates plus capture metadata.

    frames: [T, 2, J, C] array, hands ordered (left, right), meters for C=3
    (pixels for C=2). The layout names the J per-hand joints, wrist first.
    """

    frames: np.ndarray
    fps: float
    layout: JointLayout

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[1] != 2:
            raise DataError(f"pose frames must be [T, 2, J, C], got {self.frames.shape}")
        if self.frames.shape[3] not in (2, 3):
            raise DataError(f"coordinate dim must be 2 or 3, got {self.frames.shape[3]}")
        if len(self.frames) < 2:
            raise DataError("a pose sequence needs at least 2 frames")
        if self.layout.joints != self.frames.shape[2]:
            raise DataError(
                f"layout has {self.layout.joints} joints but frames carry {self.frames.shape[2]}"
            )
        if not np.isfinite(self.frames).all():
            raise NonFiniteValueError("pose coordinates contain NaN/Inf")
        if self.fps <= 0:
            raise DataError("fps must be positive")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def joints(self) -> int:
        return self.frames.shape[2]

    @property
    def coord_dim(self) -> int:
        return self.frames.shape[3]


@dataclass
class MicroAction:
    """One factorized block: a dense pose window plus its sampled frame index.

    ``start_frame`` is the 1-based index of the window's first pose frame.
    """

    pose_block: np.ndarray  # [N, 2, J, C]
    rgb_frame_index: Optional[int]
    block_index: int  # 1-based
    start_frame: int  # 1-based


@dataclass
class SegmentSample:
    """One labeled action segment: poses, sparse frame features, labels."""

    sample_id: str
    pose: PoseSequence
    frame_features: Dict[int, np.ndarray]  # 1-based frame index -> feature
    action: int
    verb: int
    obj: int

    def feature_dim(self) -> Optional[int]:
        for v in self.frame_features.values():
            return int(len(v))
        return None


def fill_missing_hands(seq: PoseSequence) -> tuple[PoseSequence, np.ndarray]:
    """Carry hands forward through frames where they are missing.

    Source data marks an undetected hand as all zeros. Such frames reuse
    the hand's last valid pose; leading gaps backfill from the first valid
    frame. Returns (filled sequence, [2] validity flags); a hand never
    observed stays zero with validity False.
    """
    frames = seq.frames.copy()
    T = len(seq)
    observed = np.zeros(2, dtype=bool)
    for hand in range(2):
        valid = ~np.all(frames[:, hand] == 0.0, axis=(1, 2))
        if not valid.any():
            continue
        observed[hand] = True
        first = int(np.argmax(valid))
        frames[:first, hand] = frames[first, hand]
        last = first
        for t in range(first + 1, T):
            if valid[t]:
                last = t
            else:
                frames[t, hand] = frames[last, hand]
    return PoseSequence(frames, seq.fps, seq.layout), observed


def interpolate_sequence(seq: PoseSequence, target_len: int) -> PoseSequence:
    """Resample each coordinate channel linearly to ``target_len`` frames.

    Endpoints are preserved exactly and matching lengths return the input
    values unchanged.
    """
    T = len(seq)
    if target_len < 2:
        raise DataError("target length must be at least 2")
    if target_len == T:
        return PoseSequence(seq.frames.copy(), seq.fps, seq.layout)
    positions = np.arange(target_len, dtype=np.float64) * (T - 1) / (target_len - 1)
    lo = np.floor(positions).astype(np.int64)
    lo = np.minimum(lo, T - 2)
    frac = (positions - lo)[:, None, None, None]
    out = (1.0 - frac) * seq.frames[lo] + frac * seq.frames[lo + 1]
    out[0] = seq.frames[0]
    out[-1] = seq.frames[-1]
    new_fps = seq.fps * (target_len - 1) / (T - 1)
    return PoseSequence(out, new_fps, seq.layout)


def block_count(total_len: int, n_frames: int, stride: int) -> int:
    """Number of windows K satisfying total_len == (K-1)*stride + n_frames."""
    if n_frames < 1 or stride < 1:
        raise DataError("window length and stride must be positive")
    rem = total_len - n_frames
    if rem < 0 or rem % stride != 0:
        raise DataError(
            f"incompatible factorization: no integer K solves (K-1)*{stride} + {n_frames} == {total_len}"
        )
    return rem // stride + 1


def block_start(k: int, stride: int) -> int:
    """1-based first pose frame of block k (k is 1-based)."""
    return (k - 1) * stride + 1


def nearest_frame_index(target: float, available: Sequence[int]) -> int:
    """Closest available frame to ``target``; ties break to the earlier frame."""
    if not available:
        raise DataError("no frame features available")
    best = None
    best_dist = None
    for idx in sorted(available):
        dist = abs(idx - target)
        if best_dist is None or dist < best_dist:
            best, best_dist = idx, dist
    return best


def rescale_frame_indices(features: Dict[int, np.ndarray], source_len: int,
                          target_len: int) -> Dict[int, np.ndarray]:
    """Map 1-based feature frame indices onto a resampled timeline.

    Collisions after rounding keep the earlier source frame.
    """
    if source_len == target_len:
        return dict(features)
    out: Dict[int, np.ndarray] = {}
    for idx in sorted(features):
        pos = 1 + round((idx - 1) * (target_len - 1) / (source_len - 1))
        pos = min(max(pos, 1), target_len)
        if pos not in out:
            out[pos] = features[idx]
    return out


def factorize_micro_actions(
    seq: PoseSequence,
    features: Optional[Dict[int, np.ndarray]],
    n_frames: int,
    stride: int,
    require_features: bool = False,
) -> list[MicroAction]:
    """Split a fixed-length sequence into K overlapping-or-not windows.

    Block k covers 1-based pose frames (k-1)*stride+1 .. (k-1)*stride+n_frames
    and is paired with the nearest available sparse frame index.
    """
    total = len(seq)
    K = block_count(total, n_frames, stride)
    if require_features and not features:
        raise DataError("multimodal factorization needs a non-empty frame-feature map")
    available = sorted(features) if features else []
    blocks = []
    for k in range(1, K + 1):
        g = block_start(k, stride)
        rgb_idx = nearest_frame_index(g, available) if available else None
        blocks.append(
            MicroAction(
                pose_block=seq.frames[g - 1 : g - 1 + n_frames].copy(),
                rgb_frame_index=rgb_idx,
                block_index=k,
                start_frame=g,
            )
        )
    return blocks


def _palm_frame(wrist: np.ndarray, index_anchor: np.ndarray, pinky_anchor: np.ndarray) -> Optional[np.ndarray]:
    """Orthonormal palm frame, or None when the triad is degenerate."""
    u = index_anchor - wrist
    v = pinky_anchor - wrist
    nu = np.linalg.norm(u)
    if nu < 1e-12:
        return None
    x = u / nu
    z = np.cross(x, v)
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        return None
    z = z / nz
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def derive_wrist_6d(seq: PoseSequence) -> np.ndarray:
    """Per-frame per-hand 6D pose: wrist translation + axis-angle orientation.

    Orientation is the rotation taking the canonical palm triad (index
    direction along +x, palm normal along +z) to the observed triad.
    Degenerate triads reuse the previous frame's orientation; a degenerate
    first frame gets zero orientation.
    """
    if seq.coord_dim != 3:
        raise DataError("6D wrist pose requires 3D coordinates")
    lay = seq.layout
    T = len(seq)
    out = np.zeros((T, 2, 6), dtype=np.float64)
    eps = 1e-12
    for hand in range(2):
        joints = seq.frames[:, hand]                    # [T, J, 3]
        wrist = joints[:, lay.wrist]
        u = joints[:, lay.index_anchor] - wrist
        v = joints[:, lay.pinky_anchor] - wrist
        nu = np.linalg.norm(u, axis=1)
        z = np.cross(u, v)
        nz = np.linalg.norm(z, axis=1)
        valid = (nu > eps) & (nz > eps)
        rotvecs = np.zeros((T, 3))
        if valid.any():
            x = u[valid] / nu[valid, None]
            zn = np.cross(x, v[valid])
            zn = zn / np.linalg.norm(zn, axis=1)[:, None]
            y = np.cross(zn, x)
            frames = np.stack([x, y, zn], axis=2)       # columns are the triad
            rotvecs[valid] = Rotation.from_matrix(frames).as_rotvec()
        # carry the previous orientation through degenerate frames
        if not valid.all():
            prev = np.zeros(3)
            for t in range(T):
                if valid[t]:
                    prev = rotvecs[t]
                else:
                    rotvecs[t] = prev
        out[:, hand, :3] = wrist
        out[:, hand, 3:] = rotvecs
    return out


def select_joint_subset(seq: PoseSequence, joints: int) -> PoseSequence:
    """Restrict a full-layout sequence to one of the efficient subsets."""
    from .layout import subset_indices

    if joints == seq.joints:
        return seq
    idx = subset_indices(seq.joints, joints)
    return PoseSequence(seq.frames[:, :, idx, :], seq.fps, layout_for(joints))
