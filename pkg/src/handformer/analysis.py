"""Joint-activity statistics: per-joint displacement series, least/most
active joints, skeleton-diameter normalization, and their correlation.

Joints are indexed flat over both hands: joint j of hand h is h*J + j.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import DataError
from .pose.sequence import PoseSequence


def _flat_joints(seq: PoseSequence) -> np.ndarray:
    T = len(seq)
    return seq.frames.reshape(T, 2 * seq.joints, seq.coord_dim)


def joint_distance_series(seq: PoseSequence, joint: int) -> np.ndarray:
    """Inter-frame Euclidean displacement of one flat joint index; length T-1."""
    pts = _flat_joints(seq)
    if not 0 <= joint < pts.shape[1]:
        raise DataError(f"joint index {joint} out of range [0, {pts.shape[1]})")
    return np.linalg.norm(np.diff(pts[:, joint, :], axis=0), axis=1)


def all_distance_series(seq: PoseSequence) -> np.ndarray:
    """[2J, T-1] displacement series for every joint."""
    pts = _flat_joints(seq)
    return np.linalg.norm(np.diff(pts, axis=0), axis=2).T


def activity_extremes(seq: PoseSequence):
    """(least active joint, most active joint, per-joint totals).

    Ties break toward the lower joint index.
    """
    series = all_distance_series(seq)
    totals = series.sum(axis=1)
    return int(np.argmin(totals)), int(np.argmax(totals)), totals


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation, clipped to [-1, 1] against rounding."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise DataError("pearson_r needs two equal-length series of length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt((xc * xc).sum())
    sy = np.sqrt((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        raise DataError("undefined correlation: zero variance")
    return float(np.clip((xc * yc).sum() / (sx * sy), -1.0, 1.0))


def skeleton_diameter(seq: PoseSequence) -> float:
    """Max pairwise joint distance over the first frame (both hands)."""
    pts = _flat_joints(seq)[0]
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).max())


@dataclass
class ActivityProfile:
    clip_id: str
    series_sta: np.ndarray     # displacement series of the least active joint
    series_dyn: np.ndarray
    totals: np.ndarray         # per-joint summed displacement
    j_sta: int
    j_dyn: int
    r: float                   # correlation between the extremal series
    diameter: float


def compute_profile(seq: PoseSequence, clip_id: str, strict: bool = False) -> ActivityProfile:
    """Profile one clip. Fully static series make the correlation undefined;
    by default such clips get r = 0, while strict mode propagates the error.
    """
    j_sta, j_dyn, totals = activity_extremes(seq)
    series = all_distance_series(seq)
    try:
        r = pearson_r(series[j_sta], series[j_dyn])
    except DataError:
        if strict:
            raise
        r = 0.0
    return ActivityProfile(
        clip_id=clip_id,
        series_sta=series[j_sta],
        series_dyn=series[j_dyn],
        totals=totals,
        j_sta=j_sta,
        j_dyn=j_dyn,
        r=r,
        diameter=skeleton_diameter(seq),
    )


def compute_profiles(clips: Sequence, threads: int = 1) -> List[ActivityProfile]:
    """Profiles for (clip_id, PoseSequence) pairs, ordered by clip id."""
    clips = sorted(clips, key=lambda pair: pair[0])
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda pair: compute_profile(pair[1], pair[0]), clips))
    return [compute_profile(seq, cid) for cid, seq in clips]


def sample_clip_ids(ids: Sequence[str], n: int, seed: int) -> List[str]:
    """Seeded without-replacement sample, mirroring the 1000-sequence protocol."""
    ids = sorted(ids)
    if n >= len(ids):
        return list(ids)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0xA8A]))
    pick = rng.choice(len(ids), size=n, replace=False)
    return [ids[i] for i in sorted(pick)]


def export_profile_csv(profiles: Sequence[ActivityProfile], path,
                       summary_path: Optional[str] = None) -> None:
    """Per-timestep normalized series plus an optional per-clip summary.

    Normalization divides displacements by the clip's skeleton diameter.
    """
    if not profiles:
        raise DataError("no profiles to export")
    lines = ["clip_id,t,d_sta_norm,d_dyn_norm"]
    for p in profiles:
        scale = p.diameter if p.diameter > 0 else 1.0
        for t, (a, b) in enumerate(zip(p.series_sta, p.series_dyn), start=1):
            lines.append(f"{p.clip_id},{t},{a / scale:.6f},{b / scale:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
    if summary_path is not None:
        rows = ["clip_id,j_sta,j_dyn,r,diameter"]
        for p in profiles:
            rows.append(f"{p.clip_id},{p.j_sta},{p.j_dyn},{p.r:.6f},{p.diameter:.6f}")
        Path(summary_path).write_text("\n".join(rows) + "\n")
