"""Per-frame feature provision: files or a synthetic stub, plus HOI crops.

The actual image backbone lives upstream and is frozen by construction;
this module only moves its outputs around. The trainable projection to the
model width belongs to the fusion stage, keeping the provider read-only.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DataError
from .pose.sequence import SegmentSample
from .pose.synthetic import object_feature_center


@dataclass(frozen=True)
class FrameFeature:
    vector: np.ndarray
    frame_index: int
    source: str  # full | crop | fused

    def __post_init__(self):
        if self.source not in ("full", "crop", "fused"):
            raise DataError(f"unknown feature source {self.source!r}")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    image_size: Tuple[int, int]  # (W, H)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("focal lengths must be positive")


def project_pose_to_image(points: np.ndarray, cam: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of [M, 3] camera-frame points.

    Returns ([M, 2] pixel coords, [M] validity); points with z <= 0 are
    flagged invalid and carry zeros.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DataError("expected [M, 3] points")
    z = points[:, 2]
    valid = z > 0
    out = np.zeros((len(points), 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        out[valid, 0] = cam.fx * points[valid, 0] / z[valid] + cam.cx
        out[valid, 1] = cam.fy * points[valid, 1] / z[valid] + cam.cy
    return out, valid


MIN_CROP_SIDE = 8.0
CROP_EXPANSION = 1.25


def compute_hoi_crop(points2d: np.ndarray, image_size: Tuple[int, int]) -> tuple:
    """Enclosing rectangle of the points, expanded 25% and clamped.

    Returns (x0, y0, x1, y1). Degenerate extents are widened to a minimum
    side of 8 pixels about the rectangle center before clamping.
    """
    points2d = np.asarray(points2d, dtype=np.float64)
    if points2d.size == 0:
        raise DataError("no valid crop: zero valid projected points")
    W, H = image_size
    x0, y0 = points2d.min(axis=0)
    x1, y1 = points2d.max(axis=0)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    half_w = max(0.5 * (x1 - x0) * CROP_EXPANSION, MIN_CROP_SIDE / 2.0)
    half_h = max(0.5 * (y1 - y0) * CROP_EXPANSION, MIN_CROP_SIDE / 2.0)
    x0, x1 = cx - half_w, cx + half_w
    y0, y1 = cy - half_h, cy + half_h
    return (max(x0, 0.0), max(y0, 0.0), min(x1, float(W)), min(y1, float(H)))


def fuse_full_and_crop(full: FrameFeature, crop: Optional[FrameFeature]) -> FrameFeature:
    """Average full and crop features and rescale to unit norm.

    With no crop available the full feature alone is normalized.
    """
    if crop is None:
        vec = full.vector.astype(np.float64)
    else:
        if full.vector.shape != crop.vector.shape:
            raise DataError(
                f"feature dims differ: full {full.vector.shape} vs crop {crop.vector.shape}"
            )
        vec = 0.5 * (full.vector.astype(np.float64) + crop.vector.astype(np.float64))
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        raise DataError("degenerate feature: zero-norm after fusion")
    return FrameFeature(vector=vec / norm, frame_index=full.frame_index, source="fused")


@dataclass
class StubConfig:
    d_f: int = 16
    noise: float = 0.0
    seed: int = 0


class FrameFeatureProvider:
    """Read-only frame feature source.

    file mode serves vectors from a sample's sparse feature map (optionally
    fusing a parallel crop map); stub mode synthesizes object-conditioned
    cluster features deterministically.
    """

    def __init__(self, mode: str = "file", stub: Optional[StubConfig] = None,
                 crop_features: Optional[Dict[str, Dict[int, np.ndarray]]] = None):
        if mode not in ("file", "stub"):
            raise DataError(f"unknown provider mode {mode!r}")
        if mode == "stub" and stub is None:
            raise DataError("stub mode needs a StubConfig")
        self.mode = mode
        self.stub = stub
        self.crop_features = crop_features or {}

    def get(self, segment: SegmentSample, frame_index: int) -> FrameFeature:
        if self.mode == "stub":
            return self._stub_feature(segment, frame_index)
        if frame_index not in segment.frame_features:
            available = sorted(segment.frame_features)
            raise DataError(
                f"no feature for frame {frame_index} of {segment.sample_id}; "
                f"available: {available}"
            )
        full = FrameFeature(
            vector=np.asarray(segment.frame_features[frame_index], dtype=np.float64),
            frame_index=frame_index,
            source="full",
        )
        crops = self.crop_features.get(segment.sample_id)
        if crops and frame_index in crops:
            crop = FrameFeature(np.asarray(crops[frame_index], dtype=np.float64),
                                frame_index, "crop")
            return fuse_full_and_crop(full, crop)
        return full

    def _stub_feature(self, segment: SegmentSample, frame_index: int) -> FrameFeature:
        cfg = self.stub
        center = object_feature_center(cfg.seed, segment.obj, cfg.d_f)
        vec = center
        if cfg.noise > 0:
            sample_key = zlib.crc32(segment.sample_id.encode())
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=[cfg.seed, sample_key, int(frame_index)])
            )
            vec = center + cfg.noise * rng.standard_normal(cfg.d_f)
        return FrameFeature(vector=vec, frame_index=frame_index, source="full")
