"""Seed-deterministic synthetic two-hand datasets.

Each verb class is a parametric two-hand motion family; each object class
seeds a distinct frame-feature cluster center. Action labels compose as
verb_index * n_objects + object_index. At noise level 0, samples of one
class are exact integer-frame time shifts of the class prototype.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import DataError
from .layout import layout_for, subset_indices
from .sequence import PoseSequence, SegmentSample

# Canonical 21-joint right-hand template (meters). Wrist at the origin,
# fingers extended along +x, thumb toward -y, pinky toward +y. The palm
# triad of this template is the identity frame.
_FINGER_Y = {"index": 0.0, "middle": 0.022, "ring": 0.044, "pinky": 0.066}
_SEGMENT_X = (0.09, 0.12, 0.145, 0.165)  # mcp, pip, dip, tip


def _template_hand_21() -> np.ndarray:
    pts = [np.zeros(3)]  # wrist
    # thumb: cmc, mcp, ip, tip
    pts += [np.array(p) for p in
            [(0.025, -0.02, 0.0), (0.05, -0.03, 0.0), (0.07, -0.035, 0.0), (0.085, -0.04, 0.0)]]
    for finger in ("index", "middle", "ring", "pinky"):
        y = _FINGER_Y[finger]
        pts += [np.array((x, y, 0.0)) for x in _SEGMENT_X]
    return np.stack(pts)


TEMPLATE_HAND_21 = _template_hand_21()

VERB_FAMILY_NAMES = (
    "translate_up",
    "translate_down",
    "screw_cw",
    "screw_ccw",
    "oscillate",
    "approach_grasp",
    "static_hold",
    "separate",
)

# Axis permutation applied to family offsets for verb indices beyond the
# base families, keeping extra classes geometrically distinct.
_AXIS_VARIANTS = ((0, 1, 2), (2, 0, 1), (1, 2, 0))


def _family_motion(family: str, u: np.ndarray, hand: int):
    """Root offset [T,3], z-rotation angle [T], finger curl [T] for one hand."""
    T = len(u)
    offset = np.zeros((T, 3))
    angle = np.zeros(T)
    curl = np.zeros(T)
    side = -1.0 if hand == 0 else 1.0
    if family == "translate_up":
        offset[:, 2] = 0.25 * u
    elif family == "translate_down":
        offset[:, 2] = -0.25 * u
    elif family == "screw_cw":
        phase = 2.0 * np.pi * 1.5 * u
        offset[:, 0] = 0.06 * (np.cos(phase) - 1.0)
        offset[:, 1] = -0.06 * np.sin(phase)
        offset[:, 2] = 0.05 * u
        angle = -phase * 0.5
    elif family == "screw_ccw":
        phase = 2.0 * np.pi * 1.5 * u
        offset[:, 0] = 0.06 * (np.cos(phase) - 1.0)
        offset[:, 1] = 0.06 * np.sin(phase)
        offset[:, 2] = 0.05 * u
        angle = phase * 0.5
    elif family == "oscillate":
        offset[:, 0] = 0.15 * np.sin(2.0 * np.pi * 1.0 * u)
    elif family == "approach_grasp":
        offset[:, 1] = -side * 0.11 * np.minimum(u, 1.0)
        curl = np.clip(2.0 * u - 0.8, 0.0, 1.0)
    elif family == "static_hold":
        curl = np.full(T, 0.6)
    elif family == "separate":
        offset[:, 1] = side * 0.15 * u
    else:
        raise DataError(f"unknown motion family {family!r}")
    return offset, angle, curl


def _build_hand_frames(template: np.ndarray, base: np.ndarray, offset: np.ndarray,
                       angle: np.ndarray, curl: np.ndarray) -> np.ndarray:
    """Assemble [T, J, 3] joint positions for one hand."""
    T = len(offset)
    rots = Rotation.from_rotvec(np.outer(angle, np.array([0.0, 0.0, 1.0]))).as_matrix()
    scaled = template[None, :, :] * (1.0 - 0.4 * curl)[:, None, None]
    rotated = np.einsum("tab,tjb->tja", rots, scaled)
    return rotated + (base + offset)[:, None, :]


def verb_family(verb: int) -> tuple[str, tuple]:
    family = VERB_FAMILY_NAMES[verb % len(VERB_FAMILY_NAMES)]
    variant = _AXIS_VARIANTS[(verb // len(VERB_FAMILY_NAMES)) % len(_AXIS_VARIANTS)]
    return family, variant


def build_verb_clip(verb: int, shift_frames: int, length: int, joints: int,
                    noise: float, rng: np.random.Generator, fps: float = 60.0) -> PoseSequence:
    """One two-hand clip of the given verb family, time-shifted by whole frames."""
    family, axes = verb_family(verb)
    template = TEMPLATE_HAND_21[list(subset_indices(21, joints)), :]
    u = (np.arange(length, dtype=np.float64) + shift_frames) / float(length)
    frames = np.zeros((length, 2, joints, 3))
    bases = (np.array([0.0, -0.14, 0.0]), np.array([0.0, 0.14, 0.0]))
    for hand in range(2):
        offset, angle, curl = _family_motion(family, u, hand)
        offset = offset[:, list(axes)]
        frames[:, hand] = _build_hand_frames(template, bases[hand], offset, angle, curl)
    if noise > 0:
        # smooth per-joint articulation wobble plus white coordinate noise
        t = np.arange(length, dtype=np.float64)[:, None, None, None] / fps
        freq = rng.uniform(1.0, 3.0, size=(1, 2, joints, 3))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(1, 2, joints, 3))
        frames += noise * 0.05 * np.sin(2.0 * np.pi * freq * t + phase)
        frames += noise * 0.02 * rng.standard_normal(frames.shape)
    return PoseSequence(frames, fps, layout_for(joints))


def object_feature_center(seed: int, obj: int, d_f: int) -> np.ndarray:
    """Unit-norm cluster center, mirroring the unit-norm provider contract."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0xFEA7, obj]))
    vec = rng.standard_normal(d_f)
    return vec / np.linalg.norm(vec)


@dataclass
class Dataset:
    """In-memory synthetic dataset with its class structure."""

    samples: List[SegmentSample]
    n_verbs: int
    n_objects: int
    d_f: int
    joints: int = 6
    meta: dict = field(default_factory=dict)

    @property
    def n_actions(self) -> int:
        return self.n_verbs * self.n_objects

    def action_of(self, verb: int, obj: int) -> int:
        return verb * self.n_objects + obj


def generate_synthetic_dataset(
    n_verbs: int,
    n_objects: int,
    per_class: int,
    noise: float,
    seed: int,
    joints: int = 6,
    d_f: int = 16,
    length: int = 120,
    feature_stride: int = 15,
    fps: float = 60.0,
) -> Dataset:
    """Deterministically generate per_class samples for every (verb, object) pair."""
    if n_verbs < 2 or n_objects < 2:
        raise DataError("need at least 2 verb and 2 object classes")
    centers = [object_feature_center(seed, o, d_f) for o in range(n_objects)]
    samples: List[SegmentSample] = []
    for verb in range(n_verbs):
        for obj in range(n_objects):
            for i in range(per_class):
                rng = np.random.default_rng(
                    np.random.SeedSequence(entropy=[seed, verb, obj, i])
                )
                shift = int(rng.integers(0, 13))
                T = length
                if noise > 0:
                    T = length + int(rng.integers(-12, 13))
                pose = build_verb_clip(verb, shift, T, joints, noise, rng, fps)
                features: Dict[int, np.ndarray] = {}
                for idx in range(1, T + 1, feature_stride):
                    vec = centers[obj].copy()
                    if noise > 0:
                        vec = vec + noise * rng.standard_normal(d_f)
                    features[idx] = vec
                samples.append(
                    SegmentSample(
                        sample_id=f"v{verb:02d}_o{obj:02d}_{i:04d}",
                        pose=pose,
                        frame_features=features,
                        action=verb * n_objects + obj,
                        verb=verb,
                        obj=obj,
                    )
                )
    return Dataset(
        samples=samples,
        n_verbs=n_verbs,
        n_objects=n_objects,
        d_f=d_f,
        joints=joints,
        meta={
            "per_class": per_class,
            "noise": noise,
            "seed": seed,
            "length": length,
            "feature_stride": feature_stride,
            "fps": fps,
        },
    )


def generate_coupled_clip(seed: int, joints: int = 6, length: int = 120,
                          fps: float = 60.0) -> PoseSequence:
    """Hand-like clip: strong shared rigid motion, small articulation."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0xC0]))
    template = TEMPLATE_HAND_21[list(subset_indices(21, joints)), :]
    t = np.arange(length, dtype=np.float64) / fps
    path = np.zeros((length, 3))
    for axis in range(3):
        for _ in range(3):
            amp = rng.uniform(0.05, 0.15)
            freq = rng.uniform(0.4, 1.6)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            path[:, axis] += amp * np.sin(2.0 * np.pi * freq * t + phase)
    frames = np.zeros((length, 2, joints, 3))
    bases = (np.array([0.0, -0.14, 0.0]), np.array([0.0, 0.14, 0.0]))
    for hand in range(2):
        frames[:, hand] = template[None] + (bases[hand] + path)[:, None, :]
    # small independent articulation so joints are not bitwise identical
    freq = rng.uniform(1.0, 3.0, size=(1, 2, joints, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(1, 2, joints, 3))
    frames += 0.004 * np.sin(2.0 * np.pi * freq * t[:, None, None, None] + phase)
    return PoseSequence(frames, fps, layout_for(joints))


def generate_pinned_clip(seed: int, joints: int = 6, length: int = 120,
                         fps: float = 60.0) -> PoseSequence:
    """Body-like clip: one near-static joint, one large-swing joint."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0xB0]))
    template = TEMPLATE_HAND_21[list(subset_indices(21, joints)), :]
    t = np.arange(length, dtype=np.float64) / fps
    frames = np.zeros((length, 2, joints, 3))
    bases = (np.array([0.0, -0.14, 0.0]), np.array([0.0, 0.14, 0.0]))
    for hand in range(2):
        frames[:, hand] = template[None] + bases[hand][None, None, :]
    # large independent swings on all joints of hand 1
    for j in range(joints):
        for axis in range(3):
            amp = rng.uniform(0.1, 0.3)
            freq = rng.uniform(0.4, 1.5)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            frames[:, 1, j, axis] += amp * np.sin(2.0 * np.pi * freq * t + phase)
    # hand 0 stays pinned: only tiny sensor jitter
    frames[:, 0] += 0.0005 * rng.standard_normal((length, joints, 3))
    return PoseSequence(frames, fps, layout_for(joints))
