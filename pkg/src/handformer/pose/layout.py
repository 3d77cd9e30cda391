"""Hand joint layouts: orderings, subsets, and orientation anchor joints."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

# Full 21-joint ordering: wrist first, then per-finger chains base-to-tip.
FULL_JOINT_NAMES = (
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)

# Efficient subsets, as indices into the full ordering.
SUBSET_21 = tuple(range(21))
# wrist + the five fingertips
SUBSET_6 = (0, 4, 8, 12, 16, 20)
# 6-joint subset extended with the remaining thumb and index chain joints
SUBSET_11 = (0, 2, 3, 4, 5, 6, 7, 8, 12, 16, 20)


@dataclass(frozen=True)
class JointLayout:
    """Named per-hand joint ordering plus orientation anchors.

    The anchors define the palm triad used for 6D wrist pose: the wrist
    origin plus two reference joints spanning the palm plane.
    """

    names: tuple = field(default_factory=tuple)
    wrist: int = 0
    index_anchor: int = 1
    pinky_anchor: int = 2

    @property
    def joints(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        return self.names.index(name)


def _subset_layout(subset: Sequence[int]) -> JointLayout:
    names = tuple(FULL_JOINT_NAMES[i] for i in subset)

    def anchor(preferred: str, fallback: str) -> int:
        return names.index(preferred) if preferred in names else names.index(fallback)

    return JointLayout(
        names=names,
        wrist=names.index("wrist"),
        index_anchor=anchor("index_mcp", "index_tip"),
        pinky_anchor=anchor("pinky_mcp", "pinky_tip"),
    )


LAYOUTS = {
    21: _subset_layout(SUBSET_21),
    11: _subset_layout(SUBSET_11),
    6: _subset_layout(SUBSET_6),
}

SUBSETS = {21: SUBSET_21, 11: SUBSET_11, 6: SUBSET_6}


def layout_for(joints: int) -> JointLayout:
    """Layout for one of the supported per-hand joint counts (6, 11, 21)."""
    try:
        return LAYOUTS[joints]
    except KeyError:
        raise ValueError(f"unsupported joint count {joints}; expected one of {sorted(LAYOUTS)}")


def subset_indices(source_joints: int, target_joints: int) -> tuple:
    """Row indices selecting the target subset out of a source layout."""
    if source_joints == target_joints:
        return tuple(range(target_joints))
    if source_joints != 21:
        raise ValueError(f"can only subset from the full 21-joint layout, not {source_joints}")
    return SUBSETS[target_joints]
