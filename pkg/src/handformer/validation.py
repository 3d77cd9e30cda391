"""Input validation helpers for the estimator API."""
from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DataError
from .pose.sequence import SegmentSample


def check_segment_samples(samples: Sequence[SegmentSample],
                          require_features: bool = False) -> Tuple[int, int, int, Optional[int]]:
    """Validate a sample list; returns (n_actions, n_verbs, n_objects, d_f).

    Class counts are inferred as max label + 1. Checks label consistency
    with the compositional table action == verb * n_objects + object, and
    that feature dimensions agree across samples.
    """
    if not samples:
        raise DataError("empty sample list")
    joints = samples[0].pose.joints
    coord = samples[0].pose.coord_dim
    d_f: Optional[int] = None
    max_a = max_v = max_o = -1
    for s in samples:
        if s.pose.joints != joints or s.pose.coord_dim != coord:
            raise DataError(
                f"{s.sample_id}: pose extents ({s.pose.joints},{s.pose.coord_dim}) "
                f"differ from first sample ({joints},{coord})"
            )
        if min(s.action, s.verb, s.obj) < 0:
            raise DataError(f"{s.sample_id}: negative label")
        if require_features and not s.frame_features:
            raise DataError(f"{s.sample_id}: no frame features in multimodal mode")
        dim = s.feature_dim()
        if dim is not None:
            if d_f is None:
                d_f = dim
            elif dim != d_f:
                raise DataError(f"{s.sample_id}: feature dim {dim} != {d_f}")
        max_a = max(max_a, s.action)
        max_v = max(max_v, s.verb)
        max_o = max(max_o, s.obj)
    n_objects = max_o + 1
    n_verbs = max_v + 1
    n_actions = max(max_a + 1, n_verbs * n_objects)
    for s in samples:
        if s.action != s.verb * n_objects + s.obj:
            raise DataError(
                f"{s.sample_id}: action {s.action} inconsistent with "
                f"(verb {s.verb}, object {s.obj}) under the composition table"
            )
    return n_actions, n_verbs, n_objects, d_f


def check_finite_array(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.isfinite(arr).all():
        raise DataError(f"{what} contains non-finite values")
    return arr
