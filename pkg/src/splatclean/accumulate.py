"""Per-primitive semantic statistics update.

Each iteration, every primitive visible in the rendered view gains one view
count; its accumulated score grows by beta * max(0, distractor - 0.5), so
only views scoring above the neutral threshold contribute evidence. The
neutral threshold is pinned at 0.5 by the score normalization and is not
configurable.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .scene import SceneModel
from .scoring import NEUTRAL_SCORE, ViewScore


def accumulate(scene: SceneModel, visibility: np.ndarray, view_score: ViewScore, beta: float) -> int:
    """Apply one view's evidence to all visible primitives.

    Returns the number of primitives updated. Rejects on visibility length
    mismatch (scene left untouched) and on non-positive beta.
    """
    vis = np.asarray(visibility, dtype=bool)
    if vis.shape != (len(scene),):
        raise ValidationError(
            f"visibility length {vis.shape} does not match scene of {len(scene)}")
    if beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    excess = max(0.0, view_score.distractor - NEUTRAL_SCORE)
    increment = beta * excess
    if increment > 0.0:
        scene.accum_scores[vis] += increment
    scene.view_counts[vis] += 1
    return int(vis.sum())
