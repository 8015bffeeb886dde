"""Periodic pruning predicate and threshold calibration.

A primitive is removed when its normalized semantic score exceeds tau, or
when it is both rarely seen (view count below n_min) and nearly transparent
(opacity below alpha_min). Calibration picks tau from the empirical score
distribution to hit a target prune fraction of the positive-score
subpopulation; zero-score primitives are structurally unprunable by the
semantic clause, so they are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_TAU = 0.015
DEFAULT_N_MIN = 10
DEFAULT_ALPHA_MIN = 0.1


def prune_mask(scores, counts, opacities, tau: float = DEFAULT_TAU,
               n_min: int = DEFAULT_N_MIN, alpha_min: float = DEFAULT_ALPHA_MIN) -> np.ndarray:
    """Boolean removal mask: (score > tau) or (count < n_min and opacity < alpha_min)."""
    scores = np.asarray(scores, dtype=np.float64)
    counts = np.asarray(counts)
    opacities = np.asarray(opacities, dtype=np.float64)
    if not (scores.shape == counts.shape == opacities.shape):
        raise ValidationError("scores, counts and opacities must have equal length")
    return (scores > tau) | ((counts < n_min) & (opacities < alpha_min))


@dataclass
class CalibrationResult:
    tau: float | None
    target_fraction: float
    positive_count: int
    expected_pruned: int
    score_min: float
    score_max: float
    deciles: list[float] = field(default_factory=list)
    # Set when no primitive carries positive semantic evidence.
    no_distractors: bool = False
    # Set when a checked threshold exceeds every observed score, i.e. the
    # semantic clause would prune nothing.
    negligible_pruning_warning: bool = False


def calibrate_threshold(scores, target_prune_fraction: float,
                        check_tau: float | None = None) -> CalibrationResult:
    """Pick tau so the semantic clause prunes ~the target fraction of the
    positive-score population.

    Convention: nearest rank on the sorted positive scores, tau placed at the
    midpoint between the k-th and (k+1)-th largest so strict comparison
    prunes exactly k; ties at the boundary are pruned together. All-zero
    populations return a sentinel (no distractors detected) instead of a tau.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValidationError("calibrate_threshold requires a non-empty score list")
    if not (0.0 < target_prune_fraction < 1.0):
        raise ValidationError("target fraction must lie strictly between 0 and 1")

    positives = np.sort(scores[scores > 0.0])[::-1]
    smax = float(scores.max())
    smin = float(scores.min())
    warn = check_tau is not None and check_tau > smax

    if positives.size == 0:
        return CalibrationResult(
            tau=None, target_fraction=target_prune_fraction, positive_count=0,
            expected_pruned=0, score_min=smin, score_max=smax,
            no_distractors=True, negligible_pruning_warning=warn)

    deciles = [float(np.quantile(positives, q)) for q in np.arange(0.1, 1.0, 0.1)]
    p = positives.size
    k = int(round(target_prune_fraction * p))
    k = min(max(k, 1), p)
    if k == p:
        tau = positives[-1] / 2.0
    else:
        tau = (positives[k - 1] + positives[k]) / 2.0
        if positives[k - 1] == positives[k]:
            tau = positives[k - 1]
    return CalibrationResult(
        tau=float(tau), target_fraction=target_prune_fraction, positive_count=p,
        expected_pruned=int(np.sum(positives > tau)),
        score_min=smin, score_max=smax, deciles=deciles,
        negligible_pruning_warning=warn)
