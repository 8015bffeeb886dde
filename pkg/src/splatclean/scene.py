"""Mutable set of splatted primitives plus per-primitive semantic statistics.

The two tracking arrays (accumulated score, view count) are kept aligned with
the primitive arrays under every structural change: additions append zeroed
statistics, removals compact both sides identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

CHECKPOINT_VERSION = 1

_FIELD_SHAPES = {
    "positions": 2,
    "log_scales": 2,
    "rotations": 1,
    "colors": 3,
    "opacity_logits": 1,
    "depths": 1,
    "accum_scores": 1,
    "view_counts": 1,
}


@dataclass
class GaussianPrimitive:
    """One splatted primitive: the unit of optimization and pruning.

    position: world-space center (2,).
    log_scale: log of the per-axis standard deviation in world units (2,).
    rotation: orientation of the scale axes, radians.
    color: RGB in [0, 1] (3,).
    opacity_logit: opacity is sigmoid(opacity_logit), structurally in (0, 1).
    depth: scalar compositing sort key (smaller = closer to the camera).
    """

    position: np.ndarray
    log_scale: np.ndarray
    rotation: float
    color: np.ndarray
    opacity_logit: float
    depth: float

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))


@dataclass
class SemanticStats:
    """Accumulated distractor evidence and exposure count for one primitive."""

    accum_score: float = 0.0
    view_count: int = 0


def _validate_primitive(p: GaussianPrimitive, index: int) -> None:
    pos = np.asarray(p.position, dtype=np.float64)
    ls = np.asarray(p.log_scale, dtype=np.float64)
    col = np.asarray(p.color, dtype=np.float64)
    if pos.shape != (2,) or not np.all(np.isfinite(pos)):
        raise ValidationError(f"primitive {index}: position must be a finite 2-vector")
    if ls.shape != (2,) or not np.all(np.isfinite(ls)) or not np.all(np.isfinite(np.exp(ls))):
        raise ValidationError(f"primitive {index}: log_scale must give finite positive scales")
    if col.shape != (3,) or not np.all(np.isfinite(col)) or col.min() < 0.0 or col.max() > 1.0:
        raise ValidationError(f"primitive {index}: color must be RGB in [0, 1]")
    if not np.isfinite(p.rotation):
        raise ValidationError(f"primitive {index}: rotation must be finite")
    if not np.isfinite(p.opacity_logit):
        raise ValidationError(f"primitive {index}: opacity_logit must be finite")
    if not np.isfinite(p.depth):
        raise ValidationError(f"primitive {index}: depth must be finite")


class SceneModel:
    """Struct-of-arrays store for primitives and their semantic statistics.

    Mutation is single-writer; `generation` increments on every structural
    change so read-only snapshots can detect staleness.
    """

    def __init__(self) -> None:
        self.positions = np.zeros((0, 2), dtype=np.float64)
        self.log_scales = np.zeros((0, 2), dtype=np.float64)
        self.rotations = np.zeros(0, dtype=np.float64)
        self.colors = np.zeros((0, 3), dtype=np.float64)
        self.opacity_logits = np.zeros(0, dtype=np.float64)
        self.depths = np.zeros(0, dtype=np.float64)
        self.accum_scores = np.zeros(0, dtype=np.float64)
        self.view_counts = np.zeros(0, dtype=np.int64)
        self.generation = 0

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logits))

    def primitive(self, index: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.positions[index].copy(),
            log_scale=self.log_scales[index].copy(),
            rotation=float(self.rotations[index]),
            color=self.colors[index].copy(),
            opacity_logit=float(self.opacity_logits[index]),
            depth=float(self.depths[index]),
        )

    def stats(self, index: int) -> SemanticStats:
        return SemanticStats(
            accum_score=float(self.accum_scores[index]),
            view_count=int(self.view_counts[index]),
        )

    def add_gaussians(self, new: list[GaussianPrimitive]) -> list[int]:
        """Append primitives with zero-initialized semantic statistics.

        Returns the indices of the new entries. Rejects the whole batch if
        any primitive violates its invariants, naming the offender.
        """
        if not new:
            raise ValidationError("add_gaussians requires a non-empty list")
        for i, p in enumerate(new):
            _validate_primitive(p, i)
        start = len(self)
        self.positions = np.vstack([self.positions, [np.asarray(p.position, dtype=np.float64) for p in new]])
        self.log_scales = np.vstack([self.log_scales, [np.asarray(p.log_scale, dtype=np.float64) for p in new]])
        self.rotations = np.concatenate([self.rotations, [float(p.rotation) for p in new]])
        self.colors = np.vstack([self.colors, [np.asarray(p.color, dtype=np.float64) for p in new]])
        self.opacity_logits = np.concatenate([self.opacity_logits, [float(p.opacity_logit) for p in new]])
        self.depths = np.concatenate([self.depths, [float(p.depth) for p in new]])
        self.accum_scores = np.concatenate([self.accum_scores, np.zeros(len(new))])
        self.view_counts = np.concatenate([self.view_counts, np.zeros(len(new), dtype=np.int64)])
        self.generation += 1
        return list(range(start, len(self)))

    def remove_gaussians(self, indices) -> int:
        """Remove the given index set, compacting primitives and statistics
        identically and preserving the survivors' relative order.

        An empty set is a no-op (generation unchanged). Out-of-range or
        duplicate indices reject the call with the scene unmodified.
        """
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size == 0:
            return 0
        n = len(self)
        if idx.min() < 0 or idx.max() >= n:
            raise ValidationError(f"remove_gaussians: index out of range for scene of {n}")
        if np.unique(idx).size != idx.size:
            raise ValidationError("remove_gaussians: duplicate indices")
        keep = np.ones(n, dtype=bool)
        keep[idx] = False
        self._compact(keep)
        return int(idx.size)

    def _compact(self, keep: np.ndarray) -> None:
        self.positions = self.positions[keep]
        self.log_scales = self.log_scales[keep]
        self.rotations = self.rotations[keep]
        self.colors = self.colors[keep]
        self.opacity_logits = self.opacity_logits[keep]
        self.depths = self.depths[keep]
        self.accum_scores = self.accum_scores[keep]
        self.view_counts = self.view_counts[keep]
        self.generation += 1

    def normalized_scores(self) -> np.ndarray:
        """Per-primitive average distractor evidence: accum_score / view_count.

        Primitives never seen (view_count == 0) carry no evidence and score 0.
        """
        out = np.zeros(len(self), dtype=np.float64)
        seen = self.view_counts > 0
        out[seen] = self.accum_scores[seen] / self.view_counts[seen]
        return out

    # -- checkpoint I/O ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write a versioned binary checkpoint (exact float64 round-trip)."""
        np.savez(
            path,
            version=np.array([CHECKPOINT_VERSION], dtype=np.int64),
            positions=self.positions,
            log_scales=self.log_scales,
            rotations=self.rotations,
            colors=self.colors,
            opacity_logits=self.opacity_logits,
            depths=self.depths,
            accum_scores=self.accum_scores,
            view_counts=self.view_counts,
        )

    @classmethod
    def load(cls, path: str | Path) -> "SceneModel":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"checkpoint not found: {path}")
        try:
            data = np.load(path)
        except Exception as exc:
            raise ValidationError(f"unreadable checkpoint {path}: {exc}") from exc
        if "version" not in data or int(data["version"][0]) != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version in {path}")
        scene = cls()
        n = data["positions"].shape[0]
        for key, width in _FIELD_SHAPES.items():
            if key not in data:
                raise ValidationError(f"checkpoint {path} missing field {key}")
            arr = data[key]
            expect = (n, width) if width > 1 else (n,)
            if arr.shape != expect:
                raise ValidationError(f"checkpoint field {key} has shape {arr.shape}, expected {expect}")
            setattr(scene, key, arr.astype(np.int64 if key == "view_counts" else np.float64))
        return scene
