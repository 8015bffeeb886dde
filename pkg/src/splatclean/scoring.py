"""Per-view distractor/static scoring.

All scorers share one contract: given a rendered view they produce a
ViewScore with both entries in [0, 1], where 0.5 is neutral. The similarity
path mirrors the embedding route end to end: raw similarities in [-1, 1],
max over the prompt/template set, then (s + 1) / 2.

Two implementations ship here: a deterministic color-signature oracle for
synthetic benchmarks, and a reader for precomputed score files produced by
an offline exporter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

NEUTRAL_SCORE = 0.5

# Default prompt sets for real captures with human distractors.
DEFAULT_DISTRACTOR_PROMPTS = (
    "a photo of a person",
    "a photo of people",
    "a photo of pedestrians",
    "a photo of hands",
    "a photo of a balloon",
)
DEFAULT_STATIC_PROMPTS = (
    "a photo of a building",
    "a photo of a wall",
    "a photo of furniture",
)


@dataclass
class PromptSet:
    distractor_prompts: tuple[str, ...] = DEFAULT_DISTRACTOR_PROMPTS
    static_prompts: tuple[str, ...] = DEFAULT_STATIC_PROMPTS

    def __post_init__(self) -> None:
        for name, prompts in (("distractor", self.distractor_prompts), ("static", self.static_prompts)):
            if len(prompts) == 0:
                raise ValidationError(f"{name} prompt list must be non-empty")
            if len(set(prompts)) != len(prompts):
                raise ValidationError(f"{name} prompt list contains duplicates")


@dataclass
class ViewScore:
    distractor: float
    static_score: float

    def __post_init__(self) -> None:
        for name, v in (("distractor", self.distractor), ("static", self.static_score)):
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} score {v} outside [0, 1]")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two embedding vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("embeddings must be finite")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("zero-norm embedding")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def normalize_similarity(sim: float) -> float:
    """Map a similarity in [-1, 1] to a score in [0, 1]; 0 maps to 0.5."""
    return (sim + 1.0) / 2.0


def distractor_score(image_embedding: np.ndarray, prompt_embeddings: list[np.ndarray]) -> float:
    """Max similarity over the prompt set, normalized to [0, 1]."""
    if len(prompt_embeddings) == 0:
        raise ValidationError("prompt embedding list must be non-empty")
    best = max(cosine_similarity(image_embedding, p) for p in prompt_embeddings)
    return normalize_similarity(best)


class Scorer:
    """Shared scorer interface: score a rendered view by id."""

    def score(self, view_id: str, image: np.ndarray) -> ViewScore:
        raise NotImplementedError


@dataclass
class OracleConfig:
    # Hue histogram resolution; one bin spans 360/hue_bins degrees.
    hue_bins: int = 24
    # Pixels closer than this (max-channel distance) to the background color
    # are excluded from the histogram.
    background_tolerance: float = 0.06
    # Pixels below this chroma (max - min channel) carry no reliable hue and
    # land in a separate gray bucket.
    chroma_floor: float = 0.15
    # A histogram bin belongs to a signature's template when its center hue
    # lies within this many degrees of the signature hue.
    hue_tolerance_deg: float = 25.0
    # Image-mass fraction on a template at which the similarity saturates.
    saturation: float = 0.26
    # Minimum fraction of non-background pixels for a meaningful histogram.
    min_content_fraction: float = 0.002
    # Degenerate images score just below neutral so clean ambiguity never
    # accumulates evidence.
    neutral_margin: float = 0.05


def _hue_chroma(colors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hue in degrees [0, 360) and chroma (max - min) per RGB row."""
    c = np.asarray(colors, dtype=np.float64)
    mx = c.max(axis=-1)
    mn = c.min(axis=-1)
    chroma = mx - mn
    safe = np.where(chroma > 0, chroma, 1.0)
    r, g, b = c[..., 0], c[..., 1], c[..., 2]
    hue = np.where(mx == r, (g - b) / safe % 6.0,
                   np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    return hue * 60.0, chroma


class SyntheticOracleScorer(Scorer):
    """Deterministic stand-in for an embedding scorer at desk scale.

    Signature colors define hue templates (distractor sprites carry a
    distinctive hue, so dimmed or blended sprite pixels still match). The
    background-excluded hue histogram of the image is intersected with every
    template; the overlap mass, saturating at `saturation`, maps affinely
    onto [-1, 1] and runs through the same max-then-normalize path the
    embedding route uses: zero presence scores 0, saturated presence 1.
    Gray signatures (chroma below the floor) match gray content instead.
    """

    def __init__(self, distractor_colors, static_colors, background,
                 config: OracleConfig | None = None) -> None:
        if len(distractor_colors) == 0 or len(static_colors) == 0:
            raise ValidationError("oracle needs at least one template per class")
        self.config = config or OracleConfig()
        self.background = np.asarray(background, dtype=np.float64)
        self._distractor_templates = [self._template(c) for c in distractor_colors]
        self._static_templates = [self._template(c) for c in static_colors]

    @classmethod
    def from_manifest(cls, manifest, config: OracleConfig | None = None) -> "SyntheticOracleScorer":
        meta = manifest.world
        return cls([meta.sprite_color], meta.palette, meta.background, config)

    def _template(self, color) -> np.ndarray | None:
        """Boolean bin membership, or None for a gray (hue-free) signature."""
        hue, chroma = _hue_chroma(np.asarray(color, dtype=np.float64)[None, :])
        if chroma[0] < self.config.chroma_floor:
            return None
        n = self.config.hue_bins
        centers = (np.arange(n) + 0.5) * (360.0 / n)
        dist = np.abs((centers - hue[0] + 180.0) % 360.0 - 180.0)
        return dist <= self.config.hue_tolerance_deg

    def _histogram(self, image: np.ndarray) -> tuple[np.ndarray, float] | None:
        """(hue-bin mass, gray mass), both as fractions of all pixels."""
        pixels = np.asarray(image, dtype=np.float64).reshape(-1, 3)
        dist = np.abs(pixels - self.background[None, :]).max(axis=1)
        content = pixels[dist > self.config.background_tolerance]
        if content.shape[0] < self.config.min_content_fraction * pixels.shape[0]:
            return None
        hue, chroma = _hue_chroma(content)
        chromatic = chroma >= self.config.chroma_floor
        n = self.config.hue_bins
        bins = np.minimum((hue[chromatic] / 360.0 * n).astype(np.int64), n - 1)
        hist = np.bincount(bins, minlength=n).astype(np.float64) / pixels.shape[0]
        gray = float((~chromatic).sum()) / pixels.shape[0]
        return hist, gray

    def _similarity(self, hist: np.ndarray, gray: float, template: np.ndarray | None) -> float:
        overlap = gray if template is None else float(hist[template].sum())
        return 2.0 * min(1.0, overlap / self.config.saturation) - 1.0

    def score(self, view_id: str, image: np.ndarray) -> ViewScore:
        result = self._histogram(image)
        if result is None:
            floor = NEUTRAL_SCORE - self.config.neutral_margin
            return ViewScore(distractor=floor, static_score=floor)
        hist, gray = result
        sim_d = max(self._similarity(hist, gray, t) for t in self._distractor_templates)
        sim_s = max(self._similarity(hist, gray, t) for t in self._static_templates)
        return ViewScore(distractor=normalize_similarity(sim_d),
                         static_score=normalize_similarity(sim_s))


class ScoreFileScorer(Scorer):
    """Precomputed per-view scores loaded from a score file."""

    def __init__(self, scores: dict[str, ViewScore]) -> None:
        self._scores = scores

    @classmethod
    def from_file(cls, path: str | Path) -> "ScoreFileScorer":
        return cls(load_score_file(path))

    def score(self, view_id: str, image: np.ndarray) -> ViewScore:
        try:
            return self._scores[view_id]
        except KeyError:
            raise ValidationError(f"no score record for view id '{view_id}'") from None

    def __contains__(self, view_id: str) -> bool:
        return view_id in self._scores


def load_score_file(path: str | Path) -> dict[str, ViewScore]:
    """Parse a line-delimited score file: view id, distractor, static.

    Fields are tab-separated, one record per line, UTF-8. Scores must parse
    as decimals in [0, 1]; duplicate view ids reject the file.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"score file not found: {path}")
    scores: dict[str, ViewScore] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            view_id, d_raw, s_raw = parts
            try:
                d_val, s_val = float(d_raw), float(s_raw)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: scores must be decimals") from None
            if not (0.0 <= d_val <= 1.0 and 0.0 <= s_val <= 1.0):
                raise ValidationError(f"{path}:{lineno}: score outside [0, 1] for view '{view_id}'")
            if view_id in scores:
                raise ValidationError(f"{path}:{lineno}: duplicate view id '{view_id}'")
            scores[view_id] = ViewScore(distractor=d_val, static_score=s_val)
    return scores


def write_score_file(path: str | Path, scores: dict[str, ViewScore]) -> None:
    """Write score records in the interchange format (6 decimal digits)."""
    with open(path, "w", encoding="utf-8") as fh:
        for view_id, vs in scores.items():
            fh.write(f"{view_id}\t{vs.distractor:.6f}\t{vs.static_score:.6f}\n")
