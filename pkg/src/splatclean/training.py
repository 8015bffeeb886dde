"""Full optimization loop with schedule gates, adaptive density control,
semantic accumulation, opacity regularization and periodic pruning.

Iterations are 1-based. All schedule fields are stored at reference scale and
shrunk by `schedule_scale` for desk-scale runs (default 1/10: accumulation
from iteration 50, regularization from 200, pruning from 500 every 100, 2000
iterations total). Runs are deterministic per seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

import numpy as np

from .accumulate import accumulate
from .dataset import DatasetManifest
from .errors import TrainingError, ValidationError
from .losses import clip_regularizer, photometric_loss, total_loss
from .metrics import psnr as psnr_metric
from .metrics import ssim as ssim_metric
from .pruning import prune_mask
from .rasterizer import RasterConfig, backward_from_cache, forward_pass
from .scene import GaussianPrimitive, SceneModel
from .scoring import ScoreFileScorer, Scorer, SyntheticOracleScorer

PHASE_ACCUMULATE = "accumulate"
PHASE_REGULARIZE = "regularize"
PHASE_PRUNE = "prune"

PARAM_GROUPS = ("positions", "log_scales", "rotations", "colors", "opacity_logits")

# scale ceiling keeps every primitive local: desk content can never
# reach into the margin band where transients live, and vice versa
LOG_SCALE_RANGE = (math.log(1e-4), math.log(0.08))
OPACITY_LOGIT_RANGE = (-8.0, 8.0)


@dataclass
class TrainConfig:
    total_iterations: int = 20000
    beta: float = 0.1
    lambda_c: float = 0.01
    tau: float = 0.015
    n_min: int = 10
    alpha_min: float = 0.1
    accum_start: int = 500
    reg_start: int = 2000
    prune_start: int = 5000
    prune_interval: int = 1000
    densify_start: int = 500
    densify_end: int = 2000
    densify_interval: int = 300
    densify_grad_threshold: float = 4e-4
    split_scale_threshold: float = 0.10
    split_factor: float = 1.6
    split_offset: float = 0.5
    max_gaussians: int = 1200
    lr_position: float = 2e-3
    lr_position_final_mult: float = 0.1
    lr_log_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_color: float = 3e-2
    lr_opacity: float = 5e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    # large enough that parameters with dead gradients stay put instead
    # of sliding at full speed on vanishing bias terms
    adam_eps: float = 1e-4
    ssim_weight: float = 0.2
    seed: int = 0
    scorer: str = "oracle"
    score_file: str | None = None
    schedule_scale: float = 0.1
    init_gaussians: int = 200
    init_mode: str = "target_pixels"
    init_opacity: float = 0.3
    init_scale: float = 0.045
    checkpoint_interval: int = 0

    def scaled(self, value: int) -> int:
        return max(1, int(round(value * self.schedule_scale)))

    @property
    def iterations(self) -> int:
        return self.scaled(self.total_iterations)

    def validate(self) -> None:
        a, r, p, t = (self.scaled(self.accum_start), self.scaled(self.reg_start),
                      self.scaled(self.prune_start), self.iterations)
        if not (0 < a <= r <= p <= t):
            raise ValidationError(
                f"schedule gates must satisfy 0 < accum ({a}) <= reg ({r}) <= prune ({p}) <= total ({t})")
        if self.scaled(self.prune_interval) < 1:
            raise ValidationError("prune_interval must be at least 1")
        if self.beta <= 0:
            raise ValidationError("beta must be positive")
        if self.scorer not in ("oracle", "file"):
            raise ValidationError(f"unknown scorer '{self.scorer}' (expected oracle|file)")
        if self.scorer == "file" and not self.score_file:
            raise ValidationError("scorer 'file' requires score_file")
        if self.init_mode not in ("target_pixels", "uniform"):
            raise ValidationError(f"unknown init_mode '{self.init_mode}'")


def schedule_gate(iteration: int, config: TrainConfig) -> set[str]:
    """Phases enabled at a (1-based) iteration under the scaled schedule."""
    if iteration < 0:
        raise ValidationError("iteration must be non-negative")
    phases = set()
    if iteration >= config.scaled(config.accum_start):
        phases.add(PHASE_ACCUMULATE)
    if iteration >= config.scaled(config.reg_start):
        phases.add(PHASE_REGULARIZE)
    prune_start = config.scaled(config.prune_start)
    if iteration >= prune_start and (iteration - prune_start) % config.scaled(config.prune_interval) == 0:
        phases.add(PHASE_PRUNE)
    return phases


# -- flat key=value config files ---------------------------------------------

def save_config(config: TrainConfig, path: str | Path) -> None:
    lines = []
    for f in fields(TrainConfig):
        value = getattr(config, f.name)
        if value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _coerce(name: str, raw: str, target_type) -> object:
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if target_type is bool or target_type == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValidationError(f"config field {name}: bad boolean {raw!r}")
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)  # accepts inf
    except ValueError:
        raise ValidationError(f"config field {name}: cannot parse {raw!r}") from None
    return raw


def load_config(path: str | Path, overrides: dict | None = None) -> TrainConfig:
    """Parse a flat `key = value` document; overrides win over file values."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    known = {f.name: f.type for f in fields(TrainConfig)}
    type_map = {"int": int, "float": float, "str": str, "str | None": str, "bool": bool}
    values: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ValidationError(f"{path}:{lineno}: unknown config field '{key}'")
        values[key] = _coerce(key, raw, type_map.get(str(known[key]), str))
    if overrides:
        values.update(overrides)
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


# -- reporting ----------------------------------------------------------------

@dataclass
class PruneEvent:
    iteration: int
    removed: int
    semantic_clause: int
    unstable_clause: int
    centers: list[list[float]] = field(default_factory=list)


@dataclass
class DensifyEvent:
    iteration: int
    cloned: int
    split: int


@dataclass
class TrainReport:
    seed: int
    loss_rows: list[list[float]] = field(default_factory=list)
    prune_events: list[PruneEvent] = field(default_factory=list)
    densify_events: list[DensifyEvent] = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def pruned_centers(self) -> np.ndarray:
        if not self.prune_events:
            return np.zeros((0, 2))
        rows = [c for ev in self.prune_events for c in ev.centers]
        return np.asarray(rows, dtype=np.float64).reshape(-1, 2)

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "loss_rows": self.loss_rows,
            "prune_events": [asdict(e) for e in self.prune_events],
            "densify_events": [asdict(e) for e in self.densify_events],
            "final_metrics": self.final_metrics,
            "wall_time": self.wall_time,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainReport":
        data = json.loads(text)
        return cls(
            seed=data["seed"],
            loss_rows=data["loss_rows"],
            prune_events=[PruneEvent(**e) for e in data["prune_events"]],
            densify_events=[DensifyEvent(**e) for e in data["densify_events"]],
            final_metrics=data["final_metrics"],
            wall_time=data["wall_time"],
        )

    def write_log_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,photometric,semantic,total,primitive_count\n")
            for row in self.loss_rows:
                fh.write(f"{int(row[0])},{row[1]!r},{row[2]!r},{row[3]!r},{int(row[4])}\n")


def reports_equal(a: TrainReport, b: TrainReport) -> bool:
    """Determinism comparison; wall time is measurement noise, not state."""
    strip = lambda r: {k: v for k, v in json.loads(r.to_json()).items() if k != "wall_time"}
    return strip(a) == strip(b)


# -- optimizer ----------------------------------------------------------------

class AdamState:
    """Adam with first/second moments, supporting row add/remove so the
    state tracks densification and pruning."""

    def __init__(self, scene: SceneModel, config: TrainConfig) -> None:
        self.config = config
        self.step_count = 0
        self.moments = {
            name: (np.zeros_like(getattr(scene, name)), np.zeros_like(getattr(scene, name)))
            for name in PARAM_GROUPS
        }

    def add_rows(self, count: int) -> None:
        for name, (m, v) in self.moments.items():
            pad = ((0, count), (0, 0)) if m.ndim == 2 else ((0, count),)
            self.moments[name] = (np.pad(m, pad), np.pad(v, pad))

    def keep_rows(self, keep: np.ndarray) -> None:
        for name, (m, v) in self.moments.items():
            self.moments[name] = (m[keep], v[keep])

    def step(self, scene: SceneModel, grads: dict[str, np.ndarray], lrs: dict[str, float]) -> None:
        cfg = self.config
        self.step_count += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for name in PARAM_GROUPS:
            g = grads[name]
            m, v = self.moments[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)
            param = getattr(scene, name)
            param -= lrs[name] * update


# -- adaptive density control --------------------------------------------------

def densify(scene: SceneModel, avg_position_grads: np.ndarray, config: TrainConfig,
            ) -> tuple[int, int, list[int], int]:
    """Clone small / split large primitives whose accumulated screen-space
    position gradient exceeds the threshold.

    Split children sit at +/- split_offset standard deviations along the
    parent's major axis with scales shrunk by split_factor; parents are
    removed. All offspring start with zeroed semantic statistics.
    Returns (cloned, split, removed_parent_indices, added_count).
    """
    n = len(scene)
    avg = np.asarray(avg_position_grads, dtype=np.float64)
    if avg.shape != (n,):
        raise ValidationError("gradient statistics do not cover the current scene")
    hot = avg > config.densify_grad_threshold
    if not hot.any():
        return 0, 0, [], 0
    sigma = np.exp(scene.log_scales)
    sigma_max = sigma.max(axis=1)
    clone_idx = np.nonzero(hot & (sigma_max <= config.split_scale_threshold))[0]
    split_idx = np.nonzero(hot & (sigma_max > config.split_scale_threshold))[0]
    budget = config.max_gaussians - n
    if budget < len(clone_idx) + 2 * len(split_idx):
        return 0, 0, [], 0

    new_prims: list[GaussianPrimitive] = []
    for j in clone_idx:
        new_prims.append(scene.primitive(int(j)))
    for j in split_idx:
        parent = scene.primitive(int(j))
        axis = int(np.argmax(sigma[j]))
        direction = np.array([math.cos(parent.rotation), math.sin(parent.rotation)])
        if axis == 1:
            direction = np.array([-math.sin(parent.rotation), math.cos(parent.rotation)])
        offset = config.split_offset * sigma[j, axis] * direction
        child_scale = parent.log_scale - math.log(config.split_factor)
        for sign in (1.0, -1.0):
            new_prims.append(GaussianPrimitive(
                position=parent.position + sign * offset,
                log_scale=child_scale.copy(),
                rotation=parent.rotation,
                color=parent.color.copy(),
                opacity_logit=parent.opacity_logit,
                depth=parent.depth,
            ))
    if new_prims:
        scene.add_gaussians(new_prims)
    removed = [int(j) for j in split_idx]
    if removed:
        scene.remove_gaussians(removed)
    return len(clone_idx), len(split_idx), removed, len(new_prims)


# -- initialization -------------------------------------------------------------

def _init_scene(config: TrainConfig, dataset: DatasetManifest, rng: np.random.Generator) -> SceneModel:
    scene = SceneModel()
    extent = dataset.world.extent
    background = np.asarray(dataset.world.background, dtype=np.float64)
    prims: list[GaussianPrimitive] = []

    def base(pos, color) -> GaussianPrimitive:
        scale = config.init_scale * rng.uniform(0.7, 1.3, size=2)
        return GaussianPrimitive(
            position=np.asarray(pos, dtype=np.float64),
            log_scale=np.log(scale),
            rotation=float(rng.uniform(0.0, math.pi)),
            color=np.clip(np.asarray(color, dtype=np.float64), 0.0, 1.0),
            opacity_logit=float(math.log(config.init_opacity / (1.0 - config.init_opacity))),
            depth=float(rng.uniform(0.0, 1.0)),
        )

    if config.init_mode == "uniform":
        for _ in range(config.init_gaussians):
            prims.append(base(rng.uniform(-0.9 * extent, 0.9 * extent, size=2),
                              rng.uniform(0.2, 0.8, size=3)))
    else:
        # Seed primitives from observed pixels: sample train-image pixels
        # weighted by distance from the background, back-project to world.
        train = dataset.train_views
        per_view = [config.init_gaussians // len(train)] * len(train)
        for k in range(config.init_gaussians - sum(per_view)):
            per_view[k] += 1
        for record, count in zip(train, per_view):
            if count == 0:
                continue
            image = dataset.load_image(record)
            h, w = image.shape[:2]
            # seed only from content pixels: near-background samples would
            # plant dark occluders that never earn photometric gradient
            dist = np.abs(image - background[None, None, :]).max(axis=2).ravel()
            weight = np.where(dist > 0.08, dist ** 3, 0.0)
            available = int((weight > 0).sum())
            if available == 0:
                continue
            take = min(count, available)
            idx = rng.choice(h * w, size=take, replace=False, p=weight / weight.sum())
            cam = record.camera
            cos_r, sin_r = math.cos(cam.rotation), math.sin(cam.rotation)
            rot = np.array([[cos_r, -sin_r], [sin_r, cos_r]])
            center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
            for flat in idx:
                v, u = divmod(int(flat), w)
                world = cam.translation + rot @ ((np.array([u, v], dtype=np.float64) - center) / cam.zoom)
                prims.append(base(world, image[v, u]))
    scene.add_gaussians(prims)
    return scene


# -- main loop -------------------------------------------------------------------

def make_scorer(config: TrainConfig, dataset: DatasetManifest) -> Scorer:
    if config.scorer == "file":
        scorer = ScoreFileScorer.from_file(config.score_file)
        for record in dataset.train_views:
            if record.view_id not in scorer:
                raise ValidationError(f"score file lacks a record for view '{record.view_id}'")
        return scorer
    return SyntheticOracleScorer.from_manifest(dataset)


def train(config: TrainConfig, dataset: DatasetManifest, scorer: Scorer | None = None,
          out_dir: str | Path | None = None) -> tuple[TrainReport, SceneModel]:
    """Run the full loop; deterministic given config.seed."""
    config.validate()
    start = time.perf_counter()
    if scorer is None:
        scorer = make_scorer(config, dataset)

    train_views = dataset.train_views
    if not train_views:
        raise ValidationError("dataset has no training views")
    targets = {rec.view_id: dataset.load_image(rec) for rec in train_views}
    raster = RasterConfig(background=tuple(dataset.world.background))

    init_seq, shuffle_seq, split_seq = np.random.SeedSequence(config.seed).spawn(3)
    rng_init = np.random.default_rng(init_seq)
    rng_shuffle = np.random.default_rng(shuffle_seq)

    scene = _init_scene(config, dataset, rng_init)
    adam = AdamState(scene, config)
    grad_accum = np.zeros(len(scene))
    grad_denom = np.zeros(len(scene))

    report = TrainReport(seed=config.seed)
    total = config.iterations
    densify_start = config.scaled(config.densify_start)
    densify_end = config.scaled(config.densify_end)
    densify_interval = config.scaled(config.densify_interval)

    schedule_order: list[int] = []
    for iteration in range(1, total + 1):
        if not schedule_order:
            schedule_order = list(rng_shuffle.permutation(len(train_views)))
        record = train_views[schedule_order.pop()]
        target = targets[record.view_id]

        cache = forward_pass(scene, record.camera, raster)
        phases = schedule_gate(iteration, config)

        if PHASE_ACCUMULATE in phases:
            view_score = scorer.score(record.view_id, cache.image)
            accumulate(scene, cache.visibility, view_score, config.beta)

        photo, pixel_grad = photometric_loss(cache.image, target, config.ssim_weight)
        grads = backward_from_cache(scene, cache, pixel_grad)
        semantic = 0.0
        if PHASE_REGULARIZE in phases and config.lambda_c != 0.0:
            scores = scene.normalized_scores()
            opacities = scene.opacities
            semantic, d_alpha = clip_regularizer(scores, opacities)
            grads.opacity_logits += config.lambda_c * d_alpha * opacities * (1.0 - opacities)
        breakdown = total_loss(photo, semantic, config.lambda_c)
        report.loss_rows.append([iteration, breakdown.photometric, breakdown.semantic,
                                 breakdown.total, len(scene)])

        decay = config.lr_position_final_mult ** (iteration / total)
        adam.step(scene, {
            "positions": grads.positions,
            "log_scales": grads.log_scales,
            "rotations": grads.rotations,
            "colors": grads.colors,
            "opacity_logits": grads.opacity_logits,
        }, {
            "positions": config.lr_position * decay,
            "log_scales": config.lr_log_scale,
            "rotations": config.lr_rotation,
            "colors": config.lr_color,
            "opacity_logits": config.lr_opacity,
        })
        np.clip(scene.colors, 0.0, 1.0, out=scene.colors)
        np.clip(scene.log_scales, *LOG_SCALE_RANGE, out=scene.log_scales)
        np.clip(scene.opacity_logits, *OPACITY_LOGIT_RANGE, out=scene.opacity_logits)

        vis = cache.visibility
        grad_accum[vis] += np.linalg.norm(grads.screen_positions[vis], axis=1)
        grad_denom[vis] += 1.0

        if densify_start <= iteration <= densify_end and iteration % densify_interval == 0:
            avg = np.divide(grad_accum, grad_denom, out=np.zeros_like(grad_accum),
                            where=grad_denom > 0)
            before = len(scene)
            cloned, split, removed, added = densify(scene, avg, config)
            if added:
                adam.add_rows(added)
                grad_accum = np.concatenate([grad_accum, np.zeros(added)])
                grad_denom = np.concatenate([grad_denom, np.zeros(added)])
                if removed:
                    keep = np.ones(before + added, dtype=bool)
                    keep[removed] = False
                    adam.keep_rows(keep)
                    grad_accum = grad_accum[keep]
                    grad_denom = grad_denom[keep]
                report.densify_events.append(DensifyEvent(iteration=iteration, cloned=cloned, split=split))
            grad_accum[:] = 0.0
            grad_denom[:] = 0.0

        if PHASE_PRUNE in phases:
            scores = scene.normalized_scores()
            mask = prune_mask(scores, scene.view_counts, scene.opacities,
                              config.tau, config.n_min, config.alpha_min)
            if mask.any():
                if mask.all():
                    raise TrainingError(f"iteration {iteration}: pruning removed every primitive")
                semantic_clause = int(np.sum(scores[mask] > config.tau))
                unstable = int(np.sum((scene.view_counts[mask] < config.n_min)
                                      & (scene.opacities[mask] < config.alpha_min)))
                centers = scene.positions[mask].tolist()
                idx = np.nonzero(mask)[0]
                scene.remove_gaussians(idx)
                keep = ~mask
                adam.keep_rows(keep)
                grad_accum = grad_accum[keep]
                grad_denom = grad_denom[keep]
                report.prune_events.append(PruneEvent(
                    iteration=iteration, removed=int(mask.sum()),
                    semantic_clause=semantic_clause, unstable_clause=unstable,
                    centers=centers))

        if out_dir is not None and config.checkpoint_interval > 0 \
                and iteration % config.checkpoint_interval == 0 and iteration < total:
            scene.save(Path(out_dir) / f"checkpoint_{iteration:06d}.npz")

    report.final_metrics = _final_metrics(scene, dataset, raster)
    report.wall_time = time.perf_counter() - start
    return report, scene


def _final_metrics(scene: SceneModel, dataset: DatasetManifest, raster: RasterConfig) -> dict:
    rows = []
    for record in dataset.test_views:
        target = dataset.load_image(record)
        image = forward_pass(scene, record.camera, raster).image
        rows.append((psnr_metric(image, target), ssim_metric(image, target)))
    metrics = {"primitive_count": len(scene)}
    if rows:
        metrics["test_psnr"] = float(np.mean([r[0] for r in rows]))
        metrics["test_ssim"] = float(np.mean([r[1] for r in rows]))
    return metrics
