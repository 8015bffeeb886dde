"""Synthetic multi-view benchmarks with controlled transient contamination.

The generator builds a ground-truth static scene of Gaussian blobs, samples
train cameras as zoomed windows over the world and wide test cameras, then
composites a distractor sprite (a solid disc with a color signature disjoint
from the static palette) into a fixed fraction of train views at world
positions chosen to be visible in as few other train views as possible.
Ground truth comes out as binary masks of the contaminated pixels.

Everything is deterministic per seed: regenerating with the same spec gives
byte-identical manifests, images and masks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import ppm
from .errors import ValidationError
from .rasterizer import CameraPose, RasterConfig, render
from .scene import GaussianPrimitive, SceneModel

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_VERSION = 1

# Palette hues stay within 50-215 degrees so no blend of two palette colors
# (or a palette color over the background) can drift near the sprite hue.
DEFAULT_PALETTE = (
    (0.20, 0.45, 0.85),
    (0.16, 0.65, 0.45),
    (0.85, 0.75, 0.25),
    (0.55, 0.55, 0.60),
    (0.15, 0.60, 0.65),
    (0.55, 0.62, 0.20),
)
DEFAULT_SPRITE_COLOR = (0.93, 0.12, 0.55)
# Hard mode drops the sprite hue into the static gamut to stress scoring.
HARD_MODE_SPRITE_COLOR = (0.88, 0.70, 0.20)


@dataclass
class GeneratorSpec:
    train_views: int = 40
    test_views: int = 8
    image_size: int = 64
    contamination: float = 0.25
    extent: float = 1.0
    static_blobs: int = 32
    blob_scale_range: tuple[float, float] = (0.03, 0.075)
    blob_opacity_range: tuple[float, float] = (0.88, 0.97)
    # Static blobs stay in the well-covered interior.
    blob_position_range: float = 0.25
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sprite_radius: float = 0.12
    sprites_per_view: int = 1
    hard_mode: bool = False
    # Two camera tiers: desk cameras watch the blob zone densely so static
    # geometry is seen from many views; narrow periphery cameras sit on an
    # outer ring in bursts (a few shots from almost the same standpoint) and
    # are the only regular watchers of the margin band, which is where
    # persistent transients can live.
    desk_cam_fraction: float = 0.50
    cam_window_frac: float = 0.28
    cam_center_range: float = 0.35
    periphery_window_frac: float = 0.25
    periphery_ring_radius: float = 0.95
    periphery_ring_jitter: float = 0.05
    periphery_burst_size: int = 3
    periphery_burst_angle_jitter: float = 0.04
    cam_rotation_range: float = 0.25
    # Transients linger: contamination lands on whole capture bursts first,
    # then on individual leftover views.
    contaminate_bursts: bool = True
    test_window_frac: float = 1.2
    test_center_jitter: float = 0.02
    # Sprites prefer the sparsely covered boundary ring; each candidate spot
    # is scored by how many other train windows see it and the minimum wins.
    sprite_ring: tuple[float, float] = (1.00, 1.12)
    sprite_candidates: int = 250
    # Keep static geometry clear of sprite spots (distractors occupy free
    # space) and sprite spots clear of each other.
    sprite_clearance: float = 0.02
    sprite_separation: float = 2.5
    # A lingering transient shifts a little between the shots of a burst
    # (fraction of the sprite radius, per axis).
    sprite_drift: float = 0.10
    # Privacy check inflates other windows by this margin so that not just
    # the spot but the whole reconstructed footprint stays out of view.
    sprite_footprint: float = 0.10

    def __post_init__(self) -> None:
        if not (0.0 <= self.contamination <= 1.0):
            raise ValidationError("contamination fraction must be in [0, 1]")
        if self.train_views < 1 or self.test_views < 0:
            raise ValidationError("need at least one train view")

    @property
    def sprite_color(self) -> tuple[float, float, float]:
        return HARD_MODE_SPRITE_COLOR if self.hard_mode else DEFAULT_SPRITE_COLOR


@dataclass
class WorldMeta:
    extent: float
    background: tuple[float, float, float]
    palette: tuple[tuple[float, float, float], ...]
    sprite_color: tuple[float, float, float]
    sprite_radius: float
    image_size: int
    seed: int
    gt_scene: str | None = None


@dataclass
class ViewRecord:
    view_id: str
    split: str
    camera: CameraPose
    image_path: str
    has_transient: bool
    mask_path: str | None = None
    sprite_world: tuple[float, float] | None = None


class DatasetManifest:
    def __init__(self, root: Path, world: WorldMeta, views: list[ViewRecord]) -> None:
        self.root = Path(root)
        self.world = world
        self.views = views

    @property
    def train_views(self) -> list[ViewRecord]:
        return [v for v in self.views if v.split == "train"]

    @property
    def test_views(self) -> list[ViewRecord]:
        return [v for v in self.views if v.split == "test"]

    def view(self, view_id: str) -> ViewRecord:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise ValidationError(f"unknown view id '{view_id}'")

    def load_image(self, record: ViewRecord) -> np.ndarray:
        return ppm.read_ppm(self.root / record.image_path)

    def load_mask(self, record: ViewRecord) -> np.ndarray:
        if record.mask_path is None:
            raise ValidationError(f"view '{record.view_id}' has no mask")
        return ppm.read_pgm(self.root / record.mask_path)


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _camera(center, rotation, window_side, image_size) -> CameraPose:
    return CameraPose(
        translation=np.asarray(center, dtype=np.float64),
        rotation=float(rotation),
        zoom=image_size / window_side,
        image_size=(image_size, image_size),
    )


def _half_window(camera: CameraPose) -> float:
    """Half the world-space side length of the camera's square window."""
    return camera.image_size[0] / (2.0 * camera.zoom)


def _window_contains(camera: CameraPose, point: np.ndarray, margin: float = 0.0) -> bool:
    local = _rot(-camera.rotation) @ (point - camera.translation)
    return bool(np.all(np.abs(local) <= _half_window(camera) + margin))


def _plan_sprite_spots(rng, flagged: list[int], cameras: list[CameraPose],
                       spec: GeneratorSpec, bursts: list[list[int]]) -> dict[int, np.ndarray]:
    """Assign each contaminated view a sprite world spot.

    Transients linger, so every contaminated capture burst shares one spot,
    chosen inside the intersection of the members' windows. The spot with
    the fewest outside watchers wins: the burst then holds the photometric
    majority there and the ghost persists. Contaminated views outside any
    burst get the least-watched spot of their own window.
    """
    margin_pad = spec.sprite_radius
    lo, hi = (r * spec.extent for r in spec.sprite_ring)
    min_gap = spec.sprite_separation * spec.sprite_radius
    inset = spec.sprite_radius * 1.2
    flagged_set = set(flagged)
    spots: dict[int, np.ndarray] = {}
    taken: list[np.ndarray] = []

    groups: list[list[int]] = []
    grouped: set[int] = set()
    for members in bursts:
        hit = [i for i in members if i in flagged_set]
        if len(hit) >= 2:
            groups.append(hit)
            grouped.update(hit)
    for i in flagged:
        if i not in grouped:
            groups.append([i])

    def watchers(pos: np.ndarray, group: list[int]) -> int:
        return sum(1 for idx, cam in enumerate(cameras)
                   if idx not in group and _window_contains(cam, pos, margin_pad))

    for group in groups:
        lead = cameras[group[0]]
        half = _half_window(lead)
        best, best_key = None, None
        for _ in range(spec.sprite_candidates):
            local = rng.uniform(-(half - inset), half - inset, size=2)
            pos = lead.translation + _rot(lead.rotation) @ local
            if not all(_window_contains(cameras[i], pos, -inset) for i in group[1:]):
                continue
            if taken and min(float(np.linalg.norm(pos - t)) for t in taken) < min_gap:
                continue
            radial = float(np.linalg.norm(pos))
            ring_miss = 0 if lo <= radial <= hi else 1
            key = (watchers(pos, group), ring_miss)
            if best_key is None or key < best_key:
                best, best_key = pos, key
        if best is None:
            best = lead.translation.copy()
        taken.append(best)
        drift = spec.sprite_drift * spec.sprite_radius
        for i in group:
            spots[i] = np.asarray(best) + rng.uniform(-drift, drift, size=2)
    return spots


def _build_static_scene(rng, spec: GeneratorSpec, sprite_spots: list[np.ndarray]) -> SceneModel:
    scene = SceneModel()
    palette = np.asarray(DEFAULT_PALETTE, dtype=np.float64)
    prims = []
    bound = spec.blob_position_range * spec.extent
    for _ in range(spec.static_blobs):
        scale = rng.uniform(*spec.blob_scale_range, size=2)
        clearance = 2.0 * scale.max() + spec.sprite_radius + spec.sprite_clearance
        pos = rng.uniform(-bound, bound, size=2)
        for _ in range(100):
            if not sprite_spots or min(float(np.linalg.norm(pos - s)) for s in sprite_spots) >= clearance:
                break
            pos = rng.uniform(-bound, bound, size=2)
        opacity = rng.uniform(*spec.blob_opacity_range)
        prims.append(GaussianPrimitive(
            position=pos,
            log_scale=np.log(scale),
            rotation=float(rng.uniform(0.0, math.pi)),
            color=palette[rng.integers(0, len(palette))].copy(),
            opacity_logit=float(np.log(opacity / (1.0 - opacity))),
            depth=float(rng.uniform(0.0, 1.0)),
        ))
    scene.add_gaussians(prims)
    return scene


def _paint_sprite(image8: np.ndarray, camera: CameraPose, world_pos: np.ndarray,
                  radius_world: float, color8: np.ndarray) -> np.ndarray:
    h, w = image8.shape[:2]
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    screen = camera.zoom * (_rot(-camera.rotation) @ (world_pos - camera.translation)) + center
    radius = camera.zoom * radius_world
    us = np.arange(w, dtype=np.float64) - screen[0]
    vs = np.arange(h, dtype=np.float64)[:, None] - screen[1]
    mask = us * us + vs * vs <= radius * radius
    image8[mask] = color8
    return mask


def _draw_contaminated(rng, spec: GeneratorSpec, n_flagged: int, bursts: list[list[int]]) -> list[int]:
    """Pick the contaminated views: whole capture bursts (a lingering
    transient spans adjacent shots), preferring a random burst subset whose
    sizes sum exactly to the target; leftover views fill any remainder."""
    if n_flagged == 0:
        return []
    chosen: list[int] = []
    if spec.contaminate_bursts and bursts:
        order = [int(b) for b in rng.permutation(len(bursts))]
        exact = _exact_burst_subset(order, [len(b) for b in bursts], n_flagged)
        if exact is not None:
            for b in exact:
                chosen.extend(bursts[b])
        else:
            for b in order:
                if len(chosen) + len(bursts[b]) <= n_flagged:
                    chosen.extend(bursts[b])
    pool = np.array([i for i in range(spec.train_views) if i not in set(chosen)])
    extra = n_flagged - len(chosen)
    if extra > 0:
        chosen.extend(rng.choice(pool, size=extra, replace=False).tolist())
    return sorted(int(i) for i in chosen)


def _exact_burst_subset(order: list[int], sizes: list[int], target: int) -> list[int] | None:
    """First subset of bursts (in random order, by backtracking) whose sizes
    sum exactly to the target."""

    def recurse(idx: int, left: int, acc: list[int]) -> list[int] | None:
        if left == 0:
            return acc
        if idx >= len(order) or left < 0:
            return None
        take = recurse(idx + 1, left - sizes[order[idx]], acc + [order[idx]])
        if take is not None:
            return take
        return recurse(idx + 1, left, acc)

    return recurse(0, target, [])


def generate_synthetic(spec: GeneratorSpec, seed: int, out_dir: str | Path) -> DatasetManifest:
    """Render the benchmark to disk and return the loaded manifest."""
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create dataset directory {out}: {exc}") from exc

    rng = np.random.default_rng(seed)
    n_desk = int(round(spec.desk_cam_fraction * spec.train_views))
    n_periphery = spec.train_views - n_desk
    cameras = []
    bursts: list[list[int]] = []
    for _ in range(n_desk):
        window = 2.0 * spec.extent * spec.cam_window_frac
        center = rng.uniform(-spec.cam_center_range * spec.extent,
                             spec.cam_center_range * spec.extent, size=2)
        rotation = rng.uniform(-spec.cam_rotation_range, spec.cam_rotation_range)
        cameras.append(_camera(center, rotation, window, spec.image_size))
    sizes: list[int] = []
    if n_periphery:
        count = max(1, n_periphery // spec.periphery_burst_size)
        sizes = [n_periphery // count] * count
        for k in range(n_periphery - sum(sizes)):
            sizes[-(k + 1) if k < count else 0] += 1
    for b, size in enumerate(sizes):
        # evenly spaced anchors keep bursts from watching each other's spots;
        # desk windows never reach the outer ring at all
        anchor = 2.0 * math.pi * b / max(1, len(sizes)) + rng.uniform(-0.1, 0.1)
        anchor_radius = spec.periphery_ring_radius + rng.uniform(-spec.periphery_ring_jitter,
                                                                 spec.periphery_ring_jitter)
        members = []
        for _ in range(size):
            angle = anchor + rng.uniform(-spec.periphery_burst_angle_jitter,
                                         spec.periphery_burst_angle_jitter)
            radius = anchor_radius + rng.uniform(-0.02, 0.02)
            center = radius * spec.extent * np.array([math.cos(angle), math.sin(angle)])
            window = 2.0 * spec.extent * spec.periphery_window_frac
            rotation = rng.uniform(-spec.cam_rotation_range, spec.cam_rotation_range)
            members.append(len(cameras))
            cameras.append(_camera(center, rotation, window, spec.image_size))
        bursts.append(members)

    test_window = 2.0 * spec.extent * spec.test_window_frac
    test_cameras = []
    for _ in range(spec.test_views):
        center = rng.uniform(-spec.test_center_jitter, spec.test_center_jitter, size=2)
        test_cameras.append(_camera(center, 0.0, test_window, spec.image_size))

    n_flagged = math.ceil(spec.contamination * spec.train_views)
    flagged = _draw_contaminated(rng, spec, n_flagged, bursts)
    planned = _plan_sprite_spots(rng, flagged, cameras, spec, bursts)
    sprite_spots: dict[int, list[np.ndarray]] = {}
    taken: list[np.ndarray] = []
    for i in flagged:
        spots = [planned[i]]
        for _ in range(spec.sprites_per_view - 1):
            jitter = rng.uniform(-0.5, 0.5, size=2) * _half_window(cameras[i])
            spots.append(planned[i] * 0.0 + cameras[i].translation + jitter)
        sprite_spots[i] = spots
        taken.extend(spots)

    scene = _build_static_scene(rng, spec, taken)
    scene.save(out / "gt_scene.npz")
    raster = RasterConfig(background=spec.background)

    sprite8 = ppm.quantize(np.asarray(spec.sprite_color)[None, None, :])[0, 0]
    records = []
    for i, cam in enumerate(cameras):
        view_id = f"train_{i:03d}"
        clean, _ = render(scene, cam, raster)
        image8 = ppm.quantize(clean)
        rec = ViewRecord(view_id=view_id, split="train", camera=cam,
                         image_path=f"images/{view_id}.ppm", has_transient=False)
        if i in sprite_spots:
            mask_total = np.zeros(image8.shape[:2], dtype=bool)
            for pos in sprite_spots[i]:
                mask_total |= _paint_sprite(image8, cam, pos, spec.sprite_radius, sprite8)
            rec.has_transient = True
            rec.mask_path = f"masks/{view_id}.pgm"
            rec.sprite_world = tuple(float(x) for x in sprite_spots[i][0])
            ppm.write_pgm(out / rec.mask_path, mask_total)
        ppm.write_ppm(out / rec.image_path, image8)
        records.append(rec)

    for i, cam in enumerate(test_cameras):
        view_id = f"test_{i:03d}"
        clean, _ = render(scene, cam, raster)
        ppm.write_ppm(out / f"images/{view_id}.ppm", ppm.quantize(clean))
        records.append(ViewRecord(view_id=view_id, split="test", camera=cam,
                                  image_path=f"images/{view_id}.ppm", has_transient=False))

    world = WorldMeta(
        extent=spec.extent, background=spec.background, palette=tuple(DEFAULT_PALETTE),
        sprite_color=spec.sprite_color, sprite_radius=spec.sprite_radius,
        image_size=spec.image_size, seed=seed, gt_scene="gt_scene.npz",
    )
    _write_manifest(out / MANIFEST_NAME, world, records, spec)
    return DatasetManifest(out, world, records)


def _write_manifest(path: Path, world: WorldMeta, records: list[ViewRecord], spec: GeneratorSpec) -> None:
    lines = []
    head = {"record": "world", "version": MANIFEST_VERSION, "generator": asdict(spec)}
    head.update({k: v for k, v in asdict(world).items()})
    lines.append(json.dumps(head, sort_keys=True))
    for rec in records:
        cam = rec.camera
        entry = {
            "record": "view",
            "view_id": rec.view_id,
            "split": rec.split,
            "camera": {
                "tx": float(cam.translation[0]), "ty": float(cam.translation[1]),
                "rotation": float(cam.rotation), "zoom": float(cam.zoom),
                "width": cam.image_size[0], "height": cam.image_size[1],
            },
            "image": rec.image_path,
            "has_transient": rec.has_transient,
        }
        if rec.mask_path is not None:
            entry["mask"] = rec.mask_path
        if rec.sprite_world is not None:
            entry["sprite_world"] = list(rec.sprite_world)
        lines.append(json.dumps(entry, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path: str | Path) -> DatasetManifest:
    """Load and fully validate a dataset directory (or manifest file)."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    root = manifest_path.parent
    if not manifest_path.exists():
        raise ValidationError(f"manifest not found: {manifest_path}")

    world: WorldMeta | None = None
    records: list[ViewRecord] = []
    seen: set[str] = set()
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{manifest_path}:{lineno}: malformed record: {exc}") from None
            kind = entry.get("record")
            if kind == "world":
                if world is not None:
                    raise ValidationError(f"{manifest_path}:{lineno}: duplicate world record")
                if entry.get("version") != MANIFEST_VERSION:
                    raise ValidationError(f"{manifest_path}:{lineno}: unsupported manifest version")
                world = WorldMeta(
                    extent=float(entry["extent"]),
                    background=tuple(entry["background"]),
                    palette=tuple(tuple(c) for c in entry["palette"]),
                    sprite_color=tuple(entry["sprite_color"]),
                    sprite_radius=float(entry["sprite_radius"]),
                    image_size=int(entry["image_size"]),
                    seed=int(entry["seed"]),
                    gt_scene=entry.get("gt_scene"),
                )
            elif kind == "view":
                records.append(_parse_view(entry, manifest_path, lineno, seen))
            else:
                raise ValidationError(f"{manifest_path}:{lineno}: unknown record type {kind!r}")
    if world is None:
        raise ValidationError(f"{manifest_path}: missing world record")

    for rec in records:
        if not (root / rec.image_path).exists():
            raise ValidationError(f"view '{rec.view_id}': image file missing ({rec.image_path})")
        if rec.has_transient:
            if rec.mask_path is None or not (root / rec.mask_path).exists():
                raise ValidationError(f"view '{rec.view_id}': contaminated view lacks a mask file")
    return DatasetManifest(root, world, records)


def _parse_view(entry: dict, manifest_path: Path, lineno: int, seen: set[str]) -> ViewRecord:
    try:
        view_id = entry["view_id"]
        split = entry["split"]
        cam = entry["camera"]
        camera = CameraPose(
            translation=np.array([cam["tx"], cam["ty"]], dtype=np.float64),
            rotation=float(cam["rotation"]),
            zoom=float(cam["zoom"]),
            image_size=(int(cam["width"]), int(cam["height"])),
        )
        has_transient = bool(entry["has_transient"])
        image_path = entry["image"]
    except KeyError as exc:
        raise ValidationError(f"{manifest_path}:{lineno}: view record missing field {exc}") from None
    if view_id in seen:
        raise ValidationError(f"{manifest_path}:{lineno}: duplicate view id '{view_id}'")
    seen.add(view_id)
    if split not in ("train", "test"):
        raise ValidationError(f"{manifest_path}:{lineno}: bad split {split!r}")
    if split == "test" and has_transient:
        raise ValidationError(f"{manifest_path}:{lineno}: test view '{view_id}' flagged has_transient")
    sprite_world = entry.get("sprite_world")
    return ViewRecord(
        view_id=view_id, split=split, camera=camera, image_path=image_path,
        has_transient=has_transient, mask_path=entry.get("mask"),
        sprite_world=tuple(sprite_world) if sprite_world else None,
    )
