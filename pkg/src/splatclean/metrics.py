"""Reconstruction quality and transient-removal efficacy metrics."""

from __future__ import annotations

import math

import numpy as np

from .dataset import DatasetManifest
from .errors import ValidationError
from .losses import ssim as _ssim
from .rasterizer import CameraPose, RasterConfig, render
from .scene import SceneModel


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    Identical images return +inf.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity (11x11 Gaussian window, unit range)."""
    return _ssim(a, b)


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _project(camera: CameraPose, points: np.ndarray) -> np.ndarray:
    w, h = camera.image_size
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    local = (points - camera.translation[None, :]) @ _rot(-camera.rotation).T
    return camera.zoom * local + center[None, :]


def _transient_region_flags(centers: np.ndarray, manifest: DatasetManifest,
                            visibility_scene: SceneModel | None = None) -> np.ndarray:
    """A center is transient-region when it projects inside the mask of at
    least one contaminated view where it is visible.

    For surviving primitives, pass the scene so per-view visibility comes
    from actual rasterization; for already-pruned primitives (which were
    contributing when removed) landing inside the image counts as visible.
    """
    flags = np.zeros(centers.shape[0], dtype=bool)
    contaminated = [v for v in manifest.train_views if v.has_transient]
    if not contaminated:
        return flags
    raster = RasterConfig(background=tuple(manifest.world.background))
    for view in contaminated:
        mask = manifest.load_mask(view)
        w, h = view.camera.image_size
        proj = _project(view.camera, centers)
        u = np.rint(proj[:, 0]).astype(int)
        v = np.rint(proj[:, 1]).astype(int)
        seen = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        if visibility_scene is not None:
            _, vis = render(visibility_scene, view.camera, raster)
            seen &= vis
        idx = np.nonzero(seen)[0]
        flags[idx] |= mask[v[idx], u[idx]]
    return flags


def removal_metrics(final_scene: SceneModel, pruned_centers: np.ndarray,
                    manifest: DatasetManifest) -> tuple[float, float]:
    """(distractor_removal_rate, static_retention) for a trained scene.

    Pruned and surviving primitives are classified by projecting centers into
    the contaminated train views and testing ground-truth mask overlap.
    With no transient-region primitives at all, the removal rate is 1.0 by
    convention (nothing to remove).
    """
    if not any(v.has_transient for v in manifest.train_views):
        raise ValidationError("dataset has no contaminated views / masks")
    pruned_centers = np.asarray(pruned_centers, dtype=np.float64).reshape(-1, 2)
    survivors = final_scene.positions

    pruned_flags = _transient_region_flags(pruned_centers, manifest)
    surviving_flags = _transient_region_flags(survivors, manifest, visibility_scene=final_scene)

    transient_total = int(pruned_flags.sum() + surviving_flags.sum())
    removal_rate = 1.0 if transient_total == 0 else float(pruned_flags.sum() / transient_total)

    static_pruned = int((~pruned_flags).sum())
    static_survived = int((~surviving_flags).sum())
    static_total = static_pruned + static_survived
    static_retention = 1.0 if static_total == 0 else float(static_survived / static_total)
    return removal_rate, static_retention
