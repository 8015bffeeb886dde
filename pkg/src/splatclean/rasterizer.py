"""Differentiable 2D splatting renderer.

Primitives are sorted by depth (ties broken by index) and alpha-composited
front to back. Per pixel, a primitive contributes weight

    w = a * T,   a = opacity * exp(-0.5 * d^2),   T = prod_before (1 - a_k)

where d^2 is the Mahalanobis distance to the screen-space ellipse. The pixel
color is sum(w_i * color_i) + T_final * background, which is a convex
combination, so outputs stay in [0, 1] by construction. A primitive is
visible in a view iff its peak contribution weight reaches `eps_vis`.

`backward_from_cache` returns analytic gradients of a scalar loss (given its
pixel gradient) for every primitive parameter; primitives that are invisible
in the view receive exactly zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .scene import SceneModel


@dataclass
class CameraPose:
    """Affine window over the world plane.

    translation: world point mapped to the image center.
    rotation: camera roll, radians.
    zoom: pixels per world unit (> 0).
    image_size: (width, height) in pixels.
    """

    translation: np.ndarray
    rotation: float
    zoom: float
    image_size: tuple[int, int]

    def __post_init__(self) -> None:
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.zoom <= 0:
            raise ValidationError("camera zoom must be positive")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise ValidationError("image_size must be at least 1x1")


@dataclass
class RasterConfig:
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # Screen-space support cutoff in standard deviations. Gradient checks run
    # with this wide enough that the truncation boundary carries no weight.
    sigma_cutoff: float = 3.0
    # Peak contribution weight that counts as "contributed to the image".
    eps_vis: float = 1.0 / 255.0
    # Compositing alpha ceiling; keeps 1/(1-a) bounded in the backward pass.
    alpha_max: float = 0.995


@dataclass
class RenderGradients:
    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    colors: np.ndarray
    opacity_logits: np.ndarray
    # d(loss)/d(screen-space mean); densification thresholds look at this.
    screen_positions: np.ndarray


@dataclass
class _Splat:
    index: int
    u0: int
    u1: int
    v0: int
    v1: int
    weight: np.ndarray  # effective alpha a on the bbox, already clamped
    gauss: np.ndarray  # exp(-d^2/2) on the bbox, zero outside the ellipse
    clamped: np.ndarray
    inv_cov: np.ndarray
    mean: np.ndarray
    axes: np.ndarray  # A = zoom * R(theta - cam_rot)


@dataclass
class ForwardCache:
    image: np.ndarray
    visibility: np.ndarray
    camera: CameraPose
    config: RasterConfig
    order: np.ndarray
    splats: list[_Splat] = field(default_factory=list)
    colors: np.ndarray | None = None
    opacities: np.ndarray | None = None


def _rot(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def forward_pass(scene: SceneModel, camera: CameraPose, config: RasterConfig | None = None) -> ForwardCache:
    cfg = config or RasterConfig()
    w, h = camera.image_size
    n = len(scene)
    image = np.empty((h, w, 3), dtype=np.float64)
    bg = np.asarray(cfg.background, dtype=np.float64)
    visibility = np.zeros(n, dtype=bool)
    cache = ForwardCache(image=image, visibility=visibility, camera=camera,
                         config=cfg, order=np.zeros(0, dtype=np.int64))
    if n == 0:
        image[:] = bg
        return cache

    order = np.argsort(scene.depths, kind="stable")
    cache.order = order
    cache.colors = scene.colors
    opacities = scene.opacities
    cache.opacities = opacities

    rot_cam = _rot(-camera.rotation)
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    means = scene.positions - camera.translation[None, :]
    means = camera.zoom * means @ rot_cam.T + center[None, :]

    transmittance = np.ones((h, w), dtype=np.float64)
    accum = np.zeros((h, w, 3), dtype=np.float64)
    k = cfg.sigma_cutoff
    k2 = k * k

    for j in order:
        angle = scene.rotations[j] - camera.rotation
        axes = camera.zoom * _rot(angle)
        sig = np.exp(scene.log_scales[j])
        # Screen covariance A D A^T with D = diag(sig^2); marginal stds give
        # the tight axis-aligned extent of the cutoff ellipse.
        a00 = axes[0, 0] * sig[0]
        a01 = axes[0, 1] * sig[1]
        a10 = axes[1, 0] * sig[0]
        a11 = axes[1, 1] * sig[1]
        c00 = a00 * a00 + a01 * a01
        c01 = a00 * a10 + a01 * a11
        c11 = a10 * a10 + a11 * a11
        mu = means[j]
        ru = k * np.sqrt(c00)
        rv = k * np.sqrt(c11)
        u0 = max(0, int(np.ceil(mu[0] - ru)))
        u1 = min(w - 1, int(np.floor(mu[0] + ru)))
        v0 = max(0, int(np.ceil(mu[1] - rv)))
        v1 = min(h - 1, int(np.floor(mu[1] + rv)))
        if u0 > u1 or v0 > v1:
            continue
        det = c00 * c11 - c01 * c01
        inv_cov = np.array([[c11, -c01], [-c01, c00]]) / det
        du = np.arange(u0, u1 + 1, dtype=np.float64) - mu[0]
        dv = np.arange(v0, v1 + 1, dtype=np.float64)[:, None] - mu[1]
        d2 = inv_cov[0, 0] * du * du + 2.0 * inv_cov[0, 1] * du * dv + inv_cov[1, 1] * dv * dv
        inside = d2 <= k2
        if not inside.any():
            continue
        gauss = np.where(inside, np.exp(-0.5 * d2), 0.0)
        raw = opacities[j] * gauss
        clamped = raw > cfg.alpha_max
        alpha_eff = np.minimum(raw, cfg.alpha_max)

        sub_t = transmittance[v0:v1 + 1, u0:u1 + 1]
        weight = alpha_eff * sub_t
        accum[v0:v1 + 1, u0:u1 + 1] += weight[:, :, None] * scene.colors[j]
        if weight.max() >= cfg.eps_vis:
            visibility[j] = True
        sub_t *= 1.0 - alpha_eff

        cache.splats.append(_Splat(
            index=int(j), u0=u0, u1=u1, v0=v0, v1=v1,
            weight=alpha_eff, gauss=gauss, clamped=clamped,
            inv_cov=inv_cov, mean=mu.copy(),
            axes=axes,
        ))

    image[:] = accum + transmittance[:, :, None] * bg
    return cache


def render(scene: SceneModel, camera: CameraPose, config: RasterConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Render the scene; returns (HxWx3 image in [0,1], per-primitive visibility)."""
    cache = forward_pass(scene, camera, config)
    return cache.image, cache.visibility


def backward_from_cache(scene: SceneModel, cache: ForwardCache, image_gradient: np.ndarray) -> RenderGradients:
    """Chain a pixel-space loss gradient back to every primitive parameter.

    The scene must be unchanged since the forward pass that built the cache.
    """
    camera = cache.camera
    w, h = camera.image_size
    grad = np.asarray(image_gradient, dtype=np.float64)
    if grad.shape != (h, w, 3):
        raise ValidationError(f"image_gradient shape {grad.shape} does not match image {(h, w, 3)}")

    n = len(scene)
    out = RenderGradients(
        positions=np.zeros((n, 2)),
        log_scales=np.zeros((n, 2)),
        rotations=np.zeros(n),
        colors=np.zeros((n, 3)),
        opacity_logits=np.zeros(n),
        screen_positions=np.zeros((n, 2)),
    )
    if n == 0 or not cache.splats:
        return out

    transmittance = np.ones((h, w), dtype=np.float64)
    prefix = np.zeros((h, w, 3), dtype=np.float64)
    final = cache.image
    rot_cam_t = _rot(camera.rotation)  # transpose of R(-cam_rot)
    sigma2 = np.exp(2.0 * scene.log_scales)

    for sp in cache.splats:
        j = sp.index
        u0, u1, v0, v1 = sp.u0, sp.u1, sp.v0, sp.v1
        a = sp.weight
        color = scene.colors[j]
        sub_t = transmittance[v0:v1 + 1, u0:u1 + 1]
        sub_g = grad[v0:v1 + 1, u0:u1 + 1]
        wgt = a * sub_t
        contrib = wgt[:, :, None] * color

        out.colors[j] = np.einsum("hwc,hw->c", sub_g, wgt)

        # d(pixel)/d(a) = color * T - rear/(1 - a), rear = everything behind.
        rear = final[v0:v1 + 1, u0:u1 + 1] - prefix[v0:v1 + 1, u0:u1 + 1] - contrib
        d_pix_da = color[None, None, :] * sub_t[:, :, None] - rear / (1.0 - a)[:, :, None]
        ga = np.einsum("hwc,hwc->hw", sub_g, d_pix_da)
        ga = np.where(sp.clamped, 0.0, ga)

        alpha = cache.opacities[j]
        out.opacity_logits[j] = float(np.sum(ga * sp.gauss)) * alpha * (1.0 - alpha)

        # Through the Gaussian falloff: gd2 = dL/d(d^2).
        gd2 = ga * (-0.5 * alpha) * sp.gauss
        mu = sp.mean
        du = np.arange(u0, u1 + 1, dtype=np.float64) - mu[0]
        dv = np.arange(v0, v1 + 1, dtype=np.float64)[:, None] - mu[1]
        m = sp.inv_cov
        # e = M @ delta per pixel
        e_u = m[0, 0] * du + m[0, 1] * dv
        e_v = m[0, 1] * du + m[1, 1] * dv
        # d2 = delta^T M delta with delta = pixel - mean, so
        # dL/dmean = sum gd2 * (-2 M delta).
        s_du = float(np.sum(gd2 * du[None, :]))
        s_dv = float(np.sum(gd2 * dv))
        g_mean = -2.0 * (m @ np.array([s_du, s_dv]))
        out.screen_positions[j] = g_mean
        out.positions[j] = camera.zoom * (rot_cam_t @ g_mean)

        # dL/dSigma = sum gd2 * (-(M delta)(M delta)^T)
        s_ee_uu = float(np.sum(gd2 * e_u * e_u))
        s_ee_uv = float(np.sum(gd2 * e_u * e_v))
        s_ee_vv = float(np.sum(gd2 * e_v * e_v))
        g_cov = -np.array([[s_ee_uu, s_ee_uv], [s_ee_uv, s_ee_vv]])

        axes = sp.axes
        inner = axes.T @ g_cov @ axes
        out.log_scales[j, 0] = inner[0, 0] * 2.0 * sigma2[j, 0]
        out.log_scales[j, 1] = inner[1, 1] * 2.0 * sigma2[j, 1]
        # dA/dtheta = zoom * R'(psi); dL/dtheta = 2 tr(g_cov A' D A^T)
        d_axes = np.array([[-axes[1, 0], -axes[1, 1]], [axes[0, 0], axes[0, 1]]])
        dmat = np.diag(sigma2[j])
        out.rotations[j] = 2.0 * np.trace(g_cov @ d_axes @ dmat @ axes.T)

        prefix[v0:v1 + 1, u0:u1 + 1] += contrib
        sub_t *= 1.0 - a

    invisible = ~cache.visibility
    if invisible.any():
        out.positions[invisible] = 0.0
        out.log_scales[invisible] = 0.0
        out.rotations[invisible] = 0.0
        out.colors[invisible] = 0.0
        out.opacity_logits[invisible] = 0.0
        out.screen_positions[invisible] = 0.0
    return out


def backward(scene: SceneModel, camera: CameraPose, image_gradient: np.ndarray,
             config: RasterConfig | None = None) -> RenderGradients:
    """Convenience wrapper: forward pass then gradient pass."""
    cache = forward_pass(scene, camera, config)
    return backward_from_cache(scene, cache, image_gradient)
