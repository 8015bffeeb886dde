"""Training objective: photometric term plus the semantic opacity regularizer.

The photometric mix is (1 - ssim_weight) * L1 + ssim_weight * (1 - SSIM) with
an 11x11 Gaussian-window SSIM and the standard stabilizers for unit dynamic
range. Both pieces return analytic pixel gradients so the rasterizer backward
pass can chain them to primitive parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ValidationError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DEFAULT_SSIM_WEIGHT = 0.2


@dataclass
class LossBreakdown:
    photometric: float
    semantic: float
    total: float
    lambda_c: float


def _ssim_kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


_KERNEL = _ssim_kernel()


def _blur(img: np.ndarray) -> np.ndarray:
    # Separable zero-padded filtering, channelwise; the kernel is symmetric
    # so this is its own adjoint.
    out = correlate1d(img, _KERNEL, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _KERNEL, axis=1, mode="constant", cval=0.0)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over all pixels and channels."""
    value, _ = ssim_with_gradient(a, b)
    return value


def ssim_with_gradient(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """SSIM and its gradient with respect to the first image."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValidationError(f"images smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")

    mu_a = _blur(a)
    mu_b = _blur(b)
    raw_aa = _blur(a * a)
    raw_ab = _blur(a * b)
    raw_bb = _blur(b * b)

    var_a = raw_aa - mu_a * mu_a
    var_b = raw_bb - mu_b * mu_b
    cov = raw_ab - mu_a * mu_b

    lum = 2.0 * mu_a * mu_b + SSIM_C1
    str_ = 2.0 * cov + SSIM_C2
    den_l = mu_a * mu_a + mu_b * mu_b + SSIM_C1
    den_s = var_a + var_b + SSIM_C2
    smap = (lum * str_) / (den_l * den_s)

    count = smap.size
    value = float(smap.mean())

    # Partials of the local map with respect to (mu_a, raw_aa, raw_ab);
    # the adjoint of each blurred statistic is another blur.
    d_mu = (2.0 * mu_b * str_ - lum * 2.0 * mu_b) / (den_l * den_s) \
        - smap * (2.0 * mu_a / den_l - 2.0 * mu_a / den_s)
    d_raw_aa = -smap / den_s
    d_raw_ab = 2.0 * lum / (den_l * den_s)

    grad = _blur(d_mu) + 2.0 * a * _blur(d_raw_aa) + b * _blur(d_raw_ab)
    grad /= count
    return value, grad


def photometric_loss(rendered: np.ndarray, target: np.ndarray,
                     ssim_weight: float = DEFAULT_SSIM_WEIGHT) -> tuple[float, np.ndarray]:
    """L1/SSIM mix against the target; returns (value, d(loss)/d(rendered))."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ValidationError(f"image shapes differ: {rendered.shape} vs {target.shape}")
    diff = rendered - target
    l1 = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    if ssim_weight == 0.0:
        return l1, grad
    s_val, s_grad = ssim_with_gradient(rendered, target)
    value = (1.0 - ssim_weight) * l1 + ssim_weight * (1.0 - s_val)
    grad = (1.0 - ssim_weight) * grad - ssim_weight * s_grad
    return value, grad


def clip_regularizer(scores: np.ndarray, opacities: np.ndarray) -> tuple[float, np.ndarray]:
    """Opacity penalty (1/N) * sum(score_j * opacity_j).

    Returns the loss and its gradient per opacity (score_j / N); the caller
    chains through the opacity logit. An empty scene is a hard error: it
    means pruning removed everything.
    """
    scores = np.asarray(scores, dtype=np.float64)
    opacities = np.asarray(opacities, dtype=np.float64)
    if scores.shape != opacities.shape:
        raise ValidationError("scores and opacities must have equal length")
    n = scores.size
    if n == 0:
        raise ValidationError("semantic regularizer evaluated on an empty scene")
    value = float(np.dot(scores, opacities) / n)
    return value, scores / n


def total_loss(photometric: float, semantic: float, lambda_c: float) -> LossBreakdown:
    """Weighted objective: photometric + lambda_c * semantic."""
    for name, v in (("photometric", photometric), ("semantic", semantic), ("lambda_c", lambda_c)):
        if not math.isfinite(v):
            raise ValidationError(f"total_loss: non-finite {name} ({v})")
    return LossBreakdown(
        photometric=photometric,
        semantic=semantic,
        total=photometric + lambda_c * semantic,
        lambda_c=lambda_c,
    )
