"""Evaluation metrics for depth, disparity, and fused images: MAE/RMSE,
threshold-ratio accuracies, under-N-pixel rates, SSIM, the weighted
photometric loss, and a box-neighborhood error against sparse range points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .fusion import gaussian_blur
from .image import Image, ImageKind, require_kind


@dataclass(frozen=True)
class MetricConfig:
    delta_base: float = 1.25
    bad_pixel_thresholds: tuple[float, ...] = (1.0, 3.0, 5.0)
    gamma_l1: float = 0.85
    gamma_ssim: float = 0.15
    lidar_radius: int = 5
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    # Stabilizers (0.01 * range)^2 and (0.03 * range)^2 at dynamic range 1.
    ssim_c1: float = 1e-4
    ssim_c2: float = 9e-4

    def __post_init__(self):
        if self.delta_base <= 1.0:
            raise ArgumentError(f"delta base must exceed 1, got {self.delta_base}")
        if any(t <= 0 for t in self.bad_pixel_thresholds):
            raise ArgumentError("pixel thresholds must be positive")
        if self.lidar_radius < 0:
            raise ArgumentError(f"lidar radius must be >= 0, got {self.lidar_radius}")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ArgumentError(f"ssim window must be odd, got {self.ssim_window}")


def _mask_array(ref: Image, mask: Image | np.ndarray | None) -> np.ndarray:
    if mask is None:
        return np.ones((ref.height, ref.width), dtype=bool)
    if isinstance(mask, Image):
        mask = mask.plane(0)
    mask = np.asarray(mask)
    if mask.shape != (ref.height, ref.width):
        raise ArgumentError(
            f"mask is {mask.shape}, expected {(ref.height, ref.width)}")
    return mask != 0


def _masked_diffs(pred: Image, gt: Image, mask) -> np.ndarray:
    if pred.data.shape != gt.data.shape:
        raise ArgumentError(
            f"shape mismatch: {pred.data.shape} vs {gt.data.shape}")
    valid = _mask_array(pred, mask)
    if not valid.any():
        raise ArgumentError("mask selects no pixels")
    diff = pred.data.astype(np.float64) - gt.data.astype(np.float64)
    return np.abs(diff[:, valid]).ravel()


def mae(pred: Image, gt: Image, mask=None) -> float:
    return float(_masked_diffs(pred, gt, mask).mean())


def rmse(pred: Image, gt: Image, mask=None) -> float:
    d = _masked_diffs(pred, gt, mask)
    return float(np.sqrt((d * d).mean()))


def delta_accuracy(pred: Image, gt: Image, mask=None,
                   cfg: MetricConfig = MetricConfig()) -> tuple[float, float, float]:
    """Fractions of pixels whose depth ratio max(p/g, g/p) stays within
    base, base^2, base^3 (inclusive)."""
    if pred.data.shape != gt.data.shape:
        raise ArgumentError(
            f"shape mismatch: {pred.data.shape} vs {gt.data.shape}")
    valid = _mask_array(pred, mask)
    if not valid.any():
        raise ArgumentError("mask selects no pixels")
    p = pred.data.astype(np.float64)[:, valid].ravel()
    g = gt.data.astype(np.float64)[:, valid].ravel()
    if p.min() <= 0.0 or g.min() <= 0.0:
        raise ArgumentError("delta accuracy needs positive depths on the mask")
    ratio = np.maximum(p / g, g / p)
    return tuple(float((ratio <= cfg.delta_base ** k).mean()) for k in (1, 2, 3))


def bad_pixel_rates(pred: Image, gt: Image, mask=None,
                    cfg: MetricConfig = MetricConfig()) -> tuple[float, ...]:
    """Fractions of pixels with |pred - gt| strictly under each threshold."""
    d = _masked_diffs(pred, gt, mask)
    return tuple(float((d < t).mean()) for t in cfg.bad_pixel_thresholds)


def _ssim_map(a: np.ndarray, b: np.ndarray, cfg: MetricConfig) -> np.ndarray:
    blur = lambda p: gaussian_blur(p, cfg.ssim_window, cfg.ssim_sigma)
    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + cfg.ssim_c1) / (mu_a * mu_a + mu_b * mu_b + cfg.ssim_c1)
    cs = (2.0 * cov + cfg.ssim_c2) / (var_a + var_b + cfg.ssim_c2)
    return lum * cs


def ssim(a: Image, b: Image, cfg: MetricConfig = MetricConfig()) -> float:
    """Mean structural similarity over Gaussian-windowed local statistics,
    averaged across channels; inputs must lie in [0, 1]."""
    if a.data.shape != b.data.shape:
        raise ArgumentError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    for name, img in (("first", a), ("second", b)):
        if img.data.min() < 0.0 or img.data.max() > 1.0:
            raise ArgumentError(f"{name} image must lie in [0, 1]")
    maps = [_ssim_map(a.plane(i).astype(np.float64), b.plane(i).astype(np.float64), cfg)
            for i in range(a.channels)]
    return float(np.mean([m.mean() for m in maps]))


def photometric_loss(fused: Image, original: Image,
                     cfg: MetricConfig = MetricConfig(),
                     literal_ssim_sign: bool = False) -> float:
    """gamma_l1 * mean|a - b| + gamma_ssim * (1 - SSIM).

    ``literal_ssim_sign`` adds the raw SSIM instead of the dissimilarity,
    reproducing an older formulation that rewards mismatch.
    """
    l1 = mae(fused, original)
    s = ssim(fused, original, cfg)
    term = s if literal_ssim_sign else 1.0 - s
    return float(cfg.gamma_l1 * l1 + cfg.gamma_ssim * term)


def lidar_neighborhood_error(pred: Image, points, cfg: MetricConfig = MetricConfig()
                             ) -> tuple[float, float]:
    """Sum over points of |pred - z_gt| inside a (2r+1)^2 box around each
    point, boxes clipped at the frame; returns (sum, per-lookup mean)."""
    require_kind(pred, ImageKind.DEPTH, "pred")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ArgumentError("point list is empty")
    depth = pred.plane(0).astype(np.float64)
    h, w = depth.shape
    r = cfg.lidar_radius
    offsets = np.arange(-r, r + 1)

    total = 0.0
    count = 0
    for u, v, z_gt in pts:
        cols = np.rint(u).astype(np.int64) + offsets
        rows = np.rint(v).astype(np.int64) + offsets
        cols = cols[(cols >= 0) & (cols < w)]
        rows = rows[(rows >= 0) & (rows < h)]
        if cols.size == 0 or rows.size == 0:
            continue
        block = depth[np.ix_(rows, cols)]
        total += np.abs(block - z_gt).sum()
        count += block.size
    if count == 0:
        raise ArgumentError("no point's neighborhood intersects the frame")
    return float(total), float(total / count)
