"""Classic RGB-NIR fusion: HSV value blending, YCbCr luminance transfer, and
local-contrast adaptive detail injection.

All methods share the same shape: move the image into a luma/chroma space,
blend the NIR signal into the luminance component, and convert back. Only the
blend rule differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .color import hsv_to_rgb, rgb_to_hsv, rgb_to_ycbcr, ycbcr_to_rgb
from .errors import ArgumentError
from .image import Image, ImageKind, require_kind, require_same_size


def _check_weight(value: float, name: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise ArgumentError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class WeightMaps:
    """Per-pixel blend weights for HSV fusion; both maps must lie in [0, 1]."""

    alpha: Image
    beta: Image

    def __post_init__(self):
        require_kind(self.alpha, ImageKind.WEIGHT, "alpha map")
        require_kind(self.beta, ImageKind.WEIGHT, "beta map")
        require_same_size(self.alpha, self.beta, "weight maps")
        for name, img in (("alpha", self.alpha), ("beta", self.beta)):
            lo, hi = float(img.data.min()), float(img.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ArgumentError(
                    f"{name} map values must lie in [0, 1], got range [{lo}, {hi}]"
                )

    @staticmethod
    def constant(alpha: float, beta: float, height: int, width: int) -> "WeightMaps":
        _check_weight(alpha, "alpha")
        _check_weight(beta, "beta")
        return WeightMaps(
            Image(np.full((height, width), alpha, dtype=np.float32), ImageKind.WEIGHT),
            Image(np.full((height, width), beta, dtype=np.float32), ImageKind.WEIGHT),
        )


def hsv_weighted_fusion(rgb: Image, nir: Image, maps: WeightMaps) -> Image:
    """Blend NIR into the HSV value channel with per-pixel weights.

    The fused value channel is clamp(alpha * V + beta * NIR, 0, 1); hue and
    saturation pass through untouched.
    """
    require_kind(rgb, ImageKind.RGB)
    require_kind(nir, ImageKind.NIR)
    require_same_size(rgb, nir, "rgb and nir")
    require_same_size(rgb, maps.alpha, "image and weight maps")

    hsv = rgb_to_hsv(rgb)
    v_fused = np.clip(
        maps.alpha.plane(0) * hsv.plane(2) + maps.beta.plane(0) * nir.plane(0),
        0.0,
        1.0,
    )
    blended = Image(np.stack([hsv.plane(0), hsv.plane(1), v_fused]), ImageKind.HSV)
    return hsv_to_rgb(blended)


def hsv_constant_fusion(rgb: Image, nir: Image, alpha: float = 0.5, beta: float = 0.5) -> Image:
    """HSV value blending with scalar weights (the weighted form with constant maps)."""
    maps = WeightMaps.constant(alpha, beta, rgb.height, rgb.width)
    return hsv_weighted_fusion(rgb, nir, maps)


def ycbcr_fusion(rgb: Image, nir: Image, i_max: float = 1.0) -> Image:
    """Transfer NIR luminance into YCbCr with chroma compensation.

    The luminance gap l_v = (NIR - Y) / i_max drives a convex-style blend
    l_fused = Y * l_v + NIR * (1 - l_v); chroma is rescaled about its 0.5
    offset by (1 + m) where m = (Y - l_fused) / Y (0 where Y = 0), and the
    result is clamped to [0, 1] only after conversion back to RGB.
    """
    require_kind(rgb, ImageKind.RGB)
    require_kind(nir, ImageKind.NIR)
    require_same_size(rgb, nir, "rgb and nir")
    if not (i_max > 0.0):
        raise ArgumentError(f"i_max must be positive, got {i_max}")

    ycc = rgb_to_ycbcr(rgb)
    l_rgb = ycc.plane(0).astype(np.float64)
    n = nir.plane(0).astype(np.float64)

    l_v = (n - l_rgb) / i_max
    l_fused = l_rgb * l_v + n * (1.0 - l_v)
    m = np.divide(l_rgb - l_fused, l_rgb, out=np.zeros_like(l_rgb), where=l_rgb != 0)

    scale = 1.0 + m
    cb = 0.5 + (ycc.plane(1) - 0.5) * scale
    cr = 0.5 + (ycc.plane(2) - 0.5) * scale
    fused = ycbcr_to_rgb(Image(np.stack([l_fused, cb, cr]), ImageKind.YCBCR))
    return Image(np.clip(fused.data, 0.0, 1.0), ImageKind.RGB)


@dataclass(frozen=True)
class AdaptiveParams:
    """Knobs for local-contrast adaptive fusion.

    contrast_alpha balances intensity range against gradient amplitude in the
    local-contrast measure; the Gaussian high-pass uses an explicit odd-sized
    kernel.
    """

    contrast_alpha: float = 0.5
    window_radius: int = 3
    gaussian_kernel: int = 19
    gaussian_sigma: float = 3.2
    epsilon: float = 1e-6

    def __post_init__(self):
        _check_weight(self.contrast_alpha, "contrast_alpha")
        if self.window_radius < 1:
            raise ArgumentError(f"window_radius must be >= 1, got {self.window_radius}")
        if self.gaussian_kernel < 3 or self.gaussian_kernel % 2 == 0:
            raise ArgumentError(
                f"gaussian_kernel must be odd and >= 3, got {self.gaussian_kernel}"
            )
        if not (self.gaussian_sigma > 0.0):
            raise ArgumentError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")
        if not (self.epsilon > 0.0):
            raise ArgumentError(f"epsilon must be positive, got {self.epsilon}")


def _sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(plane, axis=1, mode="reflect")
    gy = ndimage.sobel(plane, axis=0, mode="reflect")
    return np.hypot(gx, gy)


def local_contrast(plane: np.ndarray, alpha: float = 0.5, radius: int = 3) -> np.ndarray:
    """alpha * (windowed max - windowed min) + (1 - alpha) * windowed max
    of the Sobel gradient magnitude. Always nonnegative."""
    size = 2 * radius + 1
    plane = np.asarray(plane, dtype=np.float64)
    swing = ndimage.maximum_filter(plane, size=size, mode="nearest") - ndimage.minimum_filter(
        plane, size=size, mode="nearest"
    )
    amplitude = ndimage.maximum_filter(_sobel_magnitude(plane), size=size, mode="nearest")
    return alpha * swing + (1.0 - alpha) * amplitude


def gaussian_blur(plane: np.ndarray, kernel: int, sigma: float) -> np.ndarray:
    """Separable Gaussian with an explicit odd kernel size, reflect borders."""
    offsets = np.arange(kernel, dtype=np.float64) - kernel // 2
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    weights /= weights.sum()
    out = ndimage.correlate1d(np.asarray(plane, dtype=np.float64), weights, axis=0, mode="reflect")
    return ndimage.correlate1d(out, weights, axis=1, mode="reflect")


def fusion_map(y: np.ndarray, nir: np.ndarray, params: AdaptiveParams) -> np.ndarray:
    """Per-pixel NIR advantage: max(0, LC_nir - LC_y) / max(LC_nir, eps) in [0, 1]."""
    lc_y = local_contrast(y, params.contrast_alpha, params.window_radius)
    lc_n = local_contrast(nir, params.contrast_alpha, params.window_radius)
    return np.maximum(0.0, lc_n - lc_y) / np.maximum(lc_n, params.epsilon)


def adaptive_fusion(rgb: Image, nir: Image, params: AdaptiveParams | None = None) -> Image:
    """Inject Gaussian high-pass NIR detail where NIR has more local contrast.

    The fusion map gates a high-pass copy of NIR that is added to all three
    YCbCr channels; output is converted back to RGB and clamped to [0, 1].
    """
    params = params or AdaptiveParams()
    require_kind(rgb, ImageKind.RGB)
    require_kind(nir, ImageKind.NIR)
    require_same_size(rgb, nir, "rgb and nir")

    ycc = rgb_to_ycbcr(rgb)
    n = nir.plane(0).astype(np.float64)
    gate = fusion_map(ycc.plane(0), n, params)
    highpass = n - gaussian_blur(n, params.gaussian_kernel, params.gaussian_sigma)
    detail = gate * highpass

    fused = ycbcr_to_rgb(
        Image(np.stack([ycc.plane(0) + detail, ycc.plane(1) + detail, ycc.plane(2) + detail]),
              ImageKind.YCBCR)
    )
    return Image(np.clip(fused.data, 0.0, 1.0), ImageKind.RGB)
