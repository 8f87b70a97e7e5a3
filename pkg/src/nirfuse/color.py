"""Color space conversions: hexcone HSV and full-range BT.601 YCbCr.

All conversions are pure. Hexcone HSV follows the usual max/min construction
with hue in [0, 1); BT.601 uses the full-range luma weights (0.299, 0.587,
0.114) with chroma centered at 0.5 so every channel lives in [0, 1] for valid
RGB input.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .image import Image, ImageKind, require_kind

_KR, _KG, _KB = 0.299, 0.587, 0.114

# Forward YCbCr matrix; inverse computed numerically so the round trip is
# exact to floating point rather than to quoted coefficient precision.
_YCBCR = np.array(
    [
        [_KR, _KG, _KB],
        [-0.5 * _KR / (1.0 - _KB), -0.5 * _KG / (1.0 - _KB), 0.5],
        [0.5, -0.5 * _KG / (1.0 - _KR), -0.5 * _KB / (1.0 - _KR)],
    ],
    dtype=np.float64,
)
_YCBCR_INV = np.linalg.inv(_YCBCR)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5], dtype=np.float64).reshape(3, 1, 1)


def _check_unit_range(arr: np.ndarray, what: str) -> None:
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise ArgumentError(f"{what} samples must lie in [0, 1], got range [{lo}, {hi}]")


def rgb_to_hsv(img: Image) -> Image:
    """Convert RGB in [0, 1] to hexcone HSV.

    V = max(R, G, B); S = chroma / V (0 where V = 0); H in [0, 1) with
    H = 0 wherever the pixel is achromatic.
    """
    require_kind(img, ImageKind.RGB)
    rgb = img.data.astype(np.float64)
    _check_unit_range(rgb, "rgb")
    r, g, b = rgb[0], rgb[1], rgb[2]

    v = np.maximum(np.maximum(r, g), b)
    c = v - np.minimum(np.minimum(r, g), b)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)

    safe_c = np.where(c > 0, c, 1.0)
    h = np.select(
        [c == 0, v == r, v == g],
        [np.zeros_like(c), np.mod((g - b) / safe_c, 6.0), (b - r) / safe_c + 2.0],
        default=(r - g) / safe_c + 4.0,
    ) / 6.0
    # Hue is periodic: the modulo (or the final float32 rounding) can land
    # exactly on 1.0, so wrap after the cast that the container will store.
    h32 = h.astype(np.float32)
    h32 = np.where(h32 >= 1.0, np.float32(0.0), h32)

    return Image(np.stack([h32, s.astype(np.float32), v.astype(np.float32)]), ImageKind.HSV)


def hsv_to_rgb(img: Image) -> Image:
    """Convert hexcone HSV back to RGB.

    Raises ArgumentError when H is outside [0, 1) or S, V outside [0, 1];
    out-of-range input is rejected rather than clamped.
    """
    require_kind(img, ImageKind.HSV)
    hsv = img.data.astype(np.float64)
    h, s, v = hsv[0], hsv[1], hsv[2]
    if h.min() < 0.0 or h.max() >= 1.0:
        raise ArgumentError(
            f"hue must lie in [0, 1), got range [{h.min()}, {h.max()}]"
        )
    _check_unit_range(s, "saturation")
    _check_unit_range(v, "value")

    h6 = h * 6.0
    sector = np.floor(h6).astype(np.int64)
    f = h6 - sector
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))

    r = np.choose(sector, [v, q, p, p, t, v])
    g = np.choose(sector, [t, v, v, q, p, p])
    b = np.choose(sector, [p, p, t, v, v, q])
    return Image(np.stack([r, g, b]), ImageKind.RGB)


def rgb_to_ycbcr(img: Image) -> Image:
    """Convert RGB to full-range BT.601 YCbCr with chroma centered at 0.5."""
    require_kind(img, ImageKind.RGB)
    rgb = img.data.astype(np.float64)
    out = np.einsum("ij,jhw->ihw", _YCBCR, rgb) + _CHROMA_OFFSET
    return Image(out, ImageKind.YCBCR)


def ycbcr_to_rgb(img: Image) -> Image:
    """Invert rgb_to_ycbcr. The affine map accepts any finite input; callers
    that need [0, 1] RGB clamp afterwards."""
    require_kind(img, ImageKind.YCBCR)
    ycc = img.data.astype(np.float64) - _CHROMA_OFFSET
    out = np.einsum("ij,jhw->ihw", _YCBCR_INV, ycc)
    return Image(out, ImageKind.RGB)


def rgb_to_gray(img: Image) -> Image:
    """BT.601 luma of an RGB image."""
    require_kind(img, ImageKind.RGB)
    rgb = img.data.astype(np.float64)
    return Image(_KR * rgb[0] + _KG * rgb[1] + _KB * rgb[2], ImageKind.GRAY)
