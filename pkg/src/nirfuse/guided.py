"""Edge-preserving guided filter with border-clipped box statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .image import Image, require_same_size


@dataclass(frozen=True)
class GuidedFilterParams:
    radius: int = 4
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.radius < 1:
            raise ArgumentError(f"radius must be >= 1, got {self.radius}")
        if not (self.epsilon > 0.0):
            raise ArgumentError(f"epsilon must be positive, got {self.epsilon}")


def box_mean(plane: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window clipped at the borders, via integral image."""
    a = np.asarray(plane, dtype=np.float64)
    h, w = a.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=integral[1:, 1:])

    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)

    sums = (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )
    counts = np.outer(y1 - y0, x1 - x0)
    return sums / counts


def guided_filter(src: Image, guide: Image, params: GuidedFilterParams | None = None) -> Image:
    """Filter each channel of ``src`` by local linear regression onto ``guide``.

    Per window: a = cov(guide, src) / (var(guide) + eps), b = mean(src) -
    a * mean(guide); the output is mean(a) * guide + mean(b), clamped to
    [0, 1]. A constant guide degenerates to plain box smoothing.
    """
    params = params or GuidedFilterParams()
    if guide.channels != 1:
        raise ArgumentError(f"guide must have one channel, got {guide.channels}")
    require_same_size(src, guide, "src and guide")

    g = guide.plane(0).astype(np.float64)
    r = params.radius
    mean_g = box_mean(g, r)
    var_g = box_mean(g * g, r) - mean_g * mean_g

    out = np.empty_like(src.data, dtype=np.float64)
    for c in range(src.channels):
        p = src.plane(c).astype(np.float64)
        mean_p = box_mean(p, r)
        cov_gp = box_mean(g * p, r) - mean_g * mean_p
        a = cov_gp / (var_g + params.epsilon)
        b = mean_p - a * mean_g
        out[c] = box_mean(a, r) * g + box_mean(b, r)

    return Image(np.clip(out, 0.0, 1.0), src.kind)
