"""Correlation volumes over image features and a classical winner-take-all
disparity estimator that alternates between volumes from different
modalities (fused, NIR, RGB) across refinement rounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np
from scipy import ndimage

from .attnfuse import FusionModelWeights
from .errors import ArgumentError
from .image import Image, ImageKind

_NORM_GUARD = 1e-12


class FeatureMode(Enum):
    INTENSITY = "intensity"
    INTENSITY_GRAD = "intensity+grad"
    ENCODER = "encoder"


class VolumeKind(Enum):
    FUSION = "fusion"
    NIR = "nir"
    RGB = "rgb"


@dataclass(frozen=True)
class VolumeSchedule:
    """Cyclic order in which wta_disparity consumes volumes per round."""

    tags: tuple[VolumeKind, ...]

    def __post_init__(self):
        tags = tuple(self.tags)
        if not tags:
            raise ArgumentError("schedule must list at least one volume")
        if any(not isinstance(t, VolumeKind) for t in tags):
            raise ArgumentError("schedule entries must be VolumeKind values")
        object.__setattr__(self, "tags", tags)

    @classmethod
    def parse(cls, text: str) -> "VolumeSchedule":
        try:
            return cls(tuple(VolumeKind(part.strip()) for part in text.split(",")))
        except ValueError as exc:
            raise ArgumentError(f"bad schedule {text!r}: {exc}") from exc


@dataclass(frozen=True)
class CorrVolume:
    """Matching scores V[k, y, x]; -inf marks out-of-range lookups."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3 or vals.shape[0] < 1:
            raise ArgumentError(f"volume must be (K, H, W) with K >= 1, got {vals.shape}")
        if np.isnan(vals).any() or np.isposinf(vals).any():
            raise ArgumentError("volume values must be finite or -inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def max_disparity(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def image_to_features(img: Image, mode: FeatureMode,
                      weights: FusionModelWeights | None = None,
                      normalize: bool = False) -> Image:
    """Turn an image into a matching-feature map.

    INTENSITY uses the raw planes; INTENSITY_GRAD appends per-plane Sobel
    x/y responses; ENCODER runs the learned downsampling encoder (weights
    required, single-channel inputs replicated to its 3-channel stem).
    ``normalize`` rescales each pixel's feature vector to unit length,
    which makes correlation scores comparable across positions.
    """
    planes = img.data.astype(np.float64)
    if mode is FeatureMode.INTENSITY:
        feats = planes
    elif mode is FeatureMode.INTENSITY_GRAD:
        gx = [ndimage.sobel(p, axis=1, mode="reflect") for p in planes]
        gy = [ndimage.sobel(p, axis=0, mode="reflect") for p in planes]
        feats = np.concatenate([planes, np.stack(gx), np.stack(gy)])
    elif mode is FeatureMode.ENCODER:
        if weights is None:
            raise ArgumentError("encoder mode needs model weights")
        if planes.shape[0] == 1:
            planes = np.repeat(planes, 3, axis=0)
        feats = weights.encode(planes).data.astype(np.float64)
    else:
        raise ArgumentError(f"unknown feature mode {mode}")

    if normalize:
        norms = np.sqrt((feats * feats).sum(axis=0, keepdims=True))
        feats = feats / np.maximum(norms, _NORM_GUARD)
    return Image(feats, ImageKind.FEATURE)


def correlation_volume(f_left: Image, f_right: Image, max_disparity: int,
                       literal_shift: bool = False) -> CorrVolume:
    """V[k, y, x] = <left(x, y), right(x - k, y)> for rectified pairs.

    ``literal_shift`` samples the right features at x + k instead, the
    opposite sign convention; out-of-range lookups are -inf in both modes.
    """
    if f_left.data.shape != f_right.data.shape:
        raise ArgumentError(
            f"feature shapes differ: {f_left.data.shape} vs {f_right.data.shape}")
    w = f_left.width
    if not (1 <= max_disparity < w):
        raise ArgumentError(f"max disparity must lie in [1, width), got {max_disparity}")

    left = f_left.data.astype(np.float64)
    right = f_right.data.astype(np.float64)
    h = f_left.height
    vals = np.full((max_disparity, h, w), -np.inf)
    for k in range(max_disparity):
        if literal_shift:
            if k == 0:
                vals[k] = (left * right).sum(axis=0)
            else:
                vals[k, :, :w - k] = (left[:, :, :w - k] * right[:, :, k:]).sum(axis=0)
        else:
            vals[k, :, k:] = (left[:, :, k:] * right[:, :, :w - k]).sum(axis=0)
    return CorrVolume(vals)


def wta_disparity(volumes: Mapping[VolumeKind, CorrVolume],
                  schedule: VolumeSchedule, rounds: int = 1,
                  subpixel: bool = True) -> Image:
    """Winner-take-all disparity from accumulated correlation volumes.

    Each round adds the next scheduled volume (cyclically) into a running
    cost; the disparity is the per-pixel argmax, ties toward smaller k,
    optionally refined by a parabolic fit through the peak's neighbors.
    """
    if rounds < 1:
        raise ArgumentError(f"rounds must be >= 1, got {rounds}")
    shapes = {vol.values.shape for vol in volumes.values()}
    if len(shapes) > 1:
        raise ArgumentError(f"volumes disagree on shape: {sorted(shapes)}")

    cost = None
    for i in range(rounds):
        tag = schedule.tags[i % len(schedule.tags)]
        if tag not in volumes:
            raise ArgumentError(f"schedule needs a {tag.value} volume, none given")
        vals = volumes[tag].values
        cost = vals.copy() if cost is None else cost + vals

    k_max, h, w = cost.shape
    best = cost.argmax(axis=0)  # first max: ties resolve to smaller k
    disp = best.astype(np.float64)

    if subpixel and k_max >= 3:
        inner = (best >= 1) & (best <= k_max - 2)
        ys, xs = np.nonzero(inner)
        ks = best[inner]
        lo = cost[ks - 1, ys, xs]
        mid = cost[ks, ys, xs]
        hi = cost[ks + 1, ys, xs]
        denom = lo - 2.0 * mid + hi
        ok = np.isfinite(lo) & np.isfinite(hi) & (denom < 0.0)
        offset = np.zeros_like(denom)
        offset[ok] = 0.5 * (lo[ok] - hi[ok]) / denom[ok]
        disp[ys, xs] += np.clip(offset, -0.5, 0.5)

    return Image(disp, ImageKind.DISPARITY)
