"""Core image container: planar float32 samples plus a semantic kind tag."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ArgumentError


class ImageKind(Enum):
    RGB = "rgb"
    NIR = "nir"
    HSV = "hsv"
    YCBCR = "ycbcr"
    GRAY = "gray"
    DISPARITY = "disparity"
    DEPTH = "depth"
    NORMAL = "normal"
    WEIGHT = "weight"
    FEATURE = "feature"


# Channel count each kind requires; None means any positive count.
_KIND_CHANNELS = {
    ImageKind.RGB: 3,
    ImageKind.NIR: 1,
    ImageKind.HSV: 3,
    ImageKind.YCBCR: 3,
    ImageKind.GRAY: 1,
    ImageKind.DISPARITY: 1,
    ImageKind.DEPTH: 1,
    ImageKind.NORMAL: 3,
    ImageKind.WEIGHT: 1,
    ImageKind.FEATURE: None,
}


@dataclass(frozen=True)
class Image:
    """Immutable image: ``data`` has shape (channels, height, width), float32.

    A 2-D array is accepted for single-channel kinds and reshaped. The data
    buffer is marked read-only; derive new images instead of mutating.
    """

    data: np.ndarray
    kind: ImageKind = field(default=ImageKind.GRAY)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[np.newaxis, :, :]
        if arr.ndim != 3:
            raise ArgumentError(f"image data must be 2-D or 3-D, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ArgumentError(f"image dimensions must be positive, got {arr.shape}")
        expected = _KIND_CHANNELS[self.kind]
        if expected is not None and arr.shape[0] != expected:
            raise ArgumentError(
                f"kind {self.kind.value} requires {expected} channel(s), got {arr.shape[0]}"
            )
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, index: int) -> np.ndarray:
        """One channel as a read-only (height, width) view."""
        return self.data[index]

    def with_kind(self, kind: ImageKind) -> "Image":
        """Same samples retagged; channel counts must stay compatible."""
        return Image(self.data, kind)


def require_kind(img: Image, kind: ImageKind, name: str = "image") -> None:
    if img.kind is not kind:
        raise ArgumentError(f"{name} must have kind {kind.value}, got {img.kind.value}")


def require_same_size(a: Image, b: Image, what: str = "images") -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ArgumentError(
            f"{what} must share dimensions, got "
            f"{a.width}x{a.height} vs {b.width}x{b.height}"
        )
