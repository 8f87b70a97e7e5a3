"""Image file I/O: PNG (8/16-bit, via OpenCV) and PFM (float32).

PFM layout: ASCII header of magic ("PF" color, "Pf" grayscale), width/height
line, then a scale line whose sign encodes endianness (negative means little
endian). Sample rows follow bottom-up, channels interleaved. We always write
little-endian with scale -1.0 and read either endianness.
"""

from __future__ import annotations

import os

import cv2
import numpy as np

from .errors import ArgumentError, ImageIOError
from .image import Image, ImageKind

_PNG_EXTS = {".png"}
_PFM_EXTS = {".pfm"}


def _default_kind(channels: int) -> ImageKind:
    if channels == 3:
        return ImageKind.RGB
    if channels == 1:
        return ImageKind.GRAY
    raise ImageIOError(f"no default kind for {channels}-channel image")


def write_pfm(path: str, img: Image) -> None:
    """Write a 1- or 3-channel image as little-endian PFM."""
    if img.channels not in (1, 3):
        raise ArgumentError(f"PFM supports 1 or 3 channels, got {img.channels}")
    magic = b"PF" if img.channels == 3 else b"Pf"
    # (C, H, W) -> bottom-up (H, W, C), samples interleaved.
    rows = np.flipud(np.transpose(img.data, (1, 2, 0)))
    payload = np.ascontiguousarray(rows, dtype="<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(magic + b"\n")
            fh.write(f"{img.width} {img.height}\n".encode("ascii"))
            fh.write(b"-1.0\n")
            fh.write(payload.tobytes())
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def read_pfm(path: str, kind: ImageKind | None = None) -> Image:
    """Read a PFM file; kind defaults to RGB (3ch) or GRAY (1ch)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc

    def next_token(pos):
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageIOError(f"{path}: truncated PFM header")
        return raw[start:pos], pos

    magic, pos = next_token(0)
    if magic not in (b"PF", b"Pf"):
        raise ImageIOError(f"{path}: not a PFM file (magic {magic!r})")
    channels = 3 if magic == b"PF" else 1
    try:
        wtok, pos = next_token(pos)
        htok, pos = next_token(pos)
        stok, pos = next_token(pos)
        width, height = int(wtok), int(htok)
        scale = float(stok)
    except (ValueError, ImageIOError) as exc:
        raise ImageIOError(f"{path}: malformed PFM header") from exc
    if width <= 0 or height <= 0:
        raise ImageIOError(f"{path}: bad PFM dimensions {width}x{height}")
    if scale == 0.0:
        raise ImageIOError(f"{path}: PFM scale must be nonzero")

    pos += 1  # single whitespace byte terminates the header
    count = width * height * channels
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(raw, dtype=dtype, count=-1, offset=pos)
    if data.size < count:
        raise ImageIOError(
            f"{path}: truncated PFM payload ({data.size} of {count} samples)"
        )
    rows = data[:count].astype(np.float32).reshape(height, width, channels)
    planes = np.transpose(np.flipud(rows), (2, 0, 1))
    return Image(planes, kind or _default_kind(channels))


def write_png(path: str, img: Image, bit_depth: int = 8) -> None:
    """Write a 1- or 3-channel image as PNG, clamping samples to [0, 1]."""
    if img.channels not in (1, 3):
        raise ArgumentError(f"PNG supports 1 or 3 channels, got {img.channels}")
    if bit_depth == 8:
        scale, dtype = 255.0, np.uint8
    elif bit_depth == 16:
        scale, dtype = 65535.0, np.uint16
    else:
        raise ArgumentError(f"PNG bit depth must be 8 or 16, got {bit_depth}")
    quant = np.round(np.clip(img.data, 0.0, 1.0) * scale).astype(dtype)
    if img.channels == 3:
        pixels = np.transpose(quant[::-1], (1, 2, 0))  # planar RGB -> BGR rows
    else:
        pixels = quant[0]
    if not cv2.imwrite(path, pixels):
        raise ImageIOError(f"cannot write {path}")


def read_png(path: str, kind: ImageKind | None = None) -> Image:
    """Read an 8- or 16-bit PNG into [0, 1] floats."""
    pixels = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if pixels is None:
        raise ImageIOError(f"cannot read {path}")
    if pixels.dtype == np.uint8:
        scale = 255.0
    elif pixels.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageIOError(f"{path}: unsupported PNG sample type {pixels.dtype}")
    if pixels.ndim == 2:
        planes = pixels[np.newaxis].astype(np.float32) / scale
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        planes = np.transpose(pixels, (2, 0, 1))[::-1].astype(np.float32) / scale
    else:
        raise ImageIOError(f"{path}: unsupported PNG channel layout {pixels.shape}")
    return Image(planes, kind or _default_kind(planes.shape[0]))


def save_image(path: str, img: Image, bit_depth: int = 8) -> None:
    """Dispatch on extension: .png or .pfm."""
    ext = os.path.splitext(path)[1].lower()
    if ext in _PNG_EXTS:
        write_png(path, img, bit_depth)
    elif ext in _PFM_EXTS:
        write_pfm(path, img)
    else:
        raise ImageIOError(f"unsupported image extension {ext!r} for {path}")


def load_image(path: str, kind: ImageKind | None = None) -> Image:
    """Dispatch on extension: .png or .pfm."""
    ext = os.path.splitext(path)[1].lower()
    if ext in _PNG_EXTS:
        return read_png(path, kind)
    if ext in _PFM_EXTS:
        return read_pfm(path, kind)
    raise ImageIOError(f"unsupported image extension {ext!r} for {path}")
