"""Sparse range-sensor geometry: projection into a rectified camera,
depth/disparity conversion, outlier refinement, and consistency masking.

Conventions: camera frame has +z forward, +x right; the stereo pair is
rectified with the second camera displaced +baseline along x, so a scene
point at depth z appears ``disparity = fx * baseline / z`` pixels further
left in the second view.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ArgumentError, ImageIOError
from .image import Image, ImageKind, require_kind, require_same_size

_IDENTITY_EXTRINSIC = np.hstack([np.eye(3), np.zeros((3, 1))])
_POINTCLOUD_MAGIC = b"NFPC"
_CONFIG_VERSION = 1


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics, a rigid sensor-to-camera extrinsic, and the
    stereo baseline in meters."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: np.ndarray = field(default_factory=lambda: _IDENTITY_EXTRINSIC.copy())
    baseline: float = 0.133

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ArgumentError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ArgumentError(f"image size must be positive, got {self.width}x{self.height}")
        if not (self.baseline > 0.0):
            raise ArgumentError(f"baseline must be positive, got {self.baseline}")
        ext = np.asarray(self.extrinsic, dtype=np.float64)
        if ext.shape == (12,):
            ext = ext.reshape(3, 4)
        if ext.shape != (3, 4):
            raise ArgumentError(f"extrinsic must be 3x4 (or 12 flat), got {ext.shape}")
        rot = ext[:, :3]
        if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise ArgumentError("extrinsic rotation must be orthonormal (det +1)")
        ext.setflags(write=False)
        object.__setattr__(self, "extrinsic", ext)

    def right_view(self) -> "CameraModel":
        """The rectified partner camera: same intrinsics, shifted by
        -baseline along camera x."""
        shifted = self.extrinsic.copy()
        shifted[0, 3] -= self.baseline
        return CameraModel(self.fx, self.fy, self.cx, self.cy,
                           self.width, self.height, shifted, self.baseline)


def save_camera_json(path: str, camera: CameraModel) -> None:
    payload = {
        "version": _CONFIG_VERSION,
        "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
        "width": camera.width, "height": camera.height,
        "baseline": camera.baseline,
        "extrinsic": [float(v) for v in camera.extrinsic.ravel()],
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def camera_from_dict(payload: dict, where: str = "camera config") -> CameraModel:
    try:
        return CameraModel(
            fx=float(payload["fx"]), fy=float(payload["fy"]),
            cx=float(payload["cx"]), cy=float(payload["cy"]),
            width=int(payload["width"]), height=int(payload["height"]),
            extrinsic=np.asarray(payload.get("extrinsic", _IDENTITY_EXTRINSIC.ravel()),
                                 dtype=np.float64),
            baseline=float(payload.get("baseline", 0.133)),
        )
    except KeyError as exc:
        raise ImageIOError(f"{where}: missing camera field {exc}") from exc


def load_camera_json(path: str) -> CameraModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ImageIOError(f"{path}: invalid JSON: {exc}") from exc
    version = payload.get("version", _CONFIG_VERSION)
    if version != _CONFIG_VERSION:
        raise ImageIOError(f"{path}: unsupported config version {version}")
    return camera_from_dict(payload, where=path)


# ---------------------------------------------------------------------------
# point containers and I/O

@dataclass(frozen=True)
class SparseDisparityPoints:
    """Parallel arrays of sub-pixel image positions and positive disparities."""

    u: np.ndarray
    v: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=np.float64))
        v = np.atleast_1d(np.asarray(self.v, dtype=np.float64))
        d = np.atleast_1d(np.asarray(self.d, dtype=np.float64))
        if not (u.shape == v.shape == d.shape) or u.ndim != 1:
            raise ArgumentError("u, v, d must be 1-D arrays of equal length")
        if u.size and (not np.isfinite(u).all() or not np.isfinite(v).all()
                       or not np.isfinite(d).all()):
            raise ArgumentError("sparse points must be finite")
        if u.size and d.min() <= 0.0:
            raise ArgumentError(f"disparities must be positive, got min {d.min()}")
        for name, arr in (("u", u), ("v", v), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.u.size

    @staticmethod
    def empty() -> "SparseDisparityPoints":
        z = np.zeros(0)
        return SparseDisparityPoints(z, z, z)


def write_point_cloud(path: str, points: np.ndarray, binary: bool = False) -> None:
    """Write (N, 3) xyz points as whitespace text or the binary container
    (magic, u64 count, 4 reserved bytes, float32 little-endian triples)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    try:
        if binary:
            with open(path, "wb") as fh:
                fh.write(_POINTCLOUD_MAGIC)
                fh.write(struct.pack("<Q", pts.shape[0]))
                fh.write(b"\x00" * 4)
                fh.write(pts.astype("<f4").tobytes())
        else:
            with open(path, "w", encoding="utf-8") as fh:
                for x, y, z in pts:
                    fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def read_point_cloud(path: str) -> np.ndarray:
    """Read xyz points from text or binary form (detected by magic);
    returns an (N, 3) float64 array, possibly empty."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc

    if raw[:4] == _POINTCLOUD_MAGIC:
        if len(raw) < 16:
            raise ImageIOError(f"{path}: truncated point cloud header")
        (count,) = struct.unpack("<Q", raw[4:12])
        need = 16 + 12 * count
        if len(raw) < need:
            raise ImageIOError(f"{path}: truncated point cloud payload")
        data = np.frombuffer(raw, dtype="<f4", count=3 * count, offset=16)
        return data.astype(np.float64).reshape(-1, 3)

    rows = []
    for lineno, line in enumerate(raw.decode("utf-8", errors="strict").splitlines(), 1):
        text = line.strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 3:
            raise ImageIOError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ImageIOError(f"{path}:{lineno}: {exc}") from exc
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def write_disparity_points(path: str, points: SparseDisparityPoints) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for u, v, d in zip(points.u, points.v, points.d):
                fh.write(f"{u:.9g} {v:.9g} {d:.9g}\n")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def read_disparity_points(path: str) -> SparseDisparityPoints:
    arr = read_point_cloud(path)  # same whitespace-triple grammar
    if arr.size == 0:
        return SparseDisparityPoints.empty()
    return SparseDisparityPoints(arr[:, 0], arr[:, 1], arr[:, 2])


# ---------------------------------------------------------------------------
# projection and conversion

def back_project_grid(depth: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Lift a depth map to camera-frame points; returns (3, H, W)."""
    z = np.asarray(depth, dtype=np.float64)
    h, w = z.shape
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    x = (us[None, :] - camera.cx) * z / camera.fx
    y = (vs[:, None] - camera.cy) * z / camera.fy
    return np.stack([x, y, z])


def project_points(points: np.ndarray, camera: CameraModel
                   ) -> tuple[SparseDisparityPoints, np.ndarray]:
    """Project sensor-frame xyz points through the extrinsic and intrinsics.

    Points behind the camera (z <= 0 after the rigid transform) and outside
    the image rectangle are dropped; survivors keep input order. Returns the
    sparse disparity points (d = fx * baseline / z) and their camera depths.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.size == 0:
        return SparseDisparityPoints.empty(), np.zeros(0)
    cam = pts @ camera.extrinsic[:, :3].T + camera.extrinsic[:, 3]
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    keep = z > 0.0
    u = np.full(pts.shape[0], -1.0)
    v = np.full(pts.shape[0], -1.0)
    u[keep] = camera.fx * x[keep] / z[keep] + camera.cx
    v[keep] = camera.fy * y[keep] / z[keep] + camera.cy
    keep &= (u >= 0.0) & (u < camera.width) & (v >= 0.0) & (v < camera.height)
    depths = z[keep]
    return (
        SparseDisparityPoints(u[keep], v[keep], camera.fx * camera.baseline / depths),
        depths,
    )


def _positive(values: np.ndarray, what: str) -> None:
    if values.size and values.min() <= 0.0:
        raise ArgumentError(f"{what} must be positive, got min {values.min()}")


def depth_to_disparity(depth, camera: CameraModel):
    """d = fx * baseline / z, elementwise; rejects non-positive depth.
    Accepts an Image, array, or scalar and returns the matching type."""
    if isinstance(depth, Image):
        require_kind(depth, ImageKind.DEPTH)
        z = depth.plane(0).astype(np.float64)
        _positive(z, "depth")
        return Image(camera.fx * camera.baseline / z, ImageKind.DISPARITY)
    z = np.asarray(depth, dtype=np.float64)
    _positive(np.atleast_1d(z), "depth")
    return camera.fx * camera.baseline / z


def disparity_to_depth(disparity, camera: CameraModel):
    """z = fx * baseline / d, the exact inverse of depth_to_disparity."""
    if isinstance(disparity, Image):
        require_kind(disparity, ImageKind.DISPARITY)
        d = disparity.plane(0).astype(np.float64)
        _positive(d, "disparity")
        return Image(camera.fx * camera.baseline / d, ImageKind.DEPTH)
    d = np.asarray(disparity, dtype=np.float64)
    _positive(np.atleast_1d(d), "disparity")
    return camera.fx * camera.baseline / d


# ---------------------------------------------------------------------------
# refinement

@dataclass(frozen=True)
class RefineParams:
    """Neighborhood veto: point i is dropped when some original point j has
    dist(i, j) <= alpha * d_i and d_j < beta * d_i."""

    alpha: float = 0.75
    beta: float = 0.85

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ArgumentError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (0.0 < self.beta < 1.0):
            raise ArgumentError(f"beta must lie in (0, 1), got {self.beta}")


def refine_disparity_points(points: SparseDisparityPoints,
                            params: RefineParams | None = None) -> SparseDisparityPoints:
    """Remove likely foreground-bleed outliers from projected sparse points.

    All tests run against the original point set, so the result does not
    depend on input order; survivors keep their relative order.
    """
    params = params or RefineParams()
    n = len(points)
    if n == 0:
        return points

    u, v, d = points.u, points.v, points.d
    removed = np.zeros(n, dtype=bool)
    # Chunk the O(N^2) distance test to bound memory.
    chunk = max(1, min(n, 2_000_000 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        du = u[start:stop, None] - u[None, :]
        dv = v[start:stop, None] - v[None, :]
        dist = np.hypot(du, dv)
        near = dist <= params.alpha * d[start:stop, None]
        closer = d[None, :] < params.beta * d[start:stop, None]
        veto = near & closer
        veto[np.arange(stop - start), np.arange(start, stop)] = False
        removed[start:stop] = veto.any(axis=1)

    keep = ~removed
    return SparseDisparityPoints(u[keep], v[keep], d[keep])


# ---------------------------------------------------------------------------
# consistency and warping

def rasterize_points(points: SparseDisparityPoints, width: int, height: int
                     ) -> tuple[Image, Image]:
    """Splat sparse points to a dense map at rounded positions; on collision
    the larger (nearer) disparity wins. Returns (disparity, validity mask)."""
    if width < 1 or height < 1:
        raise ArgumentError(f"raster size must be positive, got {width}x{height}")
    disp = np.zeros((height, width), dtype=np.float64)
    mask = np.zeros((height, width), dtype=np.float64)
    if len(points):
        us = np.rint(points.u).astype(np.int64)
        vs = np.rint(points.v).astype(np.int64)
        inside = (us >= 0) & (us < width) & (vs >= 0) & (vs < height)
        np.maximum.at(disp, (vs[inside], us[inside]), points.d[inside])
        mask[vs[inside], us[inside]] = 1.0
    return Image(disp, ImageKind.DISPARITY), Image(mask, ImageKind.WEIGHT)


def left_right_consistency_mask(
    d_left: Image,
    d_right: Image,
    camera: CameraModel,
    threshold: float = 1.0,
    legacy_metric_shift: bool = False,
) -> Image:
    """Occlusion mask from left/right disparity disagreement.

    Each right-view pixel reprojects to u_left = u_right + d_right (pixel
    disparities; with ``legacy_metric_shift`` the shift is d_right *
    baseline / fx instead, reproducing an older convention). The reprojected
    disparities are splatted into the left view, foreground-first; mask
    pixels are 1 where no right pixel lands or where |d_left - d_reproj| >
    threshold.
    """
    require_kind(d_left, ImageKind.DISPARITY, "d_left")
    require_kind(d_right, ImageKind.DISPARITY, "d_right")
    require_same_size(d_left, d_right, "disparity maps")
    if not (threshold > 0.0):
        raise ArgumentError(f"threshold must be positive, got {threshold}")

    h, w = d_left.height, d_left.width
    right = d_right.plane(0).astype(np.float64)
    shift = right * (camera.baseline / camera.fx) if legacy_metric_shift else right

    us = np.arange(w, dtype=np.float64)[None, :] + shift
    cols = np.rint(us).astype(np.int64)
    rows = np.broadcast_to(np.arange(h, dtype=np.int64)[:, None], (h, w))
    inside = (cols >= 0) & (cols < w)

    reproj = np.full((h, w), -np.inf)
    np.maximum.at(reproj, (rows[inside], cols[inside]), right[inside])

    left = d_left.plane(0).astype(np.float64)
    occluded = np.isneginf(reproj) | (np.abs(left - reproj) > threshold)
    return Image(occluded.astype(np.float64), ImageKind.WEIGHT)


class WarpDirection(Enum):
    """Which neighboring view the source image comes from.

    RIGHT_TO_LEFT samples the source at (x - d, y): the disparity map lives
    in the output (left) frame and the source is the right image.
    LEFT_TO_RIGHT samples at (x + d, y).
    """

    RIGHT_TO_LEFT = "right_to_left"
    LEFT_TO_RIGHT = "left_to_right"


def warp_by_disparity(
    img: Image,
    disparity: Image,
    direction: WarpDirection = WarpDirection.RIGHT_TO_LEFT,
) -> tuple[Image, Image]:
    """Inverse-warp ``img`` through a disparity map with bilinear sampling.

    Returns (warped, validity mask); samples falling outside the source
    width are filled with 0 and masked invalid.
    """
    require_kind(disparity, ImageKind.DISPARITY, "disparity")
    require_same_size(img, disparity, "image and disparity")

    h, w = img.height, img.width
    d = disparity.plane(0).astype(np.float64)
    sign = -1.0 if direction is WarpDirection.RIGHT_TO_LEFT else 1.0
    xs = np.arange(w, dtype=np.float64)[None, :] + sign * d
    valid = (xs >= 0.0) & (xs <= w - 1.0)

    xs_safe = np.clip(xs, 0.0, w - 1.0)
    x0 = np.floor(xs_safe).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = xs_safe - x0
    rows = np.arange(h)[:, None]

    planes = img.data.astype(np.float64)
    warped = planes[:, rows, x0] * (1.0 - frac) + planes[:, rows, x1] * frac
    warped[:, ~valid] = 0.0
    return Image(warped, img.kind), Image(valid.astype(np.float64), ImageKind.WEIGHT)
