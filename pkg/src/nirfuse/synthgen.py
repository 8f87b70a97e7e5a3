"""Synthetic RGB-NIR stereo rendering: surface normals from depth,
Lambertian ambient and active lighting, a per-channel sensor model with
seeded Gaussian noise, and forward-warped right views with ground truth
disparity.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ArgumentError, ImageIOError
from .fileio import load_image
from .image import Image, ImageKind, require_kind, require_same_size
from .lidargeo import CameraModel, back_project_grid, camera_from_dict

_SCENE_VERSION = 1
_STAGE_PRE = 0
_STAGE_POST = 1
# Gradient denominators smaller than this mark the normal invalid.
_MIN_TANGENT = 1e-12


class Band(Enum):
    R = 0
    G = 1
    B = 2
    NIR = 3


class LightKind(Enum):
    AMBIENT = "ambient"
    ACTIVE_NIR = "active_nir"


@dataclass(frozen=True)
class LightSource:
    """Point light at a camera-frame position with scalar brightness."""

    position: np.ndarray
    brightness: float
    kind: LightKind = LightKind.AMBIENT

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.isfinite(pos).all():
            raise ArgumentError("light position must be finite")
        if not (self.brightness >= 0.0):
            raise ArgumentError(f"brightness must be >= 0, got {self.brightness}")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class SensorConfig:
    """Exposure/gain per channel group (RGB shares one pair, NIR its own)
    plus pre- and post-gain Gaussian noise levels and the RNG seed."""

    exposure_rgb: float = 1.0
    exposure_nir: float = 1.0
    gain_rgb: float = 1.0
    gain_nir: float = 1.0
    noise_sigma_pre: float = 0.0
    noise_sigma_post: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("exposure_rgb", "exposure_nir", "gain_rgb", "gain_nir"):
            if not (getattr(self, name) > 0.0):
                raise ArgumentError(f"{name} must be positive")
        for name in ("noise_sigma_pre", "noise_sigma_post"):
            if not (getattr(self, name) >= 0.0):
                raise ArgumentError(f"{name} must be >= 0")

    def exposure(self, band: Band) -> float:
        return self.exposure_nir if band is Band.NIR else self.exposure_rgb

    def gain(self, band: Band) -> float:
        return self.gain_nir if band is Band.NIR else self.gain_rgb


@dataclass(frozen=True)
class SceneMaps:
    """Everything static about a scene: depth, both albedos, and the camera."""

    depth: Image
    rgb_albedo: Image
    nir_albedo: Image
    camera: CameraModel

    def __post_init__(self):
        require_kind(self.depth, ImageKind.DEPTH, "depth")
        require_kind(self.rgb_albedo, ImageKind.RGB, "rgb_albedo")
        require_kind(self.nir_albedo, ImageKind.GRAY, "nir_albedo")
        require_same_size(self.depth, self.rgb_albedo, "depth and rgb_albedo")
        require_same_size(self.depth, self.nir_albedo, "depth and nir_albedo")
        if (self.depth.height, self.depth.width) != (self.camera.height, self.camera.width):
            raise ArgumentError(
                f"scene maps are {self.depth.width}x{self.depth.height} but the camera "
                f"expects {self.camera.width}x{self.camera.height}")
        for name in ("rgb_albedo", "nir_albedo"):
            data = getattr(self, name).data
            if data.min() < 0.0 or data.max() > 1.0:
                raise ArgumentError(f"{name} must lie in [0, 1]")


# ---------------------------------------------------------------------------
# geometry and lighting

def normal_from_depth(depth: Image, camera: CameraModel) -> Image:
    """Per-pixel unit surface normals from a depth map.

    Depth gradients are taken against the back-projected metric coordinates
    (central differences inside, one-sided at borders); the normal is
    normalize(-dz/dx, -dz/dy, 1), so a fronto-parallel plane maps to
    (0, 0, 1). Pixels with non-positive depth, or whose gradient stencil
    touches one, get the zero vector instead of a unit normal.
    """
    require_kind(depth, ImageKind.DEPTH, "depth")
    z = depth.plane(0).astype(np.float64)
    valid = np.isfinite(z) & (z > 0.0)

    x, y, _ = back_project_grid(np.where(valid, z, 1.0), camera)
    zs = np.where(valid, z, 1.0)
    dz_du = np.gradient(zs, axis=1)
    dx_du = np.gradient(x, axis=1)
    dz_dv = np.gradient(zs, axis=0)
    dy_dv = np.gradient(y, axis=0)

    ok = valid & (np.abs(dx_du) > _MIN_TANGENT) & (np.abs(dy_dv) > _MIN_TANGENT)
    # Invalid depth poisons every normal whose stencil reads it.
    grown = np.zeros_like(valid)
    inv = ~valid
    grown |= inv
    grown[:, 1:] |= inv[:, :-1]
    grown[:, :-1] |= inv[:, 1:]
    grown[1:, :] |= inv[:-1, :]
    grown[:-1, :] |= inv[1:, :]
    ok &= ~grown

    with np.errstate(divide="ignore", invalid="ignore"):
        nx = -dz_du / dx_du
        ny = -dz_dv / dy_dv
    nz = np.ones_like(z)
    norm = np.sqrt(nx * nx + ny * ny + 1.0)
    out = np.where(ok, np.stack([nx, ny, nz]) / norm, 0.0)
    return Image(out, ImageKind.NORMAL)


def _lambert(points: np.ndarray, normals: Image, light: LightSource) -> np.ndarray:
    to_light = light.position.reshape(3, 1, 1) - points
    dist = np.sqrt((to_light * to_light).sum(axis=0))
    unit = to_light / np.maximum(dist, 1e-30)
    cos = (normals.data.astype(np.float64) * unit).sum(axis=0)
    return light.brightness * np.maximum(0.0, cos)


def ambient_irradiance(points: np.ndarray, normals: Image,
                       lights: list[LightSource]) -> Image:
    """Sum of Lambert-cosine contributions from every ambient light."""
    require_kind(normals, ImageKind.NORMAL, "normals")
    total = np.zeros((normals.height, normals.width))
    for light in lights:
        if light.kind is not LightKind.AMBIENT:
            raise ArgumentError(f"expected ambient lights, got {light.kind.value}")
        total += _lambert(points, normals, light)
    return Image(total, ImageKind.GRAY)


def active_irradiance(points: np.ndarray, normals: Image,
                      light: LightSource, band: Band) -> Image:
    """Active illumination reaches only the NIR band; R, G, B get zeros."""
    require_kind(normals, ImageKind.NORMAL, "normals")
    if light.kind is not LightKind.ACTIVE_NIR:
        raise ArgumentError(f"expected an active light, got {light.kind.value}")
    if band is not Band.NIR:
        return Image(np.zeros((normals.height, normals.width)), ImageKind.GRAY)
    return Image(_lambert(points, normals, light), ImageKind.GRAY)


# ---------------------------------------------------------------------------
# sensor model

def _noise_field(shape: tuple[int, int], sigma: float, seed: int,
                 band: Band, stage: int) -> np.ndarray:
    """Zero-mean Gaussian field from a counter-based generator keyed by
    (seed, band, stage), so each field is independent and reproducible."""
    if sigma == 0.0:
        return np.zeros(shape)
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(band.value, stage))
    gen = np.random.Generator(np.random.Philox(seq))
    return sigma * gen.standard_normal(shape)


def _apply_sensor(radiance: np.ndarray, sensor: SensorConfig, band: Band) -> np.ndarray:
    t = sensor.exposure(band)
    g = sensor.gain(band)
    pre = _noise_field(radiance.shape, sensor.noise_sigma_pre, sensor.seed, band, _STAGE_PRE)
    post = _noise_field(radiance.shape, sensor.noise_sigma_post, sensor.seed, band, _STAGE_POST)
    return np.clip(post + g * (pre + t * radiance), 0.0, 1.0)


def render_channel(albedo: Image, irradiance: Image, active: Image,
                   sensor: SensorConfig, band: Band) -> Image:
    """One sensor channel: clamp01(post + gain * (pre + t * R * (E + L)))."""
    require_kind(albedo, ImageKind.GRAY, "albedo")
    require_kind(irradiance, ImageKind.GRAY, "irradiance")
    require_kind(active, ImageKind.GRAY, "active")
    require_same_size(albedo, irradiance, "albedo and irradiance")
    require_same_size(albedo, active, "albedo and active")
    radiance = albedo.plane(0).astype(np.float64) * (
        irradiance.plane(0).astype(np.float64) + active.plane(0).astype(np.float64))
    return Image(_apply_sensor(radiance, sensor, band), ImageKind.GRAY)


def pseudo_nir_albedo(rgb_albedo: Image, c0: float = 0.1, c_r: float = 0.4,
                      c_g: float = 0.4, c_b: float = 0.1) -> Image:
    """Analytic NIR-reflectance stand-in: clamp01 of an affine map over RGB
    emphasizing red/green, for scenes with no measured NIR albedo."""
    require_kind(rgb_albedo, ImageKind.RGB, "rgb_albedo")
    r, g, b = (rgb_albedo.plane(i).astype(np.float64) for i in range(3))
    return Image(np.clip(c0 + c_r * r + c_g * g + c_b * b, 0.0, 1.0), ImageKind.GRAY)


# ---------------------------------------------------------------------------
# stereo rendering

@dataclass(frozen=True)
class StereoRender:
    rgb_left: Image
    rgb_right: Image
    nir_left: Image
    nir_right: Image
    disparity: Image
    valid_mask: Image


def _forward_warp(planes: np.ndarray, disparity: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Splat left-frame planes to the right frame at u - d, nearest surface
    (largest disparity) winning collisions. Returns (warped, hole mask)."""
    c, h, w = planes.shape
    target = np.rint(np.arange(w)[None, :] - disparity).astype(np.int64)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    cols = np.broadcast_to(np.arange(w)[None, :], (h, w))
    inside = (target >= 0) & (target < w)

    zbuf = np.full((h, w), -np.inf)
    np.maximum.at(zbuf, (rows[inside], target[inside]), disparity[inside])
    safe = np.clip(target, 0, w - 1)
    win = inside & (disparity == zbuf[rows, safe])

    out = np.zeros((c, h, w))
    mask = np.zeros((h, w))
    out[:, rows[win], target[win]] = planes[:, rows[win], cols[win]]
    mask[rows[win], target[win]] = 1.0
    return out, mask


def render_stereo_scene(scene: SceneMaps, lights: list[LightSource],
                        sensor: SensorConfig, baseline: float | None = None
                        ) -> StereoRender:
    """Render the four sensor images plus ground-truth disparity.

    The left view is lit and exposed directly; the right view forward-warps
    the noiseless left radiance by the ground-truth disparity (z-buffered,
    holes masked) and then runs the same sensor model. Noise fields depend
    only on (seed, band, stage), so a zero baseline reproduces the left
    view bit for bit.
    """
    cam = scene.camera
    b = cam.baseline if baseline is None else baseline
    if b < 0.0:
        raise ArgumentError(f"baseline must be >= 0, got {b}")

    z = scene.depth.plane(0).astype(np.float64)
    if not np.isfinite(z).all() or z.min() <= 0.0:
        raise ArgumentError("scene depth must be positive and finite")

    active = [l for l in lights if l.kind is LightKind.ACTIVE_NIR]
    ambient = [l for l in lights if l.kind is LightKind.AMBIENT]
    if len(active) != 1:
        raise ArgumentError(f"scene needs exactly one active light, got {len(active)}")

    points = back_project_grid(z, cam)
    normals = normal_from_depth(scene.depth, cam)
    e_amb = ambient_irradiance(points, normals, ambient).plane(0).astype(np.float64)
    l_nir = active_irradiance(points, normals, active[0], Band.NIR)
    l_nir = l_nir.plane(0).astype(np.float64)

    albedos = [scene.rgb_albedo.plane(i).astype(np.float64) for i in range(3)]
    albedos.append(scene.nir_albedo.plane(0).astype(np.float64))
    radiance = np.stack([
        albedos[0] * e_amb,
        albedos[1] * e_amb,
        albedos[2] * e_amb,
        albedos[3] * (e_amb + l_nir),
    ])

    disparity = cam.fx * b / z
    right_rad, right_mask = _forward_warp(radiance, disparity)

    bands = (Band.R, Band.G, Band.B, Band.NIR)
    left = [_apply_sensor(radiance[i], sensor, band) for i, band in enumerate(bands)]
    right = [_apply_sensor(right_rad[i], sensor, band) for i, band in enumerate(bands)]

    return StereoRender(
        rgb_left=Image(np.stack(left[:3]), ImageKind.RGB),
        rgb_right=Image(np.stack(right[:3]), ImageKind.RGB),
        nir_left=Image(left[3], ImageKind.GRAY),
        nir_right=Image(right[3], ImageKind.GRAY),
        disparity=Image(disparity, ImageKind.DISPARITY),
        valid_mask=Image(right_mask, ImageKind.WEIGHT),
    )


# ---------------------------------------------------------------------------
# scene configuration

def load_scene_json(path: str) -> tuple[SceneMaps, list[LightSource], SensorConfig, float]:
    """Parse a version-1 scene document and load its referenced maps.

    Relative image paths resolve against the JSON file's directory. Returns
    (scene, lights, sensor, baseline); ``nir_albedo`` falls back to the
    pseudo-albedo map when absent.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ImageIOError(f"{path}: invalid JSON: {exc}") from exc

    version = payload.get("version", _SCENE_VERSION)
    if version != _SCENE_VERSION:
        raise ImageIOError(f"{path}: unsupported config version {version}")

    base = os.path.dirname(os.path.abspath(path))
    resolve = lambda p: p if os.path.isabs(p) else os.path.join(base, p)

    try:
        camera = camera_from_dict(payload["camera"], where=path)
        depth = load_image(resolve(payload["depth"]), ImageKind.DEPTH)
        rgb_albedo = load_image(resolve(payload["albedo"]), ImageKind.RGB)
        light_specs = payload["lights"]
    except KeyError as exc:
        raise ImageIOError(f"{path}: missing scene field {exc}") from exc

    if "nir_albedo" in payload:
        nir_albedo = load_image(resolve(payload["nir_albedo"]), ImageKind.GRAY)
    else:
        nir_albedo = pseudo_nir_albedo(rgb_albedo)

    lights = []
    for spec in light_specs:
        try:
            kind = LightKind(spec.get("kind", "ambient"))
        except ValueError as exc:
            raise ImageIOError(f"{path}: unknown light kind {spec.get('kind')!r}") from exc
        try:
            lights.append(LightSource(np.asarray(spec["pos"], dtype=np.float64),
                                      float(spec["phi"]), kind))
        except KeyError as exc:
            raise ImageIOError(f"{path}: light missing field {exc}") from exc

    sensor_spec = payload.get("sensor", {})
    known = {"exposure_rgb", "exposure_nir", "gain_rgb", "gain_nir",
             "noise_sigma_pre", "noise_sigma_post", "seed"}
    unknown = set(sensor_spec) - known
    if unknown:
        raise ImageIOError(f"{path}: unknown sensor fields {sorted(unknown)}")
    sensor = SensorConfig(**sensor_spec)

    baseline = float(payload.get("baseline", camera.baseline))
    scene = SceneMaps(depth, rgb_albedo, nir_albedo, camera)
    return scene, lights, sensor, baseline
