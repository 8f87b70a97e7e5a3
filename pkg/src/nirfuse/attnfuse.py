"""Attention-based RGB-NIR fusion: numpy forward passes for a small
convolutional weight-map predictor.

The model is inference-only. A shared residual-block encoder (stride product
4) maps each input to feature space; three multi-scale channel attention
modules implement attentional feature fusion; a decoder head predicts
per-pixel blend weights that drive the HSV fusion, and a NIR-guided filter
polishes the result. Weights come from a flat binary tensor file (magic
"NFW1"), torch-style naming, float32 little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ImageIOError
from .fusion import WeightMaps, hsv_weighted_fusion
from .guided import GuidedFilterParams, guided_filter
from .image import Image, ImageKind, require_kind, require_same_size

_EPS_NORM = 1e-5  # instance/batch norm variance floor
_FUSE_GUARD = 1e-12  # attentional fusion denominator guard
_ENCODER_STRIDE_PRODUCT = 4
_ENCODER_BLOCK_STRIDE = 2
_UPSAMPLE_FACTOR = 4
_MAGIC = b"NFW1"


# ---------------------------------------------------------------------------
# primitive layers (arrays are (channels, height, width) float64)

def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation with zero padding, torch weight layout
    (out_channels, in_channels, kh, kw)."""
    if stride < 1:
        raise ArgumentError(f"stride must be positive, got {stride}")
    c_out, c_in, kh, kw = weight.shape
    if x.shape[0] != c_in:
        raise ArgumentError(f"conv expects {c_in} input channels, got {x.shape[0]}")
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ArgumentError("input smaller than kernel after padding")
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    out = np.einsum("chwkl,ockl->ohw", windows, weight, optimize=True)
    if bias is not None:
        out = out + bias[:, None, None]
    return out


def instance_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Per-channel normalization over the spatial extent, affine applied."""
    mean = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    return (x - mean) / np.sqrt(var + _EPS_NORM) * gamma[:, None, None] + beta[:, None, None]


def batch_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               running_mean: np.ndarray, running_var: np.ndarray) -> np.ndarray:
    """Inference-mode normalization with stored running statistics."""
    scale = gamma / np.sqrt(running_var + _EPS_NORM)
    return (x - running_mean[:, None, None]) * scale[:, None, None] + beta[:, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(1, 2), keepdims=True)


def bilinear_upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Scale both spatial dimensions by an integer factor, half-pixel
    aligned (align-corners off), edges clamped."""
    if not isinstance(factor, int) or factor < 1:
        raise ArgumentError(f"upsample factor must be a positive integer, got {factor}")
    _, h, w = x.shape
    ys = np.clip((np.arange(h * factor) + 0.5) / factor - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(w * factor) + 0.5) / factor - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]

    top = x[:, y0][:, :, x0] * (1 - wx) + x[:, y0][:, :, x1] * wx
    bottom = x[:, y1][:, :, x0] * (1 - wx) + x[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bottom * wy


# ---------------------------------------------------------------------------
# parameter bundles

def _as_f64(name: str, arr: np.ndarray, shape: tuple[int, ...] | None = None) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise ArgumentError(f"{name} must have shape {shape}, got {out.shape}")
    return out


@dataclass(frozen=True)
class ResidualBlockWeights:
    """Two 3x3 convolutions, each followed by affine instance norm and ReLU."""

    conv1_weight: np.ndarray
    conv1_bias: np.ndarray
    norm1_gamma: np.ndarray
    norm1_beta: np.ndarray
    conv2_weight: np.ndarray
    conv2_bias: np.ndarray
    norm2_gamma: np.ndarray
    norm2_beta: np.ndarray

    def __post_init__(self):
        w1 = _as_f64("conv1.weight", self.conv1_weight)
        if w1.ndim != 4 or w1.shape[2:] != (3, 3):
            raise ArgumentError(f"conv1.weight must be (out, in, 3, 3), got {w1.shape}")
        out_c, in_c = w1.shape[:2]
        object.__setattr__(self, "conv1_weight", w1)
        object.__setattr__(self, "conv1_bias", _as_f64("conv1.bias", self.conv1_bias, (out_c,)))
        object.__setattr__(self, "norm1_gamma", _as_f64("norm1.weight", self.norm1_gamma, (out_c,)))
        object.__setattr__(self, "norm1_beta", _as_f64("norm1.bias", self.norm1_beta, (out_c,)))
        object.__setattr__(
            self, "conv2_weight", _as_f64("conv2.weight", self.conv2_weight, (out_c, out_c, 3, 3))
        )
        object.__setattr__(self, "conv2_bias", _as_f64("conv2.bias", self.conv2_bias, (out_c,)))
        object.__setattr__(self, "norm2_gamma", _as_f64("norm2.weight", self.norm2_gamma, (out_c,)))
        object.__setattr__(self, "norm2_beta", _as_f64("norm2.bias", self.norm2_beta, (out_c,)))
        object.__setattr__(self, "in_channels", in_c)
        object.__setattr__(self, "out_channels", out_c)


@dataclass(frozen=True)
class AttentionBranchWeights:
    """1x1 conv -> batch norm -> ReLU -> 1x1 conv -> batch norm."""

    conv1_weight: np.ndarray
    conv1_bias: np.ndarray
    bn1_gamma: np.ndarray
    bn1_beta: np.ndarray
    conv2_weight: np.ndarray
    conv2_bias: np.ndarray
    bn2_gamma: np.ndarray
    bn2_beta: np.ndarray
    bn1_mean: np.ndarray | None = None
    bn1_var: np.ndarray | None = None
    bn2_mean: np.ndarray | None = None
    bn2_var: np.ndarray | None = None

    def __post_init__(self):
        w1 = _as_f64("conv1.weight", self.conv1_weight)
        if w1.ndim != 4 or w1.shape[2:] != (1, 1):
            raise ArgumentError(f"attention conv1.weight must be (mid, in, 1, 1), got {w1.shape}")
        mid, channels = w1.shape[:2]
        object.__setattr__(self, "conv1_weight", w1)
        object.__setattr__(self, "conv1_bias", _as_f64("conv1.bias", self.conv1_bias, (mid,)))
        object.__setattr__(self, "bn1_gamma", _as_f64("bn1.weight", self.bn1_gamma, (mid,)))
        object.__setattr__(self, "bn1_beta", _as_f64("bn1.bias", self.bn1_beta, (mid,)))
        object.__setattr__(
            self, "conv2_weight", _as_f64("conv2.weight", self.conv2_weight, (channels, mid, 1, 1))
        )
        object.__setattr__(self, "conv2_bias", _as_f64("conv2.bias", self.conv2_bias, (channels,)))
        object.__setattr__(self, "bn2_gamma", _as_f64("bn2.weight", self.bn2_gamma, (channels,)))
        object.__setattr__(self, "bn2_beta", _as_f64("bn2.bias", self.bn2_beta, (channels,)))
        # Running statistics default to mean 0, var 1 when not stored.
        for name, size in (("bn1_mean", mid), ("bn1_var", mid),
                           ("bn2_mean", channels), ("bn2_var", channels)):
            value = getattr(self, name)
            if value is None:
                value = np.zeros(size) if name.endswith("mean") else np.ones(size)
            object.__setattr__(self, name, _as_f64(name, value, (size,)))
        object.__setattr__(self, "channels", channels)

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = conv2d(x, self.conv1_weight, self.conv1_bias)
        out = relu(batch_norm(out, self.bn1_gamma, self.bn1_beta, self.bn1_mean, self.bn1_var))
        out = conv2d(out, self.conv2_weight, self.conv2_bias)
        return batch_norm(out, self.bn2_gamma, self.bn2_beta, self.bn2_mean, self.bn2_var)


@dataclass(frozen=True)
class MSCAMParams:
    """Multi-scale channel attention: a local and a pooled global branch."""

    local: AttentionBranchWeights
    global_: AttentionBranchWeights

    def __post_init__(self):
        if self.local.channels != self.global_.channels:
            raise ArgumentError("local and global branches must share channel count")

    @property
    def channels(self) -> int:
        return self.local.channels


@dataclass(frozen=True)
class AFFWeights:
    """Three attention modules: one per input stream and one for the union."""

    rgb: MSCAMParams
    nir: MSCAMParams
    fusion: MSCAMParams

    def __post_init__(self):
        if not (self.rgb.channels == self.nir.channels == self.fusion.channels):
            raise ArgumentError("attention modules must share channel count")


# ---------------------------------------------------------------------------
# forward passes

def _require_feature(img: Image, name: str) -> np.ndarray:
    require_kind(img, ImageKind.FEATURE, name)
    return img.data.astype(np.float64)


def residual_block_forward(x: Image, weights: ResidualBlockWeights, stride: int = 1) -> Image:
    """conv3x3(pad 1, stride s) -> IN -> ReLU -> conv3x3(pad 1) -> IN -> ReLU."""
    data = _require_feature(x, "features")
    if data.shape[0] != weights.in_channels:
        raise ArgumentError(
            f"block expects {weights.in_channels} channels, got {data.shape[0]}"
        )
    out = conv2d(data, weights.conv1_weight, weights.conv1_bias, stride=stride, padding=1)
    out = relu(instance_norm(out, weights.norm1_gamma, weights.norm1_beta))
    out = conv2d(out, weights.conv2_weight, weights.conv2_bias, stride=1, padding=1)
    out = relu(instance_norm(out, weights.norm2_gamma, weights.norm2_beta))
    return Image(out, ImageKind.FEATURE)


def mscam_forward(x: Image, params: MSCAMParams) -> Image:
    """sigmoid(local(x) + global(pool(x))), broadcast over the spatial extent.

    Every sample is strictly inside (0, 1) up to float rounding.
    """
    data = _require_feature(x, "features")
    if data.shape[0] != params.channels:
        raise ArgumentError(f"attention expects {params.channels} channels, got {data.shape[0]}")
    local = params.local.forward(data)
    pooled = params.global_.forward(global_avg_pool(data))
    return Image(sigmoid(local + pooled), ImageKind.FEATURE)


def aff_fuse(f_rgb: Image, f_nir: Image, weights: AFFWeights) -> tuple[Image, Image]:
    """Attentional feature fusion of two feature maps.

    A_v = f_rgb * M_rgb(f_rgb), A_n = f_nir * M_nir(f_nir),
    A_u = (A_v + A_n) / (M_rgb(A_v) + M_nir(A_n) + guard),
    w = M_fusion(A_u), fused = A_v * w + A_n * (1 - w).
    Returns (fused features, fusion weight map).
    """
    rgb = _require_feature(f_rgb, "f_rgb")
    nir = _require_feature(f_nir, "f_nir")
    if rgb.shape != nir.shape:
        raise ArgumentError(f"feature shapes differ: {rgb.shape} vs {nir.shape}")

    a_v = rgb * mscam_forward(f_rgb, weights.rgb).data.astype(np.float64)
    a_n = nir * mscam_forward(f_nir, weights.nir).data.astype(np.float64)
    img_av = Image(a_v, ImageKind.FEATURE)
    img_an = Image(a_n, ImageKind.FEATURE)
    denom = (
        mscam_forward(img_av, weights.rgb).data.astype(np.float64)
        + mscam_forward(img_an, weights.nir).data.astype(np.float64)
        + _FUSE_GUARD
    )
    a_u = (a_v + a_n) / denom
    w = mscam_forward(Image(a_u, ImageKind.FEATURE), weights.fusion).data.astype(np.float64)
    fused = a_v * w + a_n * (1.0 - w)
    return Image(fused, ImageKind.FEATURE), Image(w, ImageKind.FEATURE)


def decode_weight_maps(features: Image, decoder: ResidualBlockWeights) -> WeightMaps:
    """Project features to two channels, sigmoid, then 4x bilinear upsample;
    channel 0 becomes alpha, channel 1 beta."""
    if decoder.out_channels != 2:
        raise ArgumentError(
            f"weight decoder must produce 2 channels, got {decoder.out_channels}"
        )
    logits = residual_block_forward(features, decoder, stride=1)
    maps = bilinear_upsample(sigmoid(logits.data.astype(np.float64)), _UPSAMPLE_FACTOR)
    alpha = Image(maps[0], ImageKind.WEIGHT)
    beta = Image(maps[1], ImageKind.WEIGHT)
    return WeightMaps(alpha, beta)


# ---------------------------------------------------------------------------
# weight file format

def write_weight_file(path: str, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors: magic, then per tensor a length-prefixed UTF-8
    name, u32 rank, u32 dims, and float32 little-endian data."""
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            for name, value in tensors.items():
                arr = np.asarray(value, dtype="<f4")  # tobytes() emits C order
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.tobytes())
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def read_weight_file(path: str) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != _MAGIC:
        raise ImageIOError(f"{path}: not a weight file (magic {raw[:4]!r})")

    tensors: dict[str, np.ndarray] = {}
    pos = 4
    total = len(raw)

    def take(count, what):
        nonlocal pos
        if pos + count > total:
            raise ImageIOError(f"{path}: truncated weight file while reading {what}")
        chunk = raw[pos : pos + count]
        pos += count
        return chunk

    while pos < total:
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        if rank > 8:
            raise ImageIOError(f"{path}: implausible rank {rank} for {name}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * count, f"data of {name}"), dtype="<f4")
        tensors[name] = data.reshape(dims).astype(np.float64)
    return tensors


# ---------------------------------------------------------------------------
# full model

def _block_from(tensors: dict[str, np.ndarray], prefix: str) -> ResidualBlockWeights:
    def get(suffix):
        key = f"{prefix}.{suffix}"
        if key not in tensors:
            raise ArgumentError(f"weights missing tensor {key}")
        return tensors[key]

    return ResidualBlockWeights(
        conv1_weight=get("conv1.weight"), conv1_bias=get("conv1.bias"),
        norm1_gamma=get("norm1.weight"), norm1_beta=get("norm1.bias"),
        conv2_weight=get("conv2.weight"), conv2_bias=get("conv2.bias"),
        norm2_gamma=get("norm2.weight"), norm2_beta=get("norm2.bias"),
    )


def _branch_from(tensors: dict[str, np.ndarray], prefix: str) -> AttentionBranchWeights:
    def get(suffix, optional=False):
        key = f"{prefix}.{suffix}"
        if key not in tensors:
            if optional:
                return None
            raise ArgumentError(f"weights missing tensor {key}")
        return tensors[key]

    return AttentionBranchWeights(
        conv1_weight=get("conv1.weight"), conv1_bias=get("conv1.bias"),
        bn1_gamma=get("bn1.weight"), bn1_beta=get("bn1.bias"),
        conv2_weight=get("conv2.weight"), conv2_bias=get("conv2.bias"),
        bn2_gamma=get("bn2.weight"), bn2_beta=get("bn2.bias"),
        bn1_mean=get("bn1.running_mean", optional=True),
        bn1_var=get("bn1.running_var", optional=True),
        bn2_mean=get("bn2.running_mean", optional=True),
        bn2_var=get("bn2.running_var", optional=True),
    )


def _mscam_from(tensors: dict[str, np.ndarray], prefix: str) -> MSCAMParams:
    return MSCAMParams(
        local=_branch_from(tensors, f"{prefix}.local"),
        global_=_branch_from(tensors, f"{prefix}.global"),
    )


@dataclass(frozen=True)
class FusionModelWeights:
    """Parsed weight bundle: encoder blocks, attention modules, decoder head."""

    encoder: tuple[ResidualBlockWeights, ...]
    aff: AFFWeights
    decoder: ResidualBlockWeights

    def __post_init__(self):
        if _ENCODER_BLOCK_STRIDE ** len(self.encoder) != _ENCODER_STRIDE_PRODUCT:
            raise ArgumentError(
                f"encoder stride product must be {_ENCODER_STRIDE_PRODUCT} "
                f"(stride-{_ENCODER_BLOCK_STRIDE} blocks), got {len(self.encoder)} block(s)"
            )
        if self.encoder[0].in_channels != 3:
            raise ArgumentError("first encoder block must accept 3 channels")
        feat = self.encoder[-1].out_channels
        if self.aff.rgb.channels != feat:
            raise ArgumentError(
                f"attention channel count {self.aff.rgb.channels} does not match "
                f"encoder output {feat}"
            )
        if self.decoder.in_channels != feat:
            raise ArgumentError(
                f"decoder expects {self.decoder.in_channels} channels, encoder yields {feat}"
            )

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "FusionModelWeights":
        blocks = []
        index = 1
        while f"encoder.block{index}.conv1.weight" in tensors:
            blocks.append(_block_from(tensors, f"encoder.block{index}"))
            index += 1
        if not blocks:
            raise ArgumentError("weights contain no encoder blocks")
        aff = AFFWeights(
            rgb=_mscam_from(tensors, "aff.rgb"),
            nir=_mscam_from(tensors, "aff.nir"),
            fusion=_mscam_from(tensors, "aff.fusion"),
        )
        return cls(encoder=tuple(blocks), aff=aff, decoder=_block_from(tensors, "decoder"))

    @classmethod
    def load(cls, path: str) -> "FusionModelWeights":
        return cls.from_tensors(read_weight_file(path))

    def encode(self, planes: np.ndarray) -> Image:
        """Run the shared encoder on a 3-channel plane stack."""
        features = Image(planes, ImageKind.FEATURE)
        for block in self.encoder:
            features = residual_block_forward(features, block, stride=_ENCODER_BLOCK_STRIDE)
        return features


def build_model_tensors(channels: int = 8, reduction: int = 2, init: str = "zero",
                        seed: int = 0) -> dict[str, np.ndarray]:
    """Synthesize a complete, shape-consistent tensor dictionary.

    init "zero" gives the all-zero model (useful as a reference point: the
    predicted weight maps collapse to 0.5); "random" draws small Gaussian
    weights deterministically from ``seed``.
    """
    if channels % reduction:
        raise ArgumentError("channels must be divisible by reduction")
    if init not in ("zero", "random"):
        raise ArgumentError(f"init must be 'zero' or 'random', got {init!r}")
    rng = np.random.default_rng(seed)

    def tensor(shape):
        if init == "zero":
            return np.zeros(shape, dtype=np.float32)
        return rng.normal(0.0, 0.3, size=shape).astype(np.float32)

    tensors: dict[str, np.ndarray] = {}

    def add_block(prefix, in_c, out_c):
        tensors[f"{prefix}.conv1.weight"] = tensor((out_c, in_c, 3, 3))
        tensors[f"{prefix}.conv1.bias"] = tensor((out_c,))
        tensors[f"{prefix}.norm1.weight"] = tensor((out_c,))
        tensors[f"{prefix}.norm1.bias"] = tensor((out_c,))
        tensors[f"{prefix}.conv2.weight"] = tensor((out_c, out_c, 3, 3))
        tensors[f"{prefix}.conv2.bias"] = tensor((out_c,))
        tensors[f"{prefix}.norm2.weight"] = tensor((out_c,))
        tensors[f"{prefix}.norm2.bias"] = tensor((out_c,))

    def add_branch(prefix, c, mid):
        tensors[f"{prefix}.conv1.weight"] = tensor((mid, c, 1, 1))
        tensors[f"{prefix}.conv1.bias"] = tensor((mid,))
        tensors[f"{prefix}.bn1.weight"] = tensor((mid,))
        tensors[f"{prefix}.bn1.bias"] = tensor((mid,))
        tensors[f"{prefix}.conv2.weight"] = tensor((c, mid, 1, 1))
        tensors[f"{prefix}.conv2.bias"] = tensor((c,))
        tensors[f"{prefix}.bn2.weight"] = tensor((c,))
        tensors[f"{prefix}.bn2.bias"] = tensor((c,))

    add_block("encoder.block1", 3, channels)
    add_block("encoder.block2", channels, channels)
    for stream in ("rgb", "nir", "fusion"):
        add_branch(f"aff.{stream}.local", channels, channels // reduction)
        add_branch(f"aff.{stream}.global", channels, channels // reduction)
    add_block("decoder", channels, 2)
    return tensors


def learned_image_fusion(
    rgb: Image,
    nir: Image,
    weights: FusionModelWeights,
    guided_params: GuidedFilterParams | None = None,
) -> Image:
    """Full learned fusion: encode, attention-fuse, decode blend weights,
    HSV-fuse, then guided-filter with the NIR image as guide.

    Image dimensions must be divisible by the encoder stride product (4).
    """
    require_kind(rgb, ImageKind.RGB)
    require_kind(nir, ImageKind.NIR)
    require_same_size(rgb, nir, "rgb and nir")
    if rgb.height % _ENCODER_STRIDE_PRODUCT or rgb.width % _ENCODER_STRIDE_PRODUCT:
        raise ArgumentError(
            f"image dimensions must be divisible by {_ENCODER_STRIDE_PRODUCT}, "
            f"got {rgb.width}x{rgb.height}"
        )

    f_rgb = weights.encode(rgb.data.astype(np.float64))
    nir_planes = np.repeat(nir.data.astype(np.float64), 3, axis=0)
    f_nir = weights.encode(nir_planes)

    fused_features, _ = aff_fuse(f_rgb, f_nir, weights.aff)
    maps = decode_weight_maps(fused_features, weights.decoder)
    blended = hsv_weighted_fusion(rgb, nir, maps)
    return guided_filter(blended, nir, guided_params or GuidedFilterParams())
