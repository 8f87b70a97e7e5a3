"""Command-line interface wiring the fusion, rendering, projection, stereo,
and metric modules into reproducible batch pipelines.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numeric failure.
Every subcommand prints the parameters it ran with as key=value lines, so
a captured report fully identifies the experiment. ``--threads`` bounds
internal parallelism; outputs never depend on it.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .attnfuse import FusionModelWeights, learned_image_fusion
from .color import rgb_to_gray
from .errors import ArgumentError, ImageIOError, NumericError
from .fileio import load_image, save_image
from .fusion import (
    AdaptiveParams,
    WeightMaps,
    adaptive_fusion,
    hsv_constant_fusion,
    hsv_weighted_fusion,
    ycbcr_fusion,
)
from .guided import guided_filter
from .image import Image, ImageKind
from .lidargeo import (
    left_right_consistency_mask,
    load_camera_json,
    project_points,
    rasterize_points,
    read_point_cloud,
    refine_disparity_points,
    RefineParams,
    write_disparity_points,
)
from .metrics import (
    MetricConfig,
    bad_pixel_rates,
    delta_accuracy,
    mae,
    photometric_loss,
    rmse,
    ssim,
)
from .stereocorr import (
    FeatureMode,
    VolumeKind,
    VolumeSchedule,
    correlation_volume,
    image_to_features,
    wta_disparity,
)
from .synthgen import load_scene_json, render_stereo_scene, SensorConfig
from .tvfusion import TVFusionParams, tv_bayesian_fusion

_FUSE_METHODS = ("hsv", "hsv-weighted", "ycbcr", "adaptive", "bayesian",
                 "guided", "learned")


def _report(*pairs):
    for key, value in pairs:
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key}={value}")


def _load_rgb(path: str) -> Image:
    img = load_image(path)
    if img.channels != 3:
        raise ArgumentError(f"{path}: expected a 3-channel image, got {img.channels}")
    return Image(img.data, ImageKind.RGB)


def _load_nir(path: str) -> Image:
    img = load_image(path)
    if img.channels != 1:
        raise ArgumentError(f"{path}: expected a 1-channel image, got {img.channels}")
    return Image(img.data, ImageKind.NIR)


def _add_threads(parser):
    parser.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker bound; results never depend on it (default 1)")


def _check_threads(args):
    if args.threads < 1:
        raise ArgumentError(f"--threads must be >= 1, got {args.threads}")


# ---------------------------------------------------------------------------
# fuse

def cmd_fuse(args) -> int:
    _check_threads(args)
    rgb = _load_rgb(args.rgb)
    nir = _load_nir(args.nir)
    extras = []

    if args.method == "hsv":
        fused = hsv_constant_fusion(rgb, nir, args.alpha, args.beta)
    elif args.method == "hsv-weighted":
        if args.alpha_map or args.beta_map:
            if not (args.alpha_map and args.beta_map):
                raise ArgumentError("--alpha-map and --beta-map must come together")
            maps = WeightMaps(load_image(args.alpha_map, ImageKind.WEIGHT),
                              load_image(args.beta_map, ImageKind.WEIGHT))
            extras += [("alpha_map", args.alpha_map), ("beta_map", args.beta_map)]
        else:
            maps = WeightMaps.constant(args.alpha, args.beta, nir.height, nir.width)
        fused = hsv_weighted_fusion(rgb, nir, maps)
    elif args.method == "ycbcr":
        fused = ycbcr_fusion(rgb, nir)
    elif args.method == "adaptive":
        fused = adaptive_fusion(rgb, nir, AdaptiveParams())
    elif args.method == "bayesian":
        params = TVFusionParams(lambda_tv=args.lambda_tv, iterations=args.iterations)
        luma = Image(rgb_to_gray(rgb).data, ImageKind.GRAY)
        fused = tv_bayesian_fusion(luma, Image(nir.data, ImageKind.GRAY), params)
        extras += [("lambda_tv", args.lambda_tv), ("iterations", args.iterations)]
    elif args.method == "guided":
        base = hsv_constant_fusion(rgb, nir, args.alpha, args.beta)
        fused = guided_filter(base, nir)
    elif args.method == "learned":
        if not args.weights:
            raise ArgumentError("--weights is required for the learned method")
        weights = FusionModelWeights.load(args.weights)
        fused = learned_image_fusion(rgb, nir, weights)
        extras += [("weights", args.weights)]
    else:  # pragma: no cover - argparse rejects unknown choices first
        raise ArgumentError(f"unknown method {args.method}")

    save_image(args.output, fused, bit_depth=args.bit_depth)
    _report(("command", "fuse"), ("method", args.method),
            ("alpha", args.alpha), ("beta", args.beta), *extras,
            ("output", args.output))
    return 0


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    _check_threads(args)
    scene, lights, sensor, baseline = load_scene_json(args.scene)
    if args.seed is not None:
        fields = {k: getattr(sensor, k) for k in (
            "exposure_rgb", "exposure_nir", "gain_rgb", "gain_nir",
            "noise_sigma_pre", "noise_sigma_post")}
        sensor = SensorConfig(seed=args.seed, **fields)
    out = render_stereo_scene(scene, lights, sensor, baseline)

    os.makedirs(args.outdir, exist_ok=True)
    names = (("rgb_left", out.rgb_left), ("rgb_right", out.rgb_right),
             ("nir_left", out.nir_left), ("nir_right", out.nir_right),
             ("disparity", out.disparity), ("valid_mask", out.valid_mask))
    paths = []
    for name, img in names:
        path = os.path.join(args.outdir, f"{name}.pfm")
        save_image(path, img)
        paths.append((name, path))
    _report(("command", "synth"), ("scene", args.scene),
            ("seed", sensor.seed), ("baseline", baseline), *paths)
    return 0


# ---------------------------------------------------------------------------
# lidar

def cmd_lidar(args) -> int:
    _check_threads(args)
    camera = load_camera_json(args.camera)
    cloud = read_point_cloud(args.points)
    os.makedirs(args.outdir, exist_ok=True)

    if cloud.shape[0] == 0:
        print(f"warning: {args.points} holds no points", file=sys.stderr)

    left_pts, _ = project_points(cloud, camera)
    right_pts, _ = project_points(cloud, camera.right_view())
    projected = len(left_pts)
    if args.refine:
        params = RefineParams(alpha=args.alpha, beta=args.beta)
        left_pts = refine_disparity_points(left_pts, params)
        right_pts = refine_disparity_points(right_pts, params)

    d_left, valid = rasterize_points(left_pts, camera.width, camera.height)
    d_right, _ = rasterize_points(right_pts, camera.width, camera.height)
    occlusion = left_right_consistency_mask(d_left, d_right, camera,
                                            threshold=args.occlusion_threshold)

    points_path = os.path.join(args.outdir, "points.txt")
    write_disparity_points(points_path, left_pts)
    outputs = [("points", points_path)]
    for name, img in (("disparity", d_left), ("valid_mask", valid),
                      ("occlusion_mask", occlusion)):
        path = os.path.join(args.outdir, f"{name}.pfm")
        save_image(path, img)
        outputs.append((name, path))

    _report(("command", "lidar"), ("camera", args.camera),
            ("refine", "on" if args.refine else "off"),
            ("alpha", args.alpha), ("beta", args.beta),
            ("occlusion_threshold", args.occlusion_threshold),
            ("points_in", cloud.shape[0]), ("points_projected", projected),
            ("points_kept", len(left_pts)), *outputs)
    return 0


# ---------------------------------------------------------------------------
# depth

def cmd_depth(args) -> int:
    _check_threads(args)
    schedule = VolumeSchedule.parse(args.schedule)
    mode = FeatureMode(args.features)
    weights = None
    if mode is FeatureMode.ENCODER:
        if not args.weights:
            raise ArgumentError("--weights is required for encoder features")
        weights = FusionModelWeights.load(args.weights)

    pair_paths = {
        VolumeKind.FUSION: (args.left, args.right),
        VolumeKind.NIR: (args.nir_left, args.nir_right),
        VolumeKind.RGB: (args.rgb_left, args.rgb_right),
    }
    normalize = not args.no_normalize
    volumes = {}
    for tag in set(schedule.tags):
        lp, rp = pair_paths[tag]
        if lp is None or rp is None:
            raise ArgumentError(f"schedule uses {tag.value} but its image pair "
                                "is missing")
        fl = image_to_features(load_image(lp), mode, weights, normalize)
        fr = image_to_features(load_image(rp), mode, weights, normalize)
        volumes[tag] = correlation_volume(fl, fr, args.max_disp)

    disparity = wta_disparity(volumes, schedule, rounds=args.rounds,
                              subpixel=not args.no_subpixel)
    save_image(args.output, disparity)
    _report(("command", "depth"), ("features", args.features),
            ("schedule", args.schedule), ("max_disp", args.max_disp),
            ("rounds", args.rounds),
            ("normalize", "off" if args.no_normalize else "on"),
            ("subpixel", "off" if args.no_subpixel else "on"),
            ("output", args.output))
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    _check_threads(args)
    pred = load_image(args.pred)
    gt = load_image(args.gt)
    mask = None
    if args.mask:
        mask = load_image(args.mask).plane(0)

    results = [("command", "eval"), ("kind", args.kind),
               ("pred", args.pred), ("gt", args.gt)]
    if args.kind == "depth":
        pred = pred.with_kind(ImageKind.DEPTH)
        gt = gt.with_kind(ImageKind.DEPTH)
        d1, d2, d3 = delta_accuracy(pred, gt, mask)
        results += [("mae", mae(pred, gt, mask)), ("rmse", rmse(pred, gt, mask)),
                    ("delta1", d1), ("delta2", d2), ("delta3", d3)]
    elif args.kind == "disparity":
        u1, u3, u5 = bad_pixel_rates(pred, gt, mask)
        results += [("mae", mae(pred, gt, mask)), ("rmse", rmse(pred, gt, mask)),
                    ("under1px", u1), ("under3px", u3), ("under5px", u5)]
    else:
        cfg = MetricConfig()
        results += [("mae", mae(pred, gt, mask)), ("ssim", ssim(pred, gt, cfg)),
                    ("photometric", photometric_loss(pred, gt, cfg))]

    _report(*results)
    if args.json:
        import json
        payload = {k: v for k, v in results}
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, default=float)
            fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nirfuse",
        description="RGB-NIR fusion, synthetic stereo, projection, and metrics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    fuse = sub.add_parser("fuse", help="fuse an RGB image with an NIR image")
    fuse.add_argument("rgb")
    fuse.add_argument("nir")
    fuse.add_argument("--method", choices=_FUSE_METHODS, default="hsv")
    fuse.add_argument("--alpha", type=float, default=0.5,
                      help="RGB value weight (default 0.5)")
    fuse.add_argument("--beta", type=float, default=0.5,
                      help="NIR weight (default 0.5)")
    fuse.add_argument("--alpha-map", help="per-pixel alpha PFM (hsv-weighted)")
    fuse.add_argument("--beta-map", help="per-pixel beta PFM (hsv-weighted)")
    fuse.add_argument("--weights", help="weight file for the learned method")
    fuse.add_argument("--lambda-tv", type=float, default=0.1)
    fuse.add_argument("--iterations", type=int, default=100)
    fuse.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)
    fuse.add_argument("--output", "-o", required=True)
    _add_threads(fuse)
    fuse.set_defaults(func=cmd_fuse)

    synth = sub.add_parser("synth", help="render a synthetic stereo scene")
    synth.add_argument("scene", help="scene JSON document")
    synth.add_argument("outdir")
    synth.add_argument("--seed", type=int, help="override the sensor seed")
    _add_threads(synth)
    synth.set_defaults(func=cmd_synth)

    lidar = sub.add_parser("lidar", help="project a point cloud to disparity")
    lidar.add_argument("points", help="point cloud (text or binary)")
    lidar.add_argument("camera", help="camera JSON document")
    lidar.add_argument("outdir")
    lidar.add_argument("--refine", action="store_true",
                       help="drop foreground-bleed outliers")
    lidar.add_argument("--alpha", type=float, default=0.75,
                       help="refinement distance scale (default 0.75)")
    lidar.add_argument("--beta", type=float, default=0.85,
                       help="refinement disparity ratio (default 0.85)")
    lidar.add_argument("--occlusion-threshold", type=float, default=1.0)
    _add_threads(lidar)
    lidar.set_defaults(func=cmd_lidar)

    depth = sub.add_parser("depth", help="winner-take-all stereo disparity")
    depth.add_argument("left", help="left image for the fusion volume")
    depth.add_argument("right", help="right image for the fusion volume")
    depth.add_argument("--nir-left")
    depth.add_argument("--nir-right")
    depth.add_argument("--rgb-left")
    depth.add_argument("--rgb-right")
    depth.add_argument("--features", choices=[m.value for m in FeatureMode],
                       default="intensity+grad")
    depth.add_argument("--schedule", default="fusion",
                       help="comma list of volumes per round (default fusion)")
    depth.add_argument("--max-disp", type=int, default=64)
    depth.add_argument("--rounds", type=int, default=1)
    depth.add_argument("--weights", help="weight file for encoder features")
    depth.add_argument("--no-normalize", action="store_true",
                       help="skip per-pixel feature normalization")
    depth.add_argument("--no-subpixel", action="store_true",
                       help="integer argmax without parabolic refinement")
    depth.add_argument("--output", "-o", required=True)
    _add_threads(depth)
    depth.set_defaults(func=cmd_depth)

    ev = sub.add_parser("eval", help="compare a prediction against ground truth")
    ev.add_argument("pred")
    ev.add_argument("gt")
    ev.add_argument("--mask", help="validity mask image (nonzero = valid)")
    ev.add_argument("--kind", choices=("depth", "disparity", "image"),
                    default="disparity")
    ev.add_argument("--json", help="also write the report as JSON")
    _add_threads(ev)
    ev.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ImageIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
