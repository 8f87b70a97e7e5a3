"""nirfuse: RGB-NIR image fusion, synthetic stereo rendering, and sparse
LiDAR disparity tools."""

__version__ = "0.1.0"

from .errors import ArgumentError, ImageIOError, NumericError
from .image import Image, ImageKind
from .fileio import load_image, read_pfm, read_png, save_image, write_pfm, write_png
from .color import (
    hsv_to_rgb,
    rgb_to_gray,
    rgb_to_hsv,
    rgb_to_ycbcr,
    ycbcr_to_rgb,
)
from .fusion import (
    AdaptiveParams,
    WeightMaps,
    adaptive_fusion,
    hsv_constant_fusion,
    hsv_weighted_fusion,
    ycbcr_fusion,
)
from .guided import GuidedFilterParams, guided_filter
from .tvfusion import TVFusionParams, tv_bayesian_fusion
from .attnfuse import FusionModelWeights, build_model_tensors, learned_image_fusion
from .lidargeo import (
    CameraModel,
    RefineParams,
    SparseDisparityPoints,
    WarpDirection,
    depth_to_disparity,
    disparity_to_depth,
    left_right_consistency_mask,
    load_camera_json,
    project_points,
    rasterize_points,
    read_point_cloud,
    refine_disparity_points,
    save_camera_json,
    warp_by_disparity,
    write_point_cloud,
)
from .synthgen import (
    Band,
    LightKind,
    LightSource,
    SceneMaps,
    SensorConfig,
    StereoRender,
    load_scene_json,
    normal_from_depth,
    pseudo_nir_albedo,
    render_stereo_scene,
)
from .stereocorr import (
    CorrVolume,
    FeatureMode,
    VolumeKind,
    VolumeSchedule,
    correlation_volume,
    image_to_features,
    wta_disparity,
)
from .metrics import (
    MetricConfig,
    bad_pixel_rates,
    delta_accuracy,
    lidar_neighborhood_error,
    mae,
    photometric_loss,
    rmse,
    ssim,
)

__all__ = [
    "__version__",
    "ArgumentError",
    "ImageIOError",
    "NumericError",
    "Image",
    "ImageKind",
    "load_image",
    "save_image",
    "read_pfm",
    "write_pfm",
    "read_png",
    "write_png",
    "rgb_to_hsv",
    "hsv_to_rgb",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "rgb_to_gray",
    "WeightMaps",
    "AdaptiveParams",
    "hsv_constant_fusion",
    "hsv_weighted_fusion",
    "ycbcr_fusion",
    "adaptive_fusion",
    "GuidedFilterParams",
    "guided_filter",
    "TVFusionParams",
    "tv_bayesian_fusion",
    "FusionModelWeights",
    "build_model_tensors",
    "learned_image_fusion",
    "CameraModel",
    "RefineParams",
    "SparseDisparityPoints",
    "WarpDirection",
    "save_camera_json",
    "load_camera_json",
    "write_point_cloud",
    "read_point_cloud",
    "project_points",
    "refine_disparity_points",
    "rasterize_points",
    "depth_to_disparity",
    "disparity_to_depth",
    "left_right_consistency_mask",
    "warp_by_disparity",
    "Band",
    "LightKind",
    "LightSource",
    "SceneMaps",
    "SensorConfig",
    "StereoRender",
    "normal_from_depth",
    "pseudo_nir_albedo",
    "render_stereo_scene",
    "load_scene_json",
    "CorrVolume",
    "FeatureMode",
    "VolumeKind",
    "VolumeSchedule",
    "image_to_features",
    "correlation_volume",
    "wta_disparity",
    "MetricConfig",
    "mae",
    "rmse",
    "delta_accuracy",
    "bad_pixel_rates",
    "ssim",
    "photometric_loss",
    "lidar_neighborhood_error",
]
