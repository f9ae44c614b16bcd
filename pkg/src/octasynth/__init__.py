"""Synthetic OCTA en-face image generation.

Statistical space-colonization growth of retinal vessel forests, capsule
rasterization into pixel-aligned image/label pairs, and a handcrafted
contrast/noise augmentation pipeline.
"""

from .config import (
    ConfigError,
    FullConfig,
    NoiseSettings,
    PhaseConfig,
    RenderSettings,
    SimulationSettings,
    dvc_defaults,
    load_config,
    svc_defaults,
)
from .growth import epsilon_n, scaled, simulate
from .noise import NoiseParams, apply_noise, blur_by_resampling, random_noise_params
from .raster import LabelDetail, RasterImage, render_label, render_mip, upsample_bilinear
from .spatial import PointIndex
from .vesselgraph import (
    ARTERIAL,
    VENOUS,
    GeometryError,
    VesselForest,
    bifurcation_angles,
    murray_parent_radius,
    remove_random_subtrees,
)

__version__ = "0.1.0"

__all__ = [
    "ARTERIAL",
    "VENOUS",
    "ConfigError",
    "FullConfig",
    "GeometryError",
    "LabelDetail",
    "NoiseParams",
    "NoiseSettings",
    "PhaseConfig",
    "PointIndex",
    "RasterImage",
    "RenderSettings",
    "SimulationSettings",
    "VesselForest",
    "apply_noise",
    "bifurcation_angles",
    "blur_by_resampling",
    "dvc_defaults",
    "epsilon_n",
    "load_config",
    "murray_parent_radius",
    "random_noise_params",
    "remove_random_subtrees",
    "render_label",
    "render_mip",
    "scaled",
    "simulate",
    "svc_defaults",
    "upsample_bilinear",
    "__version__",
]
