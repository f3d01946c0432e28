"""Self-supervised monocular depth estimation from event cameras.

The depth network consumes spatiotemporal voxel grids built from raw
events; training is supervised by photometric consistency between the
intensity frames pixel-aligned with those events, so no ground-truth
depth is needed. At inference only events are used.
"""

__version__ = "0.1.0"

from .events import EventWindow, VoxelGrid, density, slice_windows, voxelize
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    bilinear_sample,
    disparity_to_depth,
    inverse_warp,
    pose_vector_to_transform,
    reproject_pixels,
)
from .photometric import (
    LossBreakdown,
    PhotometricConfig,
    auto_mask,
    min_reprojection,
    photometric_error,
    ssim,
    total_loss,
)
from .estimator import EventDepthEstimator, EventVoxelizer

__all__ = [
    "CameraIntrinsics",
    "EventDepthEstimator",
    "EventVoxelizer",
    "EventWindow",
    "LossBreakdown",
    "PhotometricConfig",
    "RigidTransform",
    "VoxelGrid",
    "auto_mask",
    "bilinear_sample",
    "density",
    "disparity_to_depth",
    "inverse_warp",
    "min_reprojection",
    "photometric_error",
    "pose_vector_to_transform",
    "reproject_pixels",
    "slice_windows",
    "ssim",
    "total_loss",
    "voxelize",
]
