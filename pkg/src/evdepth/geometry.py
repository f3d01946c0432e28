"""Pinhole camera model, rigid transforms, and differentiable inverse warping.

Conventions: pixel coordinates are (x right, y down) with the origin at
the center of the top-left pixel; camera frames are right-handed with z
forward. A transform ``T_a_to_b`` maps points expressed in camera a's
frame into camera b's frame. All tensor operations are differentiable and
accept an optional leading batch dimension.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels, tied to an image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    height: int
    width: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def resized(self, height: int, width: int) -> "CameraIntrinsics":
        """Intrinsics after resampling the image to a new size."""
        sx, sy = width / self.width, height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx,
                                self.cy * sy, height, width)

    def padded(self, top: int, bottom: int, left: int, right: int) -> "CameraIntrinsics":
        """Intrinsics after zero-padding; the principal point shifts by the
        top/left pad amounts."""
        return CameraIntrinsics(self.fx, self.fy, self.cx + left, self.cy + top,
                                self.height + top + bottom, self.width + left + right)

    def cropped(self, top: int, left: int, height: int, width: int) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fx, self.fy, self.cx - left, self.cy - top,
                                height, width)

    def flipped_x(self) -> "CameraIntrinsics":
        return replace(self, cx=self.width - 1 - self.cx)

    def to_json_file(self, path) -> None:
        payload = {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                   "width": self.width, "height": self.height}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def from_json_file(cls, path) -> "CameraIntrinsics":
        payload = json.loads(Path(path).read_text())
        return cls(fx=float(payload["fx"]), fy=float(payload["fy"]),
                   cx=float(payload["cx"]), cy=float(payload["cy"]),
                   height=int(payload["height"]), width=int(payload["width"]))


@dataclass
class RigidTransform:
    """SE(3) transform with rotation (..., 3, 3) and translation (..., 3)."""

    rotation: torch.Tensor
    translation: torch.Tensor

    @classmethod
    def identity(cls, dtype=torch.float32, device=None) -> "RigidTransform":
        return cls(torch.eye(3, dtype=dtype, device=device),
                   torch.zeros(3, dtype=dtype, device=device))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform applying ``other`` first, then ``self``."""
        rotation = self.rotation @ other.rotation
        translation = (self.rotation @ other.translation.unsqueeze(-1)).squeeze(-1) \
            + self.translation
        return RigidTransform(rotation, translation)

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.transpose(-1, -2)
        return RigidTransform(rot_t, -(rot_t @ self.translation.unsqueeze(-1)).squeeze(-1))

    def apply(self, points: torch.Tensor) -> torch.Tensor:
        """Apply to points of shape (..., 3)."""
        return (self.rotation @ points.unsqueeze(-1)).squeeze(-1) + self.translation

    def matrix(self) -> torch.Tensor:
        shape = self.rotation.shape[:-2]
        mat = torch.zeros(*shape, 4, 4, dtype=self.rotation.dtype,
                          device=self.rotation.device)
        mat[..., :3, :3] = self.rotation
        mat[..., :3, 3] = self.translation
        mat[..., 3, 3] = 1.0
        return mat

    def validate(self, tol: float = 1e-5) -> None:
        eye = torch.eye(3, dtype=self.rotation.dtype, device=self.rotation.device)
        gram = self.rotation.transpose(-1, -2) @ self.rotation
        if (gram - eye).abs().max().item() > tol:
            raise ValueError("rotation is not orthonormal")
        if (torch.linalg.det(self.rotation) - 1.0).abs().max().item() > tol:
            raise ValueError("rotation determinant is not +1")


@dataclass
class DepthMap:
    """Per-pixel depth with its valid range."""

    values: torch.Tensor
    d_min: float
    d_max: float

    def validate(self) -> None:
        lo, hi = self.values.min().item(), self.values.max().item()
        if lo < self.d_min - 1e-6 or hi > self.d_max + 1e-6:
            raise ValueError(
                f"depth range [{lo:g}, {hi:g}] escapes [{self.d_min:g}, {self.d_max:g}]"
            )


def _depth_values(depth) -> torch.Tensor:
    return depth.values if isinstance(depth, DepthMap) else depth


def _intrinsics_fields(intrinsics, dtype, device):
    """fx, fy, cx, cy as tensors broadcastable over (B, H, W)."""
    if isinstance(intrinsics, CameraIntrinsics):
        vals = torch.tensor([intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy],
                            dtype=dtype, device=device)
        return vals[0], vals[1], vals[2], vals[3]
    vals = torch.as_tensor(intrinsics, dtype=dtype, device=device)
    if vals.ndim == 1:
        return vals[0], vals[1], vals[2], vals[3]
    if vals.ndim == 2 and vals.shape[1] == 4:  # per-sample (B, 4)
        cols = vals.unsqueeze(-1).unsqueeze(-1)  # (B, 4, 1, 1)
        return cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3]
    raise ValueError(f"intrinsics must be CameraIntrinsics, (4,) or (B, 4), got {vals.shape}")


def disparity_to_depth(sigma, d_min: float, d_max: float):
    """Map sigmoid disparity in [0, 1] to depth in [d_min, d_max].

    Depth is 1 / (a * sigma + b) with a = 1/d_min - 1/d_max and b = 1/d_max,
    so sigma = 0 gives d_max and sigma = 1 gives d_min.
    """
    if not 0 < d_min < d_max:
        raise ValueError(f"need 0 < d_min < d_max, got ({d_min}, {d_max})")
    sigma = torch.as_tensor(sigma)
    lo, hi = sigma.min().item(), sigma.max().item()
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"disparity must lie in [0, 1], got range [{lo:g}, {hi:g}]")
    a = 1.0 / d_min - 1.0 / d_max
    b = 1.0 / d_max
    return 1.0 / (a * sigma + b)


def depth_to_disparity(depth, d_min: float, d_max: float):
    """Analytic inverse of :func:`disparity_to_depth`."""
    a = 1.0 / d_min - 1.0 / d_max
    b = 1.0 / d_max
    return (1.0 / _depth_values(depth) - b) / a


def pixel_coordinate_grid(height: int, width: int, dtype=torch.float32, device=None):
    """(H, W, 2) grid of (x, y) pixel-center coordinates."""
    ys = torch.arange(height, dtype=dtype, device=device)
    xs = torch.arange(width, dtype=dtype, device=device)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy], dim=-1)


def reproject_pixels(depth, transform: RigidTransform, intrinsics):
    """Project each target pixel into the source view.

    Backprojects pixels with their depth, applies the rigid transform, and
    projects with the same intrinsics. Returns continuous source
    coordinates of shape (..., H, W, 2) and a validity mask that is False
    where the transformed point has non-positive depth.
    """
    values = _depth_values(depth)
    squeeze = values.ndim == 2
    if squeeze:
        values = values.unsqueeze(0)
    if values.ndim == 4:  # (B, 1, H, W)
        values = values.squeeze(1)
    batch, height, width = values.shape
    dtype, device = values.dtype, values.device

    fx, fy, cx, cy = _intrinsics_fields(intrinsics, dtype, device)
    grid = pixel_coordinate_grid(height, width, dtype, device)
    x_cam = (grid[..., 0] - cx) / fx * values
    y_cam = (grid[..., 1] - cy) / fy * values
    points = torch.stack([x_cam, y_cam, values], dim=-1)  # (B, H, W, 3)

    rot = transform.rotation
    if rot.ndim == 2:
        rot = rot.unsqueeze(0)
    trans = transform.translation
    if trans.ndim == 1:
        trans = trans.unsqueeze(0)
    moved = torch.einsum("bij,bhwj->bhwi", rot.to(dtype), points) \
        + trans.to(dtype)[:, None, None, :]

    z = moved[..., 2]
    valid = z > 0
    z_safe = torch.where(valid, z, torch.ones_like(z))
    u = fx * moved[..., 0] / z_safe + cx
    v = fy * moved[..., 1] / z_safe + cy
    coords = torch.stack([u, v], dim=-1)
    if squeeze:
        return coords.squeeze(0), valid.squeeze(0)
    return coords, valid


def bilinear_sample(image: torch.Tensor, coords: torch.Tensor, valid=None):
    """Sample an image at continuous pixel coordinates.

    Uses bilinear interpolation of the four neighbours with border
    clamping; samples that fall outside the image are still produced (from
    the clamped border) but reported as False in the returned mask.
    Differentiable with respect to both the image and the coordinates.

    image: (C, H, W) or (B, C, H, W); coords: matching (H, W, 2) or
    (B, H, W, 2). Returns (sampled image, in-bounds mask).
    """
    squeeze = image.ndim == 3
    if squeeze:
        image = image.unsqueeze(0)
        coords = coords.unsqueeze(0)
    batch, channels, height, width = image.shape
    if coords.shape[0] != batch or coords.shape[-1] != 2:
        raise ValueError(f"coords shape {tuple(coords.shape)} does not match image "
                         f"{tuple(image.shape)}")

    x = coords[..., 0]
    y = coords[..., 1]
    in_bounds = (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)
    if valid is not None:
        in_bounds = in_bounds & valid

    x = x.clamp(0, width - 1)
    y = y.clamp(0, height - 1)
    x0 = x.floor().clamp(0, width - 2)
    y0 = y.floor().clamp(0, height - 2)
    wx = x - x0
    wy = y - y0
    ix0, iy0 = x0.long(), y0.long()

    flat = image.reshape(batch, channels, height * width)

    def gather(iy, ix):
        idx = (iy * width + ix).reshape(batch, 1, -1).expand(-1, channels, -1)
        return flat.gather(2, idx).reshape(batch, channels, *x.shape[1:])

    wx = wx.unsqueeze(1)
    wy = wy.unsqueeze(1)
    out = (gather(iy0, ix0) * (1 - wx) * (1 - wy)
           + gather(iy0, ix0 + 1) * wx * (1 - wy)
           + gather(iy0 + 1, ix0) * (1 - wx) * wy
           + gather(iy0 + 1, ix0 + 1) * wx * wy)
    if squeeze:
        return out.squeeze(0), in_bounds.squeeze(0)
    return out, in_bounds


def inverse_warp(source: torch.Tensor, depth, transform: RigidTransform, intrinsics):
    """Synthesize the target view by sampling the source frame.

    Source pixels are looked up at the coordinates obtained by
    reprojecting each target pixel with its depth and the relative
    transform. Returns the synthesized frame and a validity mask that is
    False out of frustum or out of bounds.
    """
    coords, valid = reproject_pixels(depth, transform, intrinsics)
    return bilinear_sample(source, coords, valid=valid)


def _hat(r: torch.Tensor) -> torch.Tensor:
    """Skew-symmetric matrix of (..., 3) vectors."""
    zero = torch.zeros_like(r[..., 0])
    rows = [
        torch.stack([zero, -r[..., 2], r[..., 1]], dim=-1),
        torch.stack([r[..., 2], zero, -r[..., 0]], dim=-1),
        torch.stack([-r[..., 1], r[..., 0], zero], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def pose_vector_to_transform(vec, invert: bool = False) -> RigidTransform:
    """Exponentiate a 6-vector (axis-angle, translation) to a transform.

    The rotation uses the Rodrigues formula with a series fallback near
    zero angle so gradients stay finite. ``invert`` returns the transform
    for the reverse direction, (R^T, -R^T t).
    """
    vec = torch.as_tensor(vec)
    rot_vec = vec[..., :3]
    trans = vec[..., 3:]

    theta_sq = (rot_vec * rot_vec).sum(dim=-1)
    theta = torch.sqrt(theta_sq.clamp(min=1e-30))
    small = theta < 1e-4
    theta_safe = torch.where(small, torch.ones_like(theta), theta)
    # sin(t)/t and (1-cos(t))/t^2, with Taylor fallbacks near zero
    sin_term = torch.where(small, 1.0 - theta_sq / 6.0,
                           torch.sin(theta_safe) / theta_safe)
    cos_term = torch.where(small, 0.5 - theta_sq / 24.0,
                           (1.0 - torch.cos(theta_safe)) / theta_safe.pow(2))

    hat = _hat(rot_vec)
    eye = torch.eye(3, dtype=vec.dtype, device=vec.device)
    eye = eye.expand(*vec.shape[:-1], 3, 3)
    rotation = eye + sin_term[..., None, None] * hat \
        + cos_term[..., None, None] * (hat @ hat)

    transform = RigidTransform(rotation, trans)
    return transform.inverse() if invert else transform
