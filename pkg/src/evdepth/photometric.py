"""Cross-modal photometric supervision.

The training signal compares the intensity frame aligned with an event
window against reconstructions of it warped from the two neighbouring
frames: a structural-similarity/L1 error per pixel, a per-pixel minimum
over the two source frames to tolerate occlusion, and a binary mask that
drops pixels where not warping at all already explains the frame (static
camera, low texture). The masked error is averaged over all pixels and
over the disparity scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .geometry import disparity_to_depth, inverse_warp, pose_vector_to_transform  # noqa: F401
from .geometry import RigidTransform
from .validation import check_same_shape


@dataclass(frozen=True)
class PhotometricConfig:
    """Mixing weight, SSIM window geometry, and scale count for the loss."""

    alpha: float = 0.85
    ssim_window: int = 3
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2
    scales: int = 4
    smoothness_weight: float = 0.0  # optional extra term, off by default

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.ssim_window % 2 != 1 or self.ssim_window < 1:
            raise ValueError(f"ssim_window must be odd and positive, got {self.ssim_window}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("SSIM stabilizers must be positive")
        if self.scales < 1:
            raise ValueError(f"scales must be >= 1, got {self.scales}")


@dataclass
class LossBreakdown:
    """Total training loss with its per-scale terms and mask statistics."""

    total: torch.Tensor
    per_scale: list = field(default_factory=list)
    mask_fraction: float = 0.0

    def item(self) -> float:
        return float(self.total.detach())


def _as_batched(image: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if image.ndim == 3:
        return image.unsqueeze(0), True
    if image.ndim == 4:
        return image, False
    raise ValueError(f"expected (C, H, W) or (B, C, H, W) image, got {tuple(image.shape)}")


def _box_filter(x: torch.Tensor, window: int) -> torch.Tensor:
    pad = window // 2
    x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    return F.avg_pool2d(x, window, stride=1)


def ssim(a: torch.Tensor, b: torch.Tensor, window: int = 3,
         c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> torch.Tensor:
    """Per-pixel structural similarity of two images in [0, 1].

    Local statistics come from box filtering over ``window`` x ``window``
    neighbourhoods with reflect padding. Multi-channel inputs are averaged
    over channels; the result lies in [-1, 1] and drops the channel axis.
    """
    check_same_shape(a, b, "ssim inputs")
    a, squeeze = _as_batched(a)
    b, _ = _as_batched(b)

    mu_a = _box_filter(a, window)
    mu_b = _box_filter(b, window)
    var_a = _box_filter(a * a, window) - mu_a * mu_a
    var_b = _box_filter(b * b, window) - mu_b * mu_b
    cov = _box_filter(a * b, window) - mu_a * mu_b

    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / \
        ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
    score = score.mean(dim=1)
    return score.squeeze(0) if squeeze else score


def photometric_error(target: torch.Tensor, synthesized: torch.Tensor,
                      cfg: PhotometricConfig = PhotometricConfig()) -> torch.Tensor:
    """Blend of structural dissimilarity and L1 difference, per pixel.

    alpha/2 * (1 - SSIM) + (1 - alpha) * |target - synthesized|, with the
    L1 term averaged over channels. Nonnegative; zero iff the images match.
    """
    check_same_shape(target, synthesized, "photometric inputs")
    target_b, squeeze = _as_batched(target)
    synth_b, _ = _as_batched(synthesized)
    l1 = (target_b - synth_b).abs().mean(dim=1)
    structural = ssim(target_b, synth_b, cfg.ssim_window, cfg.c1, cfg.c2)
    pe = cfg.alpha / 2.0 * (1.0 - structural) + (1.0 - cfg.alpha) * l1
    return pe.squeeze(0) if squeeze else pe


def min_reprojection(pe_prev: torch.Tensor, pe_next: torch.Tensor):
    """Per-pixel minimum over the two source-frame errors.

    Returns the minimum map and an argmin map (0 = previous frame,
    1 = next frame); ties resolve to the previous frame.
    """
    check_same_shape(pe_prev, pe_next, "reprojection error maps")
    take_next = pe_next < pe_prev
    minimum = torch.where(take_next, pe_next, pe_prev)
    return minimum, take_next.to(pe_prev.dtype)


def auto_mask(pe_warped_min: torch.Tensor, pe_identity_min: torch.Tensor) -> torch.Tensor:
    """Keep pixels where warping strictly beats the unwarped source frames."""
    check_same_shape(pe_warped_min, pe_identity_min, "auto-mask inputs")
    return (pe_warped_min < pe_identity_min).to(pe_warped_min.dtype)


def disparity_smoothness(disparity: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
    """Edge-aware first-order smoothness of mean-normalized disparity."""
    disp = disparity / (disparity.mean(dim=(-2, -1), keepdim=True) + 1e-7)
    grad_x = (disp[..., :, :-1] - disp[..., :, 1:]).abs()
    grad_y = (disp[..., :-1, :] - disp[..., 1:, :]).abs()
    img_gx = (image[..., :, :-1] - image[..., :, 1:]).abs().mean(dim=-3, keepdim=True)
    img_gy = (image[..., :-1, :] - image[..., 1:, :]).abs().mean(dim=-3, keepdim=True)
    grad_x = grad_x * torch.exp(-img_gx)
    grad_y = grad_y * torch.exp(-img_gy)
    return grad_x.mean() + grad_y.mean()


def total_loss(disparities, frames, poses, intrinsics,
               cfg: PhotometricConfig = PhotometricConfig(),
               d_min: float = 0.1, d_max: float = 100.0) -> LossBreakdown:
    """Masked minimum-reprojection loss averaged over pixels and scales.

    disparities: one sigmoid disparity map per scale, scale j at 1/2^j of
    the input resolution (shape (B, 1, h, w) or (h, w)). frames: the
    (previous, center, next) intensity frames. poses: transforms mapping
    center-frame camera coordinates into the previous and next cameras.
    Every scale is bilinearly upsampled to full resolution before the
    photometric terms are evaluated. Masked-out pixels contribute zero to
    the numerator while the denominator stays the full pixel count.
    """
    if len(disparities) != cfg.scales:
        raise ValueError(f"got {len(disparities)} disparity scales, config says {cfg.scales}")
    frame_prev, frame_center, frame_next = frames
    pose_prev, pose_next = poses

    target, squeeze = _as_batched(frame_center)
    prev_b, _ = _as_batched(frame_prev)
    next_b, _ = _as_batched(frame_next)
    height, width = target.shape[-2:]

    pe_identity_prev = photometric_error(target, prev_b, cfg)
    pe_identity_next = photometric_error(target, next_b, cfg)
    pe_identity_min, _ = min_reprojection(pe_identity_prev, pe_identity_next)

    per_scale = []
    mask_fractions = []
    for disp in disparities:
        if disp.ndim == 2:
            disp = disp.unsqueeze(0)
        if disp.ndim == 3:
            disp = disp.unsqueeze(1)  # (B, 1, h, w)
        if disp.shape[-2:] != (height, width):
            disp = F.interpolate(disp, size=(height, width), mode="bilinear",
                                 align_corners=False)
        depth = disparity_to_depth(disp.squeeze(1), d_min, d_max)

        warped_prev, _ = inverse_warp(prev_b, depth, pose_prev, intrinsics)
        warped_next, _ = inverse_warp(next_b, depth, pose_next, intrinsics)
        pe_prev = photometric_error(target, warped_prev, cfg)
        pe_next = photometric_error(target, warped_next, cfg)
        pe_min, _ = min_reprojection(pe_prev, pe_next)

        mask = auto_mask(pe_min, pe_identity_min)
        scale_loss = (mask * pe_min).mean()
        if cfg.smoothness_weight > 0:
            scale_loss = scale_loss + cfg.smoothness_weight * \
                disparity_smoothness(disp, target)
        per_scale.append(scale_loss)
        mask_fractions.append(mask.mean().item())

    total = torch.stack(per_scale).mean()
    return LossBreakdown(total=total, per_scale=per_scale,
                         mask_fraction=float(sum(mask_fractions) / len(mask_fractions)))
