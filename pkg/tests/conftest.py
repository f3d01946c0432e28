"""Shared synthetic-scene oracles and finite-difference helpers.

The plane renderer here is intentionally independent of the package: it
evaluates the pinhole model and a closed-form texture directly, so tests
can cross-check the library's warping, masking, and loss machinery
against it.
"""

import numpy as np
import pytest
import torch

from evdepth.geometry import (
    CameraIntrinsics,
    RigidTransform,
    pose_vector_to_transform,
    reproject_pixels,
)
from evdepth.photometric import (
    PhotometricConfig,
    auto_mask,
    min_reprojection,
    photometric_error,
)


def plane_texture(points_x, points_y, seed, waves=4, freq=0.25, amplitude=0.35):
    """Smooth sinusoid mixture over world plane coordinates, in (0, 1)."""
    rng = np.random.default_rng(seed)
    img = np.zeros_like(points_x)
    for _ in range(waves):
        fx_, fy_ = rng.uniform(-freq, freq, 2)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * (fx_ * points_x + fy_ * points_y) + phase)
    return 0.5 + amplitude * img / (np.abs(img).max() + 1e-12)


def render_plane_view(cam_pos, intr: CameraIntrinsics, plane_point, plane_normal,
                      texture_seed, **texture_kwargs):
    """Ray-cast a textured plane: returns (image (1,H,W), depth (H,W))."""
    ys, xs = np.meshgrid(np.arange(intr.height, dtype=np.float64),
                         np.arange(intr.width, dtype=np.float64), indexing="ij")
    dirs = np.stack([(xs - intr.cx) / intr.fx, (ys - intr.cy) / intr.fy,
                     np.ones_like(xs)], axis=-1)
    n = np.asarray(plane_normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    s = (n @ (np.asarray(plane_point) - np.asarray(cam_pos))) / (dirs @ n)
    pts = np.asarray(cam_pos) + s[..., None] * dirs
    tex = plane_texture(pts[..., 0], pts[..., 1], texture_seed, **texture_kwargs)
    return torch.tensor(tex).unsqueeze(0), torch.tensor(s)


def make_plane_triplet(seed, height=16, width=16, fx=20.0, plane_z=3.0,
                       motion=(0.06, 0.02, 0.0), slant=(0.25, -0.15), **texture_kwargs):
    """Three translated views of a slanted textured plane with ground truth.

    The world frame coincides with the center camera; camera k sits at
    (k - 1) * motion. Returns frames, the center view's depth, transforms
    mapping center-camera points into each source camera, their 6-vector
    parameterizations, and the intrinsics.
    """
    intr = CameraIntrinsics(fx=fx, fy=fx, cx=(width - 1) / 2, cy=(height - 1) / 2,
                            height=height, width=width)
    motion = np.asarray(motion, dtype=np.float64)
    normal = np.array([slant[0], slant[1], 1.0])
    plane_point = np.array([0.0, 0.0, plane_z])

    frames, depths = [], []
    for k in range(3):
        img, depth = render_plane_view((k - 1) * motion, intr, plane_point, normal,
                                       texture_seed=seed, **texture_kwargs)
        frames.append(img)
        depths.append(depth)

    # center-camera points move into camera k by subtracting its position
    vec_prev = torch.tensor(np.concatenate([np.zeros(3), motion]))
    vec_next = torch.tensor(np.concatenate([np.zeros(3), -motion]))
    return {
        "frames": frames,
        "depth": depths[1],
        "pose_prev": pose_vector_to_transform(vec_prev),
        "pose_next": pose_vector_to_transform(vec_next),
        "vec_prev": vec_prev,
        "vec_next": vec_next,
        "intrinsics": intr,
    }


def finite_difference_gradient(fn, x, eps=1e-4):
    """Central differences of a scalar function, component by component."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = fn(x).item()
        flat[i] = orig - eps
        lo = fn(x).item()
        flat[i] = orig
        out[i] = (hi - lo) / (2 * eps)
    return grad


def normwise_relative_error(a, b):
    num = (a - b).norm().item()
    den = max(a.norm().item(), b.norm().item(), 1e-12)
    return num / den


# ---------------------------------------------------------------------------
# Finite differences only measure a derivative where the probed segment is
# smooth. The training loss is piecewise smooth: bilinear sampling kinks
# when a warp coordinate crosses an integer grid line, and the auto-mask
# (a hard comparison) makes it outright discontinuous where the warped and
# identity errors tie. Scenes for gradient checks are therefore scanned
# until (a) every warp coordinate keeps a safety margin to integer grid
# lines larger than any probe displacement, and (b) no per-pixel mask or
# source-argmin decision sits within a probe of its flip point.
# ---------------------------------------------------------------------------

COORD_MARGIN = 2e-3
DECISION_MARGIN = 2.5e-4


def _coords_clear_of_cells(depth, transform, intrinsics, margin):
    coords, _ = reproject_pixels(depth, transform, intrinsics)
    frac = coords - coords.floor()
    return bool(((frac > margin) & (frac < 1.0 - margin)).all())


def make_verified_loss_scene(seed, cfg: PhotometricConfig = None,
                             depth_noise=0.05, pose_noise=0.01):
    """A random plane triplet at which the loss is FD-checkable.

    Starts from ground-truth geometry with seeded perturbations and scans
    candidate seeds until the coordinate and decision margins hold.
    """
    from evdepth.geometry import disparity_to_depth, inverse_warp
    from evdepth.geometry import depth_to_disparity

    cfg = cfg or PhotometricConfig(scales=1)
    for candidate in range(seed * 1000, seed * 1000 + 1000):
        rng = np.random.default_rng(candidate)
        scene = make_plane_triplet(candidate, motion=tuple(rng.uniform(-0.07, 0.07, 3) * [1, 1, 0.2]),
                                   freq=0.12)
        depth = scene["depth"] * (1.0 + depth_noise * torch.tensor(
            rng.uniform(-1, 1, scene["depth"].shape)))
        disparity = depth_to_disparity(depth, 0.1, 100.0).clamp(1e-4, 1 - 1e-4)
        vec_prev = scene["vec_prev"] + pose_noise * torch.tensor(rng.uniform(-1, 1, 6))
        vec_next = scene["vec_next"] + pose_noise * torch.tensor(rng.uniform(-1, 1, 6))

        if _scene_is_fd_checkable(scene, disparity, vec_prev, vec_next, cfg):
            scene.update(disparity=disparity, vec_prev=vec_prev, vec_next=vec_next)
            return scene
    raise AssertionError(f"no FD-checkable scene found from seed {seed}")


def _scene_is_fd_checkable(scene, disparity, vec_prev, vec_next, cfg, eps=1e-4):
    from evdepth.geometry import disparity_to_depth, inverse_warp

    intr = scene["intrinsics"]
    depth = disparity_to_depth(disparity, 0.1, 100.0)

    # (a) warp coordinates clear of cell boundaries for every pose probe
    for vec in (vec_prev, vec_next):
        if not _coords_clear_of_cells(depth, pose_vector_to_transform(vec), intr,
                                      COORD_MARGIN):
            return False
        for comp in range(6):
            for sign in (1.0, -1.0):
                probe = vec.clone()
                probe[comp] += sign * eps
                if not _coords_clear_of_cells(depth, pose_vector_to_transform(probe),
                                              intr, COORD_MARGIN / 2):
                    return False

    # (b) mask and argmin decisions away from their flip points
    prev_f, center_f, next_f = scene["frames"]
    warped_prev, _ = inverse_warp(prev_f, depth, pose_vector_to_transform(vec_prev), intr)
    warped_next, _ = inverse_warp(next_f, depth, pose_vector_to_transform(vec_next), intr)
    pe_prev = photometric_error(center_f, warped_prev, cfg)
    pe_next = photometric_error(center_f, warped_next, cfg)
    pe_id_prev = photometric_error(center_f, prev_f, cfg)
    pe_id_next = photometric_error(center_f, next_f, cfg)
    pe_min, _ = min_reprojection(pe_prev, pe_next)
    pe_id_min, _ = min_reprojection(pe_id_prev, pe_id_next)
    if (pe_prev - pe_next).abs().min() < DECISION_MARGIN:
        return False
    if (pe_min - pe_id_min).abs().min() < DECISION_MARGIN:
        return False
    return True


@pytest.fixture(scope="session")
def torch_float64():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)
