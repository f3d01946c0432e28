"""Depth and pose networks.

The depth network is a residual-18 encoder over the voxel-grid channels
feeding a decoder whose node i fuses the same-level encoder feature, max-
pooled copies of every higher-resolution encoder feature, and the
upsampled deeper decoder node. Sigmoid heads turn decoder nodes into
disparity maps, one per output scale. The pose network is a residual-18
over two channel-concatenated frames with a small convolutional head
emitting a scaled 6-vector (axis-angle, translation).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import resnet18

from .geometry import DepthMap, disparity_to_depth
from .validation import check_multiple_of

ENCODER_CHANNELS = (64, 64, 128, 256, 512)   # features at strides 2, 4, 8, 16, 32
DECODER_CHANNELS = (16, 32, 64, 128, 256)    # node i at stride 2^i


class DepthEncoder(nn.Module):
    """Residual-18 feature hierarchy with a configurable-channel stem."""

    def __init__(self, in_channels: int, pretrained: bool = False):
        super().__init__()
        backbone = resnet18(weights="IMAGENET1K_V1" if pretrained else None)
        # the stem is always rebuilt so the voxel channel count fits
        backbone.conv1 = nn.Conv2d(in_channels, 64, kernel_size=7, stride=2,
                                   padding=3, bias=False)
        nn.init.kaiming_normal_(backbone.conv1.weight, mode="fan_out",
                                nonlinearity="relu")
        self.backbone = backbone
        self.in_channels = in_channels
        self.channels = ENCODER_CHANNELS

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        check_multiple_of(x.shape[-2], x.shape[-1], 32)
        net = self.backbone
        x = net.relu(net.bn1(net.conv1(x)))
        features = [x]
        x = net.layer1(net.maxpool(x))
        features.append(x)
        for layer in (net.layer2, net.layer3, net.layer4):
            x = layer(x)
            features.append(x)
        return features


class ConvElu(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.act = nn.ELU(inplace=True)

    def forward(self, x):
        return self.act(self.conv(x))


class UpsampleBlock(nn.Module):
    """3x3 conv + ELU followed by 2x bilinear upsampling."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = ConvElu(in_channels, out_channels)

    def forward(self, x):
        return F.interpolate(self.conv(x), scale_factor=2, mode="bilinear",
                             align_corners=False)


class DispConv(nn.Module):
    """3x3 conv + sigmoid head producing a disparity map in (0, 1)."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, 1, 3, padding=1)

    def forward(self, x):
        return torch.sigmoid(self.conv(x))


class MultiScaleSkipDecoder(nn.Module):
    """Decoder over five nodes, top-down from the encoder bottleneck.

    Node i > 0 concatenates the stride-2^i encoder feature, every
    higher-resolution encoder feature max-pooled down by 2^(i-k), and the
    upsampled deeper node, then fuses with a 3x3 conv + ELU. Node 0 only
    refines the upsampled node 1. With ``multi_scale_skips=False`` the
    pooled terms are dropped, which is the plain skip-connection baseline.
    """

    def __init__(self, encoder_channels=ENCODER_CHANNELS, scales: int = 4,
                 multi_scale_skips: bool = True):
        super().__init__()
        if not 1 <= scales <= 4:
            raise ValueError(f"scales must be in [1, 4], got {scales}")
        self.scales = scales
        self.multi_scale_skips = multi_scale_skips
        self.encoder_channels = tuple(encoder_channels)
        self.decoder_channels = DECODER_CHANNELS

        self.upsample = nn.ModuleDict()
        self.fuse = nn.ModuleDict()
        for i in range(4, -1, -1):
            up_in = self.encoder_channels[4] if i == 4 else self.decoder_channels[i + 1]
            up_out = self.decoder_channels[min(i + 1, 4)]
            self.upsample[str(i)] = UpsampleBlock(up_in, up_out)
            fuse_in = self.expected_concat_channels(i)
            self.fuse[str(i)] = ConvElu(fuse_in, self.decoder_channels[i])

        self.disp_heads = nn.ModuleList(
            DispConv(self.decoder_channels[j]) for j in range(scales))

        for i in range(4, -1, -1):
            built = self.fuse[str(i)].conv.in_channels
            if built != self.expected_concat_channels(i):
                raise AssertionError(f"node {i} fuse conv expects {built} channels, "
                                     f"wiring says {self.expected_concat_channels(i)}")

    def expected_concat_channels(self, node: int) -> int:
        """Input width of node ``node``'s fusion conv under the wiring rule."""
        up_out = self.decoder_channels[min(node + 1, 4)]
        if node == 0:
            return up_out
        total = self.encoder_channels[node - 1] + up_out  # same-level feature + upsampled node
        if self.multi_scale_skips:
            total += sum(self.encoder_channels[k - 1] for k in range(1, node))
        return total

    def forward(self, features: list[torch.Tensor]):
        nodes = [None] * 5
        x = features[4]  # bottleneck aliases the deepest encoder feature
        for i in range(4, 0, -1):
            up = self.upsample[str(i)](x)
            parts = [features[i - 1]]
            if self.multi_scale_skips:
                for k in range(1, i):
                    factor = 2 ** (i - k)
                    parts.append(F.max_pool2d(features[k - 1], kernel_size=factor,
                                              stride=factor))
            parts.append(up)
            ref = parts[0].shape[-2:]
            for part in parts[1:]:
                if part.shape[-2:] != ref:
                    raise ValueError(f"decoder node {i}: operand size {tuple(part.shape[-2:])} "
                                     f"does not match {tuple(ref)}")
            x = self.fuse[str(i)](torch.cat(parts, dim=1))
            nodes[i] = x
        nodes[0] = self.fuse["0"](self.upsample["0"](x))

        disparities = [self.disp_heads[j](nodes[j]) for j in range(self.scales)]
        return nodes, disparities


class DepthNet(nn.Module):
    """Voxel grid in, sigmoid disparity pyramid out."""

    def __init__(self, in_channels: int = 5, scales: int = 4,
                 multi_scale_skips: bool = True, pretrained: bool = False):
        super().__init__()
        self.encoder = DepthEncoder(in_channels, pretrained=pretrained)
        self.decoder = MultiScaleSkipDecoder(self.encoder.channels, scales,
                                             multi_scale_skips)
        self.scales = scales

    def forward(self, voxel: torch.Tensor) -> list[torch.Tensor]:
        _, disparities = self.decoder(self.encoder(voxel))
        return disparities

    def forward_depth(self, voxel: torch.Tensor, d_min: float, d_max: float):
        """Disparity pyramid plus full-resolution depth (scale-0 head)."""
        disparities = self.forward(voxel)
        depth = disparity_to_depth(disparities[0].squeeze(1), d_min, d_max)
        return disparities, DepthMap(depth, d_min, d_max)


class PoseNet(nn.Module):
    """Relative pose (a -> b) from two channel-concatenated frames."""

    def __init__(self, in_channels: int = 1):
        super().__init__()
        backbone = resnet18(weights=None)
        backbone.conv1 = nn.Conv2d(2 * in_channels, 64, kernel_size=7, stride=2,
                                   padding=3, bias=False)
        nn.init.kaiming_normal_(backbone.conv1.weight, mode="fan_out",
                                nonlinearity="relu")
        self.backbone = backbone
        self.in_channels = in_channels
        self.head = nn.Sequential(
            nn.Conv2d(512, 256, 1), nn.ReLU(inplace=True),
            nn.Conv2d(256, 256, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(256, 256, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(256, 6, 1),
        )

    def forward(self, frame_a: torch.Tensor, frame_b: torch.Tensor) -> torch.Tensor:
        if frame_a.shape != frame_b.shape:
            raise ValueError(f"pose inputs must match, got {tuple(frame_a.shape)} vs "
                             f"{tuple(frame_b.shape)}")
        squeeze = frame_a.ndim == 3
        if squeeze:
            frame_a, frame_b = frame_a.unsqueeze(0), frame_b.unsqueeze(0)
        x = torch.cat([frame_a, frame_b], dim=1)
        net = self.backbone
        x = net.relu(net.bn1(net.conv1(x)))
        x = net.layer1(net.maxpool(x))
        x = net.layer4(net.layer3(net.layer2(x)))
        vec = 0.01 * self.head(x).mean(dim=(2, 3))
        return vec.squeeze(0) if squeeze else vec


# ---------------------------------------------------------------------------
# Checkpoints: a single archive of named parameter arrays plus a manifest
# describing the architecture, scale count, depth range, and training step.
# A JSON copy of the manifest is written next to the archive.
# ---------------------------------------------------------------------------

def save_checkpoint(path, depth_net: DepthNet, pose_net: PoseNet, manifest: dict,
                    optimizer=None, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "manifest": dict(manifest),
        "depth_net": depth_net.state_dict(),
        "pose_net": pose_net.state_dict() if pose_net is not None else None,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)  # atomic on POSIX
    path.with_suffix(".json").write_text(json.dumps(payload["manifest"], indent=2) + "\n")


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return torch.load(path, map_location="cpu", weights_only=False)


def build_from_manifest(manifest: dict) -> tuple[DepthNet, PoseNet]:
    depth_net = DepthNet(
        in_channels=int(manifest["num_bins"]),
        scales=int(manifest["scales"]),
        multi_scale_skips=bool(manifest.get("multi_scale_skips", True)),
    )
    pose_net = PoseNet(in_channels=int(manifest["pose_channels"]))
    return depth_net, pose_net


def restore_networks(payload: dict) -> tuple[DepthNet, PoseNet, dict]:
    depth_net, pose_net = build_from_manifest(payload["manifest"])
    depth_net.load_state_dict(payload["depth_net"])
    if payload.get("pose_net") is not None:
        pose_net.load_state_dict(payload["pose_net"])
    depth_net.eval()
    pose_net.eval()
    return depth_net, pose_net, payload["manifest"]
