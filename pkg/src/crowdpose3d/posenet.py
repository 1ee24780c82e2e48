"""3D pose head: 1x1 conv to a volumetric heatmap, soft-argmax decoding.

The volume stores per-joint logits over (depth, row, col); a softmax across
all D*h*w cells turns it into a probability volume whose expectations give
x, y in crop pixels (cell centers at (i + 0.5) * stride) and z as
root-relative millimeters spread over [-depth_range, depth_range]. Per-joint
confidence is the peak of the normalized volume.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class PoseNet3D(nn.Module):
    """1x1 convolution from F' to a J_c x D x h x w logit volume."""

    def __init__(self, in_channels: int, num_joints: int, depth_bins: int):
        super().__init__()
        self.num_joints = num_joints
        self.depth_bins = depth_bins
        self.conv = nn.Conv2d(in_channels, num_joints * depth_bins, kernel_size=1)

    def forward(self, fprime: torch.Tensor) -> torch.Tensor:
        b, _, h, w = fprime.shape
        return self.conv(fprime).reshape(b, self.num_joints, self.depth_bins, h, w)


def normalize_volume(volume: torch.Tensor) -> torch.Tensor:
    """Per-joint softmax over all D*h*w cells."""
    b, j, d, h, w = volume.shape
    flat = volume.reshape(b, j, -1)
    return torch.softmax(flat, dim=-1).reshape(b, j, d, h, w)


def soft_argmax3d(volume: torch.Tensor, stride: int,
                  depth_range: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Decode a logit volume to coordinates and confidences.

    Returns (coords (B, J, 3), confidence (B, J)); x, y in crop pixels, z in
    millimeters. Differentiable; invariant to per-joint logit shifts.
    """
    if volume.dim() == 4:  # allow unbatched volumes
        coords, conf = soft_argmax3d(volume[None], stride, depth_range)
        return coords[0], conf[0]
    b, j, d, h, w = volume.shape
    prob = normalize_volume(volume)

    p_d = prob.sum(dim=(3, 4))  # (B, J, D)
    p_y = prob.sum(dim=(2, 4))  # (B, J, h)
    p_x = prob.sum(dim=(2, 3))  # (B, J, w)

    idx = lambda n: torch.arange(n, dtype=volume.dtype, device=volume.device)
    x = (p_x @ idx(w) + 0.5) * stride
    y = (p_y @ idx(h) + 0.5) * stride
    z = ((p_d @ idx(d)) / (d - 1) - 0.5) * 2.0 * depth_range
    conf = prob.reshape(b, j, -1).max(dim=-1).values
    return torch.stack([x, y, z], dim=-1), conf
