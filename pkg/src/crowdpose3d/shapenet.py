"""Body-parameter head: joint-level feature sampling, graph regressor, camera.

The joint-based regressor samples F' at the (x, y) of each predicted 3D
joint, concatenates position and confidence into per-joint feature rows,
runs the joint-specific graph network, and regresses global rotation and
pose angles from the flattened hidden features. Shape and camera come from
spatially averaged F'. An HMR-style alternative (everything from pooled F')
is kept for ablations.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .graph import GraphNetwork, SkeletonGraph


def sample_joint_features(fmap: torch.Tensor, xy: torch.Tensor, stride: int) -> torch.Tensor:
    """Bilinear samples of fmap (B, C, h, w) at crop-pixel positions xy (B, J, 2).

    Feature cell (r, c) is centered at crop pixel ((c + 0.5) * stride,
    (r + 0.5) * stride); out-of-bounds positions clamp to the border.
    Differentiable w.r.t. both the feature map and the positions.
    """
    b, c, h, w = fmap.shape
    fx = (xy[..., 0] / stride - 0.5).clamp(0.0, w - 1.0)
    fy = (xy[..., 1] / stride - 0.5).clamp(0.0, h - 1.0)
    x0 = fx.floor().clamp(0, w - 2).long() if w > 1 else fx.long() * 0
    y0 = fy.floor().clamp(0, h - 2).long() if h > 1 else fy.long() * 0
    wx = (fx - x0).unsqueeze(-1)
    wy = (fy - y0).unsqueeze(-1)

    flat = fmap.reshape(b, c, h * w).transpose(1, 2)  # (B, h*w, C)
    batch = torch.arange(b, device=fmap.device)[:, None]

    def fetch(yi, xi):
        return flat[batch, yi * w + xi]  # (B, J, C)

    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)
    top = fetch(y0, x0) * (1 - wx) + fetch(y0, x1) * wx
    bot = fetch(y1, x0) * (1 - wx) + fetch(y1, x1) * wx
    return top * (1 - wy) + bot * wy


def assemble_fs(sampled: torch.Tensor, coords: torch.Tensor, confidence: torch.Tensor,
                crop_size: float, depth_range: float, normalize: bool = True) -> torch.Tensor:
    """Per-joint rows [sampled | x y z | confidence], (B, J, C' + 3 + 1).

    With normalize=True, x and y are divided by the crop size and z by the
    depth range to condition the graph-network inputs.
    """
    if normalize:
        scale = coords.new_tensor([crop_size, crop_size, depth_range])
        coords = coords / scale
    return torch.cat([sampled, coords, confidence.unsqueeze(-1)], dim=-1)


class ShapeNet(nn.Module):
    """Graph regressor for (theta_g, theta) plus pooled heads for (beta, k)."""

    def __init__(self, graph: SkeletonGraph, feat_channels: int, graph_channels: int,
                 k_pose: int, num_betas: int = 10, num_residual: int = 4):
        super().__init__()
        j_c = graph.num_vertices
        self.graph_net = GraphNetwork(graph, feat_channels + 4, graph_channels, num_residual)
        self.head_theta_g = nn.Linear(j_c * graph_channels, 3)
        self.head_theta = nn.Linear(j_c * graph_channels, k_pose * 3)
        self.head_beta = nn.Linear(feat_channels, num_betas)
        self.head_cam = nn.Linear(feat_channels, 3)
        self.k_pose = k_pose
        for head in (self.head_theta_g, self.head_theta, self.head_beta, self.head_cam):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def regress_pose_params(self, hidden: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Flattened hidden features -> (theta_g (B, 3), theta (B, K_pose, 3))."""
        flat = hidden.reshape(hidden.shape[0], -1)
        theta_g = self.head_theta_g(flat)
        theta = self.head_theta(flat).reshape(-1, self.k_pose, 3)
        return theta_g, theta

    def regress_shape_cam(self, fprime: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Spatial average of F' -> (beta (B, 10), k (B, 3)); k scale kept positive."""
        pooled = fprime.mean(dim=(2, 3))
        beta = self.head_beta(pooled)
        cam = self.head_cam(pooled)
        scale = nn.functional.softplus(cam[:, :1])
        return beta, torch.cat([scale, cam[:, 1:]], dim=1)

    def forward(self, fs: torch.Tensor, fprime: torch.Tensor):
        hidden = self.graph_net(fs)
        theta_g, theta = self.regress_pose_params(hidden)
        beta, cam = self.regress_shape_cam(fprime)
        return theta_g, theta, beta, cam


class HMRStyleHead(nn.Module):
    """Ablation regressor: all parameters from globally pooled F' via an MLP."""

    def __init__(self, feat_channels: int, k_pose: int, num_betas: int = 10,
                 hidden: int = 256):
        super().__init__()
        self.k_pose = k_pose
        self.num_betas = num_betas
        out_dim = 3 + k_pose * 3 + num_betas + 3
        self.mlp = nn.Sequential(
            nn.Linear(feat_channels, hidden), nn.ReLU(inplace=True),
            nn.Linear(hidden, hidden), nn.ReLU(inplace=True),
        )
        self.head = nn.Linear(hidden, out_dim)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, fprime: torch.Tensor):
        pooled = fprime.mean(dim=(2, 3))
        out = self.head(self.mlp(pooled))
        theta_g = out[:, :3]
        theta = out[:, 3:3 + self.k_pose * 3].reshape(-1, self.k_pose, 3)
        beta = out[:, 3 + self.k_pose * 3:3 + self.k_pose * 3 + self.num_betas]
        cam = out[:, -3:]
        scale = nn.functional.softplus(cam[:, :1])
        return theta_g, theta, beta, torch.cat([scale, cam[:, 1:]], dim=1)


def project_weak_persp(points: torch.Tensor, cam: torch.Tensor,
                       crop_size: float) -> torch.Tensor:
    """Weak-perspective projection to crop pixels.

    points ([B,] N, 3) in model units, cam ([B,] 3) = (scale, tx, ty) with
    translation in crop pixels; z is discarded.
    """
    scale = cam[..., 0:1].unsqueeze(-1)
    trans = cam[..., 1:3].unsqueeze(-2)
    half = crop_size / 2.0
    return scale * points[..., :2] * half + half + trans
