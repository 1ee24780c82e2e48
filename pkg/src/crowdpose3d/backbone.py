"""2D-pose-guided image feature extractor.

A residual backbone split into three pieces: an early stage (stride-2 conv +
stride-2 max-pool) producing F at 1/4 crop resolution, a 3x3 fusion block
that concatenates the per-joint heatmaps with F and maps back to C channels,
and two more stride-2 residual stages producing the guided feature F' at 1/16
crop resolution.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ShapeMismatchError


class EarlyStage(nn.Module):
    """First conv + max-pool: 3 x 4H x 4W -> C x H x W (stride 4)."""

    def __init__(self, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(3, out_channels, kernel_size=7, stride=2, padding=3, bias=True)
        self.bn = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        self.pool = nn.MaxPool2d(kernel_size=3, stride=2, padding=1)

    def forward(self, crop: torch.Tensor) -> torch.Tensor:
        if crop.shape[-1] % 16 or crop.shape[-2] % 16:
            raise ShapeMismatchError(f"crop dims must be divisible by 16, got {tuple(crop.shape)}")
        return self.pool(self.relu(self.bn(self.conv(crop))))


class FuseBlock(nn.Module):
    """Concatenate heatmaps with F along channels, 3x3 conv back to C."""

    def __init__(self, feat_channels: int, heatmap_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(feat_channels + heatmap_channels, feat_channels,
                              kernel_size=3, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(feat_channels)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, feat: torch.Tensor, heatmaps: torch.Tensor) -> torch.Tensor:
        if feat.shape[-2:] != heatmaps.shape[-2:]:
            raise ShapeMismatchError(
                f"feature {tuple(feat.shape[-2:])} and heatmap {tuple(heatmaps.shape[-2:])} "
                "spatial dims differ")
        return self.relu(self.bn(self.conv(torch.cat([feat, heatmaps], dim=1))))


class BasicBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        self.down = None
        if stride != 1 or in_channels != out_channels:
            self.down = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.down is None else self.down(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class LateStage(nn.Module):
    """Residual stack with two stride-2 stages: C x H x W -> C' x H/4 x W/4."""

    def __init__(self, in_channels: int, out_channels: int, blocks_per_stage: int = 2):
        super().__init__()
        mid = out_channels // 2
        layers: list[nn.Module] = [BasicBlock(in_channels, mid, stride=2)]
        layers += [BasicBlock(mid, mid) for _ in range(blocks_per_stage - 1)]
        layers.append(BasicBlock(mid, out_channels, stride=2))
        layers += [BasicBlock(out_channels, out_channels) for _ in range(blocks_per_stage - 1)]
        self.stages = nn.Sequential(*layers)

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        if fused.shape[-1] % 4 or fused.shape[-2] % 4:
            raise ShapeMismatchError(f"fused dims must be divisible by 4, got {tuple(fused.shape)}")
        return self.stages(fused)


class GuidedBackbone(nn.Module):
    """Early features -> heatmap fusion -> late features (the F' extractor)."""

    def __init__(self, early_channels: int, late_channels: int, heatmap_channels: int,
                 blocks_per_stage: int = 2):
        super().__init__()
        self.early = EarlyStage(early_channels)
        self.fuse = FuseBlock(early_channels, heatmap_channels)
        self.late = LateStage(early_channels, late_channels, blocks_per_stage)

    def forward(self, crop: torch.Tensor, heatmaps: torch.Tensor) -> torch.Tensor:
        return self.late(self.fuse(self.early(crop), heatmaps))


def init_weights(module: nn.Module, generator: torch.Generator | None = None) -> None:
    """Seeded Kaiming fan-in init for convs; BN affine to identity."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu",
                                    generator=generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm2d, nn.BatchNorm1d)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
