"""Full network: guided backbone + 3D pose head + body-parameter head.

Variants (config switches, identical training protocol):
  guided      full system (default)
  unguided    heatmap input zeroed channel-wise before fusion
  hmr         parameters regressed from pooled F' by an MLP instead of the
              joint-based graph regressor
  no_posenet  joint-level features sampled at the *input* 2D pose instead of
              the predicted 3D pose (z = 0, confidence from the input pose)

Checkpoints are .npz archives of named parameter/buffer arrays plus the JSON
architecture config; loading validates shape agreement.
"""

from __future__ import annotations

import dataclasses
import io
import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import joints as J
from .backbone import GuidedBackbone, init_weights
from .config import NetConfig
from .errors import ConfigError, SampleParseError, ShapeMismatchError, UnsupportedVersionError
from .graph import build_skeleton_graph
from .posenet import PoseNet3D, soft_argmax3d
from .shapenet import HMRStyleHead, ShapeNet, assemble_fs, sample_joint_features

CHECKPOINT_FORMAT = "crowdpose3d-checkpoint"
CHECKPOINT_VERSION = 1

VARIANTS = ("guided", "unguided", "hmr", "no_posenet")


class CrowdPoseNet(nn.Module):
    """End-to-end network mapping (crop, heatmaps) to body parameters."""

    def __init__(self, config: NetConfig | None = None):
        super().__init__()
        self.config = config or NetConfig()
        if self.config.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.config.variant!r}; one of {VARIANTS}")
        c = self.config
        self.backbone = GuidedBackbone(c.early_channels, c.late_channels,
                                       c.num_superset, c.blocks_per_stage)
        self.posenet = PoseNet3D(c.late_channels, c.num_common, c.depth_bins)
        graph = build_skeleton_graph(J.COMMON_EDGES, c.num_common)
        self.shapenet = ShapeNet(graph, c.late_channels, c.graph_channels, c.k_pose)
        self.hmr_head = HMRStyleHead(c.late_channels, c.k_pose) if c.variant == "hmr" else None
        init_weights(self.backbone)
        for head in (self.shapenet.head_theta_g, self.shapenet.head_theta,
                     self.shapenet.head_beta, self.shapenet.head_cam):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    @property
    def stride(self) -> int:
        return 16

    def forward(self, crop: torch.Tensor, heatmaps: torch.Tensor,
                input_pose: torch.Tensor | None = None) -> dict[str, torch.Tensor]:
        """Run the full pipeline.

        crop: (B, 3, S, S) in [0, 1]; heatmaps: (B, J_s, S/4, S/4);
        input_pose: (B, J_c, 3) crop-pixel (x, y, confidence) rows, required
        by the no_posenet variant.
        Returns dict with fprime, volume, pose3d, confidence, theta_g, theta,
        beta, cam.
        """
        c = self.config
        if c.variant == "unguided":
            heatmaps = torch.zeros_like(heatmaps)
        fprime = self.backbone(crop, heatmaps)

        out: dict[str, torch.Tensor] = {"fprime": fprime}
        if c.variant == "no_posenet":
            if input_pose is None:
                raise ConfigError("no_posenet variant requires input_pose")
            xy = input_pose[..., :2]
            conf = input_pose[..., 2]
            coords = torch.cat([xy, torch.zeros_like(xy[..., :1])], dim=-1)
            out["volume"] = None
        else:
            volume = self.posenet(fprime)
            coords, conf = soft_argmax3d(volume, self.stride, c.depth_range_mm)
            out["volume"] = volume
        out["pose3d"] = coords
        out["confidence"] = conf

        if self.hmr_head is not None:
            theta_g, theta, beta, cam = self.hmr_head(fprime)
        else:
            sampled = sample_joint_features(fprime, coords[..., :2], self.stride)
            fs = assemble_fs(sampled, coords, conf, c.crop_size, c.depth_range_mm,
                             normalize=c.normalize_fs_coords)
            theta_g, theta, beta, cam = self.shapenet(fs, fprime)
        out.update(theta_g=theta_g, theta=theta, beta=beta, cam=cam)
        return out


def build_model(config: NetConfig | None = None, seed: int | None = None) -> CrowdPoseNet:
    """Construct a CrowdPoseNet with seeded deterministic initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return CrowdPoseNet(config)


def save_checkpoint(model: CrowdPoseNet, path: str | Path,
                    extra: dict | None = None) -> None:
    state = {name: tensor.detach().cpu().numpy()
             for name, tensor in model.state_dict().items()}
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(model.config),
        "extra": extra or {},
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **state)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> CrowdPoseNet:
    try:
        archive = np.load(Path(path), allow_pickle=False)
    except Exception as exc:
        raise SampleParseError(f"unreadable checkpoint {path}: {exc}") from exc
    if "__meta__" not in archive:
        raise SampleParseError(f"checkpoint {path} lacks metadata")
    meta = json.loads(bytes(archive["__meta__"]).decode())
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise SampleParseError(f"not a checkpoint file: {meta.get('format')!r}")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint version {meta.get('version')} unsupported")

    config = NetConfig(**meta["config"])
    model = CrowdPoseNet(config)
    expected = model.state_dict()
    state = {}
    for name in expected:
        if name not in archive:
            raise SampleParseError(f"checkpoint missing parameter {name!r}")
        array = archive[name]
        if tuple(array.shape) != tuple(expected[name].shape):
            raise ShapeMismatchError(
                f"checkpoint parameter {name!r} has shape {array.shape}, "
                f"model expects {tuple(expected[name].shape)}")
        state[name] = torch.as_tensor(array)
    model.load_state_dict(state)
    model.eval()
    return model


def checkpoint_extra(path: str | Path) -> dict:
    archive = np.load(Path(path), allow_pickle=False)
    return json.loads(bytes(archive["__meta__"]).decode()).get("extra", {})
