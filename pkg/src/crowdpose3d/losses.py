"""Training losses with mixed 2D/3D supervision masks.

All terms are masked L1 means over valid entries: the pose head is
supervised on soft-argmax coordinates (x, y gated by the per-joint xy flag,
z by the z flag, so 2D-only data still trains the image-plane axes), the
parameter head on (theta_g, theta, beta), and the shape head on joints
regressed from the decoded mesh, both in 3D (root-centered millimeters,
rows gated by the z flag) and reprojected to crop pixels (gated by xy).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch

from .errors import ShapeMismatchError


@dataclass
class SupervisionMask:
    """Validity flags; z-valid joints must also be xy-valid."""
    xy: torch.Tensor             # (J,) or (B, J) bool
    z: torch.Tensor              # (J,) or (B, J) bool
    theta_g: bool = True
    theta: bool = True
    beta: bool = True

    def __post_init__(self):
        self.xy = torch.as_tensor(self.xy, dtype=torch.bool)
        self.z = torch.as_tensor(self.z, dtype=torch.bool)
        if self.xy.shape != self.z.shape:
            raise ShapeMismatchError("xy and z masks must share a shape")
        if bool((self.z & ~self.xy).any()):
            raise ValueError("z-valid joints must be xy-valid")

    @staticmethod
    def all_valid(num_joints: int, batch: int | None = None) -> "SupervisionMask":
        shape = (num_joints,) if batch is None else (batch, num_joints)
        return SupervisionMask(xy=torch.ones(shape, dtype=torch.bool),
                               z=torch.ones(shape, dtype=torch.bool))


def _masked_l1(pred: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, int]:
    """(sum of |pred - gt| over entries where mask, number of valid entries)."""
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise ShapeMismatchError(
            f"shape mismatch: pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, "
            f"mask {tuple(mask.shape)}")
    diff = (pred - gt).abs() * mask
    return diff.sum(), int(mask.sum())


def _entry_mask(mask: SupervisionMask, like: torch.Tensor) -> torch.Tensor:
    """Per-entry (x, y, z) mask of the same shape as a (..., J, 3) tensor."""
    m = torch.stack([mask.xy, mask.xy, mask.z], dim=-1)
    return m.to(like.dtype).expand_as(like)


def loss_pose(pred: torch.Tensor, gt: torch.Tensor, mask: SupervisionMask) -> torch.Tensor:
    """Masked L1 mean over the 3D pose head coordinates ((..., J, 3))."""
    total, count = _masked_l1(pred, gt, _entry_mask(mask, pred))
    if count == 0:
        warnings.warn("loss_pose: no valid coordinate entries, returning 0")
        return pred.sum() * 0.0
    return total / count


def loss_param(pred_theta_g: torch.Tensor, pred_theta: torch.Tensor, pred_beta: torch.Tensor,
               gt_theta_g: torch.Tensor, gt_theta: torch.Tensor, gt_beta: torch.Tensor,
               mask: SupervisionMask) -> torch.Tensor:
    """Masked L1 mean over all parameter entries (camera k excluded)."""
    total = pred_theta_g.sum() * 0.0
    count = 0
    for pred, gt, valid in ((pred_theta_g, gt_theta_g, mask.theta_g),
                            (pred_theta, gt_theta, mask.theta),
                            (pred_beta, gt_beta, mask.beta)):
        if not valid:
            continue
        if pred.shape != gt.shape:
            raise ShapeMismatchError(f"parameter shape mismatch {pred.shape} vs {gt.shape}")
        total = total + (pred - gt).abs().sum()
        count += pred.numel()
    return total / count if count else total


def loss_coord_shape(pred_3d: torch.Tensor, pred_2d: torch.Tensor,
                     gt_3d: torch.Tensor, gt_2d: torch.Tensor,
                     mask: SupervisionMask, root_index: int = 0) -> torch.Tensor:
    """Masked L1 means of mesh-regressed joints: 3D (root-centered, z-valid
    rows) plus 2D reprojection (xy-valid rows), summed.

    The 3D term needs a z-valid root joint to define the root-relative frame;
    samples whose root depth is masked contribute no 3D term at all, so
    masked root values can never leak into the comparison.
    """
    pred_3d = pred_3d - pred_3d[..., root_index:root_index + 1, :]
    gt_3d = gt_3d - gt_3d[..., root_index:root_index + 1, :]

    z_mask = mask.z & mask.z[..., root_index:root_index + 1]
    m3 = z_mask[..., None].to(pred_3d.dtype).expand_as(pred_3d)
    total3, count3 = _masked_l1(pred_3d, gt_3d, m3)
    m2 = mask.xy[..., None].to(pred_2d.dtype).expand_as(pred_2d)
    total2, count2 = _masked_l1(pred_2d, gt_2d, m2)

    out = pred_3d.sum() * 0.0
    if count3:
        out = out + total3 / count3
    if count2:
        out = out + total2 / count2
    return out


def total_loss(parts: dict[str, torch.Tensor],
               weights: dict[str, float] | None = None) -> torch.Tensor:
    """Weighted sum of loss terms; missing weights default to 1."""
    weights = weights or {}
    for name, w in weights.items():
        if w < 0:
            raise ValueError(f"loss weight {name}={w} must be >= 0")
    out = None
    for name, value in parts.items():
        term = value * weights.get(name, 1.0)
        out = term if out is None else out + term
    if out is None:
        raise ValueError("no loss parts given")
    return out
