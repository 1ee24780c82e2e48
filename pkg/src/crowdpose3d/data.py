"""Bridges scene samples to network tensors.

For each person in a scene: build the (possibly error-synthesized) input 2D
pose from GT joints and visibility, derive the person box from it, crop the
image, render superset heatmaps at 1/4 crop resolution, and collect training
targets (3D pose-head coordinates, mesh-joint supervision in millimeters and
crop pixels, GT body parameters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import joints as J
from .config import TrainConfig
from .errors import DegeneratePoseError
from .pose2d import Pose2D, apply_affine, bbox_from_pose, crop_and_resize, make_heatmaps, \
    synthesize_pose_errors
from .scene import SceneSample


@dataclass
class TrainingItem:
    crop: np.ndarray           # (3, S, S) float32
    heatmaps: np.ndarray       # (J_s, S/4, S/4) float32
    input_pose: np.ndarray     # (J_c, 3) crop-px x, y, confidence
    target_pose3d: np.ndarray  # (J_c, 3) crop-px x, y; z in mm
    gt_joints3d: np.ndarray    # (J_s, 3) root-relative mm
    gt_joints2d: np.ndarray    # (J_s, 2) crop px
    theta_g: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    sample_id: int
    person_id: int


def prepare_item(sample: SceneSample, person_idx: int, cfg: TrainConfig,
                 rng: np.random.Generator | None = None,
                 synth_errors: bool | None = None) -> TrainingItem | None:
    """One network-ready item, or None when too few joints survive for a box."""
    person = sample.persons[person_idx]
    pose = Pose2D(person.gt_pose2d, person.visibility.astype(np.float64))
    synth = cfg.synth_errors if synth_errors is None else synth_errors
    if synth:
        if rng is None:
            raise ValueError("error synthesis needs an rng")
        others = [Pose2D(p.gt_pose2d, p.visibility.astype(np.float64))
                  for i, p in enumerate(sample.persons) if i != person_idx]
        pose = synthesize_pose_errors(pose, rng, cfg.errors, others=others)

    try:
        bbox = bbox_from_pose(pose, cfg.bbox_margin, cfg.keep_threshold)
    except DegeneratePoseError:
        return None

    size = cfg.crop_size
    crop, affine = crop_and_resize(sample.image, bbox, (size, size))
    pose_crop = Pose2D(apply_affine(affine, pose.joints), pose.confidence)
    hm = make_heatmaps(pose_crop, size // 4, size // 4, cfg.sigma,
                       cfg.keep_threshold, crop_size=size)

    gt2d_crop = apply_affine(affine, person.gt_pose2d.astype(np.float64))
    common = np.asarray(J.COMMON_SET)
    target_pose3d = np.concatenate(
        [gt2d_crop[common], person.gt_pose3d[common, 2:3]], axis=1)
    input_pose = np.concatenate(
        [pose_crop.joints[common], pose_crop.confidence[common, None]], axis=1)

    return TrainingItem(
        crop=np.ascontiguousarray(crop.transpose(2, 0, 1), dtype=np.float32),
        heatmaps=hm.maps.astype(np.float32),
        input_pose=input_pose.astype(np.float32),
        target_pose3d=target_pose3d.astype(np.float32),
        gt_joints3d=person.gt_pose3d.astype(np.float32),
        gt_joints2d=gt2d_crop.astype(np.float32),
        theta_g=person.theta_g.astype(np.float32),
        theta=person.theta.astype(np.float32),
        beta=person.beta.astype(np.float32),
        sample_id=sample.seed,
        person_id=person_idx,
    )


def prepare_epoch(samples: list[SceneSample], cfg: TrainConfig,
                  rng: np.random.Generator | None = None,
                  synth_errors: bool | None = None) -> list[TrainingItem]:
    items = []
    for sample in samples:
        for p in range(len(sample.persons)):
            item = prepare_item(sample, p, cfg, rng, synth_errors)
            if item is not None:
                items.append(item)
    return items


def collate(items: list[TrainingItem], device=None) -> dict[str, torch.Tensor]:
    stack = lambda name: torch.as_tensor(
        np.stack([getattr(it, name) for it in items]), device=device)
    return {
        "crop": stack("crop"),
        "heatmaps": stack("heatmaps"),
        "input_pose": stack("input_pose"),
        "target_pose3d": stack("target_pose3d"),
        "gt_joints3d": stack("gt_joints3d"),
        "gt_joints2d": stack("gt_joints2d"),
        "theta_g": stack("theta_g"),
        "theta": stack("theta"),
        "beta": stack("beta"),
    }
