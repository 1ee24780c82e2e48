"""Evaluation: crop each person, run the network, decode the body, and score.

Predictions are the joints regressed from the decoded 3D shape (not the pose
head's coordinates). MPJPE / PA-MPJPE / 3DPCK are computed on the 15-joint
common set after root-centering; MPVPE on the full mesh, also root-centered
by the regressed pelvis. All values in millimeters.
"""

from __future__ import annotations

import numpy as np
import torch

from . import joints as J
from .body_model import BodyModel, build_body_model, decode_vertices, regress_joints
from .config import TrainConfig
from .data import prepare_item
from .errors import ConfigError
from .metrics import MetricsReport, mpjpe, mpvpe, pa_mpjpe, pck3d
from .model import CrowdPoseNet, load_checkpoint
from .scene import SceneSample, load_split

MM_PER_UNIT = 1000.0
COMMON = np.asarray(J.COMMON_SET)


def _decode_np(body: BodyModel, theta_g, theta, beta):
    """(mesh vertices mm root-centered, common joints mm root-centered)."""
    verts = decode_vertices(
        body,
        torch.as_tensor(np.asarray(theta_g), dtype=torch.float64),
        torch.as_tensor(np.asarray(theta), dtype=torch.float64),
        torch.as_tensor(np.asarray(beta), dtype=torch.float64),
    )
    joints = regress_joints(body, verts).numpy()
    root = joints[J.ROOT_SUPERSET_INDEX:J.ROOT_SUPERSET_INDEX + 1]
    return (verts.numpy() - root) * MM_PER_UNIT, (joints - root) * MM_PER_UNIT


def evaluate_samples(model: CrowdPoseNet, samples: list[SceneSample], cfg: TrainConfig,
                     body: BodyModel | None = None, synth_errors: bool = False,
                     rng: np.random.Generator | None = None, oracle: bool = False,
                     joint_records: list | None = None) -> MetricsReport:
    """Score a model (or, with oracle=True, the GT itself) on scene samples.

    Pass a list as joint_records to collect per-person prediction/GT joint
    arrays for the interchange file (metrics.save_joint_records).
    """
    if model is not None and model.config.num_superset != cfg.net.num_superset:
        raise ConfigError("checkpoint and config disagree on the joint superset size")
    body = body if body is not None else build_body_model(cfg.body.seed, cfg.body)
    if model is not None:
        model.eval()
    if synth_errors and rng is None:
        rng = np.random.default_rng(cfg.seed)

    rows = []
    for sample in samples:
        for p_idx, person in enumerate(sample.persons):
            item = prepare_item(sample, p_idx, cfg, rng, synth_errors)
            if item is None:
                continue
            gt_mesh, gt_joints = _decode_np(body, person.theta_g, person.theta, person.beta)
            if oracle:
                pred_mesh, pred_joints = gt_mesh, gt_joints
            else:
                with torch.no_grad():
                    out = model(torch.as_tensor(item.crop[None]),
                                torch.as_tensor(item.heatmaps[None]),
                                torch.as_tensor(item.input_pose[None]))
                pred_mesh, pred_joints = _decode_np(
                    body, out["theta_g"][0].numpy(), out["theta"][0].numpy(),
                    out["beta"][0].numpy())
            rows.append({
                "sample": sample.seed,
                "person": p_idx,
                "mpjpe_mm": mpjpe(pred_joints[COMMON], gt_joints[COMMON]),
                "pa_mpjpe_mm": pa_mpjpe(pred_joints[COMMON], gt_joints[COMMON]),
                "pck3d_percent": pck3d(pred_joints[COMMON], gt_joints[COMMON]),
                "mpvpe_mm": mpvpe(pred_mesh, gt_mesh),
            })
            if joint_records is not None:
                joint_records.append({
                    "sample": sample.seed,
                    "person": p_idx,
                    "pred_joints_mm": pred_joints[COMMON],
                    "gt_joints_mm": gt_joints[COMMON],
                })
    return MetricsReport.from_rows(rows)


def evaluate(checkpoint: str, dataset: str, split: str, cfg: TrainConfig,
             synth_errors: bool = False, oracle: bool = False,
             joint_records_path: str | None = None) -> MetricsReport:
    samples = load_split(dataset, split)
    model = None if oracle else load_checkpoint(checkpoint)
    records: list | None = [] if joint_records_path else None
    report = evaluate_samples(model, samples, cfg, synth_errors=synth_errors,
                              oracle=oracle, joint_records=records)
    if joint_records_path:
        from .metrics import save_joint_records
        save_joint_records(records, joint_records_path)
    return report


def silhouette_cells(mask: np.ndarray, affine: np.ndarray, crop_size: int,
                     stride: int = 16) -> np.ndarray:
    """Fraction of each F' cell covered by an image-space silhouette mask."""
    from .pose2d import BBox, crop_and_resize, invert_affine

    inv = invert_affine(affine)
    x_min, y_min = inv[:, 2]
    x_max = x_min + crop_size / affine[0, 0]
    y_max = y_min + crop_size / affine[1, 1]
    warped, _ = crop_and_resize(mask.astype(np.float64), BBox(x_min, y_min, x_max, y_max),
                                (crop_size, crop_size))
    cells = crop_size // stride
    return warped.reshape(cells, stride, cells, stride).mean(axis=(1, 3))


def guided_activation_stats(model: CrowdPoseNet, samples: list[SceneSample],
                            cfg: TrainConfig) -> dict:
    """Fraction of (scene, person) cases where mean |F'| inside the target's
    silhouette exceeds mean |F'| over the other person's exclusive cells."""
    from .pose2d import apply_affine, bbox_from_pose, crop_and_resize, make_heatmaps
    from .pose2d import Pose2D
    from .errors import DegeneratePoseError

    model.eval()
    wins, cases = 0, 0
    for sample in samples:
        if len(sample.persons) != 2:
            continue
        for target in (0, 1):
            person = sample.persons[target]
            other = sample.persons[1 - target]
            pose = Pose2D(person.gt_pose2d, person.visibility.astype(np.float64))
            try:
                bbox = bbox_from_pose(pose, cfg.bbox_margin, cfg.keep_threshold)
            except DegeneratePoseError:
                continue
            size = cfg.crop_size
            crop, affine = crop_and_resize(sample.image, bbox, (size, size))
            pose_crop = Pose2D(apply_affine(affine, pose.joints), pose.confidence)
            hm = make_heatmaps(pose_crop, size // 4, size // 4, cfg.sigma,
                               cfg.keep_threshold, crop_size=size)
            with torch.no_grad():
                fprime = model.backbone(
                    torch.as_tensor(crop.transpose(2, 0, 1)[None], dtype=torch.float32),
                    torch.as_tensor(hm.maps[None], dtype=torch.float32))
            mag = fprime[0].abs().mean(dim=0).numpy()

            frac_t = silhouette_cells(person.silhouette, affine, size, model.stride)
            frac_o = silhouette_cells(other.silhouette, affine, size, model.stride)
            target_cells = frac_t > 0.5
            other_cells = (frac_o > 0.5) & (frac_t < 0.05)
            if target_cells.sum() == 0 or other_cells.sum() == 0:
                continue
            cases += 1
            if mag[target_cells].mean() > mag[other_cells].mean():
                wins += 1
    return {"cases": cases, "wins": wins,
            "win_rate": wins / cases if cases else float("nan")}
