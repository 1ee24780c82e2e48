"""Single-image inference: image + 2D pose file -> parameters, mesh, overlay.

The 2D pose file is JSON: {"joints": [[x, y], ...], "confidence": [...],
"joint_set": "name"} in original-image pixels. Outputs: a parameter JSON, a
Wavefront-style text mesh (v/f lines), and optionally an overlay PNG with
the projected skeleton joints.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from . import joints as J
from .body_model import BodyModel, build_body_model, decode_vertices, regress_joints
from .config import TrainConfig
from .errors import SampleParseError
from .model import CrowdPoseNet
from .pose2d import Pose2D, apply_affine, bbox_from_pose, crop_and_resize, invert_affine, \
    make_heatmaps, map_to_superset


def load_image(path: str | Path) -> np.ndarray:
    """PNG/JPEG to float32 HxWx3 in [0, 1]."""
    from PIL import Image

    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float32) / np.float32(255)
    except Exception as exc:
        raise SampleParseError(f"unreadable image {path}: {exc}") from exc


def save_image(array: np.ndarray, path: str | Path) -> None:
    from PIL import Image

    data = np.clip(np.round(np.asarray(array) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def load_pose_file(path: str | Path) -> Pose2D:
    try:
        data = json.loads(Path(path).read_text())
        return Pose2D(joints=np.asarray(data["joints"], dtype=np.float64),
                      confidence=np.asarray(data["confidence"], dtype=np.float64),
                      joint_set=data.get("joint_set", "superset"))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (SampleParseError,)):
            raise
        raise SampleParseError(f"bad 2D pose file {path}: {exc}") from exc


def write_obj(vertices: np.ndarray, faces: np.ndarray, path: str | Path) -> None:
    lines = [f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}" for v in np.asarray(vertices)]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in np.asarray(faces)]
    Path(path).write_text("\n".join(lines) + "\n")


def draw_points(image: np.ndarray, points: np.ndarray, color=(1.0, 0.2, 0.2),
                radius: int = 2) -> np.ndarray:
    out = image.copy()
    h, w = out.shape[:2]
    for x, y in np.asarray(points):
        c, r = int(round(x)), int(round(y))
        if not (0 <= c < w and 0 <= r < h):
            continue
        out[max(0, r - radius):r + radius + 1, max(0, c - radius):c + radius + 1] = color
    return out


def infer(model: CrowdPoseNet, image: np.ndarray, pose: Pose2D, cfg: TrainConfig,
          body: BodyModel | None = None, out_dir: str | Path = ".",
          stem: str = "person", overlay: bool = True) -> dict:
    """Run the pipeline for one person; writes params/mesh/overlay files."""
    body = body if body is not None else build_body_model(cfg.body.seed, cfg.body)
    model.eval()
    if pose.joint_set != "superset":
        pose = map_to_superset(pose)

    bbox = bbox_from_pose(pose, cfg.bbox_margin, cfg.keep_threshold)
    size = cfg.crop_size
    crop, affine = crop_and_resize(image, bbox, (size, size))
    pose_crop = Pose2D(apply_affine(affine, pose.joints), pose.confidence)
    hm = make_heatmaps(pose_crop, size // 4, size // 4, cfg.sigma,
                       cfg.keep_threshold, crop_size=size)
    common = np.asarray(J.COMMON_SET)
    input_pose = np.concatenate(
        [pose_crop.joints[common], pose_crop.confidence[common, None]], axis=1)

    with torch.no_grad():
        out = model(torch.as_tensor(crop.transpose(2, 0, 1)[None], dtype=torch.float32),
                    torch.as_tensor(hm.maps[None], dtype=torch.float32),
                    torch.as_tensor(input_pose[None], dtype=torch.float32))

    theta_g = out["theta_g"][0].numpy()
    theta = out["theta"][0].numpy()
    beta = out["beta"][0].numpy()
    cam = out["cam"][0].numpy()
    verts = decode_vertices(body,
                            torch.as_tensor(theta_g, dtype=torch.float64),
                            torch.as_tensor(theta, dtype=torch.float64),
                            torch.as_tensor(beta, dtype=torch.float64))
    joints = regress_joints(body, verts).numpy()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params_path = out_dir / f"{stem}_params.json"
    params_path.write_text(json.dumps({
        "theta_g": theta_g.tolist(),
        "theta": theta.tolist(),
        "beta": beta.tolist(),
        "k": cam.tolist(),
    }, indent=1))
    mesh_path = out_dir / f"{stem}_mesh.obj"
    write_obj(verts.numpy(), body.faces, mesh_path)

    result = {"params": str(params_path), "mesh": str(mesh_path)}
    if overlay:
        from .shapenet import project_weak_persp

        root = joints[J.ROOT_SUPERSET_INDEX:J.ROOT_SUPERSET_INDEX + 1]
        proj_crop = project_weak_persp(
            torch.as_tensor(joints - root, dtype=torch.float64)[None],
            torch.as_tensor(cam, dtype=torch.float64)[None], size)[0].numpy()
        proj_img = apply_affine(invert_affine(affine), proj_crop)
        overlay_path = out_dir / f"{stem}_overlay.png"
        save_image(draw_points(image, proj_img), overlay_path)
        result["overlay"] = str(overlay_path)
    return result
