"""Synthetic crowd-scene generator with exact ground truth.

Samples body-model instances with random pose/shape, places them at graduated
depths so that projected-bbox IoU approaches a configured overlap target
(rejection sampling with a best-effort fallback), rasterizes the posed bone
capsules with per-pixel depth ordering, and emits per-person GT: parameters,
root-relative 3D joints (mm), pinhole-projected 2D joints, occlusion-aware
visibility flags and visible-silhouette masks.

On-disk format: one directory per sample holding ``meta.json`` (scalars plus
an array manifest) and one little-endian binary file per array (float32 or
uint8). A dataset is a directory of samples plus ``index.json`` with split
lists, the generator config, and the base seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import joints as J
from .body_model import BodyModel, build_body_model, decode_vertices, forward_kinematics, \
    posed_joints, regress_joints
from .config import SceneConfig
from .errors import SampleParseError, UnsupportedVersionError
from .metrics import bbox_iou
from .pose2d import BBox

SCENE_FORMAT = "crowdpose3d-scene"
SCENE_VERSION = 1
DATASET_FORMAT = "crowdpose3d-dataset"

BACKGROUND = np.float32(26) / np.float32(255)


@dataclass
class Camera:
    focal: float
    cx: float
    cy: float

    def project(self, points: np.ndarray) -> np.ndarray:
        """Pinhole projection of (N, 3) camera-space points to pixels."""
        z = points[:, 2]
        return np.stack([self.focal * points[:, 0] / z + self.cx,
                         self.focal * points[:, 1] / z + self.cy], axis=1)


@dataclass
class PersonGT:
    theta_g: np.ndarray      # (3,)
    theta: np.ndarray        # (K_pose, 3)
    beta: np.ndarray         # (num_betas,)
    translation: np.ndarray  # (3,) camera-space position of the body root
    gt_pose3d: np.ndarray    # (J_s, 3) root-relative mm
    gt_pose2d: np.ndarray    # (J_s, 2) image px
    visibility: np.ndarray   # (J_s,) bool; False where another person covers the joint
    silhouette: np.ndarray   # (H, W) uint8 visible-pixel mask


@dataclass
class SceneSample:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    persons: list[PersonGT]
    camera: Camera
    seed: int
    overlap_ok: bool   # False when placement fell back to best effort


def person_tight_bbox(person: PersonGT) -> BBox:
    lo = person.gt_pose2d.min(axis=0)
    hi = person.gt_pose2d.max(axis=0)
    return BBox(lo[0], lo[1], max(hi[0], lo[0] + 1e-3), max(hi[1], lo[1] + 1e-3))


def _sample_params(rng: np.random.Generator, config: SceneConfig, k_pose: int):
    theta_g = rng.uniform(-config.global_rot_range_rad, config.global_rot_range_rad, 3)
    theta = rng.uniform(-config.pose_range_rad, config.pose_range_rad, (k_pose, 3))
    beta = rng.uniform(-config.beta_range, config.beta_range, 10)
    return theta_g, theta, beta


def _decode_person(model: BodyModel, theta_g, theta, beta):
    """Superset joints and posed skeleton joints (float64, model units)."""
    tg = torch.as_tensor(theta_g, dtype=torch.float64)
    th = torch.as_tensor(theta, dtype=torch.float64)
    be = torch.as_tensor(beta, dtype=torch.float64)
    verts = decode_vertices(model, tg, th, be)
    superset = regress_joints(model, verts).numpy()
    skeleton = posed_joints(model, forward_kinematics(model, tg, th)).numpy()
    return superset, skeleton


def _projected_bbox(camera: Camera, joints: np.ndarray, translation: np.ndarray) -> BBox:
    pts = camera.project(joints + translation[None, :])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return BBox(lo[0], lo[1], max(hi[0], lo[0] + 1e-3), max(hi[1], lo[1] + 1e-3))


def render(bones: list[np.ndarray], radii: list[np.ndarray], colors: np.ndarray,
           camera: Camera, image_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize per-person bone capsules with per-pixel depth ordering.

    bones[p] is (n_bones, 2, 3) camera-space segment endpoints; radii[p] the
    per-bone capsule radii. Returns (image (H, W, 3) float32, owner (H, W)
    int32 with -1 for background).
    """
    h = w = image_size
    depth = np.full((h, w), np.inf)
    owner = np.full((h, w), -1, dtype=np.int32)

    for p, (segs, rads) in enumerate(zip(bones, radii)):
        for (a3, b3), r in zip(segs, rads):
            if a3[2] <= 0.1 or b3[2] <= 0.1:
                continue  # behind the camera plane
            a = np.array([camera.focal * a3[0] / a3[2] + camera.cx,
                          camera.focal * a3[1] / a3[2] + camera.cy])
            b = np.array([camera.focal * b3[0] / b3[2] + camera.cx,
                          camera.focal * b3[1] / b3[2] + camera.cy])
            ra = r * camera.focal / a3[2]
            rb = r * camera.focal / b3[2]

            x_lo = int(np.floor(min(a[0] - ra, b[0] - rb)))
            x_hi = int(np.ceil(max(a[0] + ra, b[0] + rb))) + 1
            y_lo = int(np.floor(min(a[1] - ra, b[1] - rb)))
            y_hi = int(np.ceil(max(a[1] + ra, b[1] + rb))) + 1
            x_lo, x_hi = max(x_lo, 0), min(x_hi, w)
            y_lo, y_hi = max(y_lo, 0), min(y_hi, h)
            if x_lo >= x_hi or y_lo >= y_hi:
                continue

            xs = np.arange(x_lo, x_hi, dtype=np.float64)
            ys = np.arange(y_lo, y_hi, dtype=np.float64)
            gx, gy = np.meshgrid(xs, ys)
            ab = b - a
            denom = float(ab @ ab)
            if denom < 1e-12:
                t = np.zeros_like(gx)
            else:
                t = np.clip(((gx - a[0]) * ab[0] + (gy - a[1]) * ab[1]) / denom, 0.0, 1.0)
            dx = gx - (a[0] + t * ab[0])
            dy = gy - (a[1] + t * ab[1])
            rr = ra + t * (rb - ra)
            covered = dx * dx + dy * dy <= rr * rr
            z = a3[2] + t * (b3[2] - a3[2])

            tile_d = depth[y_lo:y_hi, x_lo:x_hi]
            tile_o = owner[y_lo:y_hi, x_lo:x_hi]
            closer = covered & (z < tile_d)
            tile_d[closer] = z[closer]
            tile_o[closer] = p

    image = np.full((h, w, 3), BACKGROUND, dtype=np.float32)
    for p in range(len(bones)):
        image[owner == p] = colors[p]
    return image, owner


def _skeleton_bones(model: BodyModel, skeleton: np.ndarray,
                    translation: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    segs = []
    for j in range(model.num_joints):
        parent = int(model.kinematic_tree[j])
        if parent < 0:
            a = skeleton[j] - np.array([0.0, 0.06, 0.0])
            b = skeleton[j] + np.array([0.0, 0.06, 0.0])
        else:
            a, b = skeleton[parent], skeleton[j]
        segs.append([a + translation, b + translation])
    return np.asarray(segs), model.bone_radii.copy()


def generate_scene(rng: np.random.Generator, config: SceneConfig,
                   model: BodyModel | None = None, seed: int = 0) -> SceneSample:
    """One synthetic scene; deterministic given the rng state."""
    if config.n_persons < 1:
        raise ValueError("n_persons must be >= 1")
    model = model if model is not None else build_body_model(config.body.seed, config.body)
    camera = Camera(config.focal_px, config.image_size / 2.0, config.image_size / 2.0)
    k_pose = model.k_pose

    persons_raw = []
    translations: list[np.ndarray] = []
    overlap_ok = True
    for i in range(config.n_persons):
        theta_g, theta, beta = _sample_params(rng, config, k_pose)
        superset, skeleton = _decode_person(model, theta_g, theta, beta)

        depth = config.depth_base_m + i * config.depth_step_m + rng.uniform(-0.05, 0.05)
        if i == 0:
            trans = np.array([rng.uniform(-0.25, 0.25), rng.uniform(-0.15, 0.15), depth])
        else:
            prev_bbox = _projected_bbox(camera, persons_raw[i - 1][0], translations[i - 1])
            best, best_err = None, np.inf
            side = rng.choice([-1.0, 1.0])
            for _ in range(config.max_attempts):
                dx = side * rng.uniform(0.0, 1.6)
                dy = rng.uniform(-0.15, 0.15)
                cand = translations[i - 1] + np.array([dx, dy, depth - translations[i - 1][2]])
                iou = bbox_iou(prev_bbox, _projected_bbox(camera, superset, cand))
                err = abs(iou - config.overlap_target)
                if err < best_err:
                    best, best_err = cand, err
                if err <= config.overlap_tolerance:
                    break
            trans = best
            if best_err > config.overlap_tolerance:
                overlap_ok = False
        translations.append(trans)
        persons_raw.append((superset, skeleton, theta_g, theta, beta))

    bones, radii, colors = [], [], []
    base_color = rng.integers(60, 256, 3).astype(np.float64)
    for i, (_, skeleton, *_rest) in enumerate(persons_raw):
        segs, rads = _skeleton_bones(model, skeleton, translations[i])
        bones.append(segs)
        radii.append(rads)
        own = rng.integers(60, 256, 3).astype(np.float64)
        mixed = config.color_similarity * base_color + (1 - config.color_similarity) * own
        colors.append((np.round(mixed).astype(np.float32)) / np.float32(255))
    image, owner = render(bones, radii, np.asarray(colors), camera, config.image_size)

    persons = []
    size = config.image_size
    for i, (superset, _skel, theta_g, theta, beta) in enumerate(persons_raw):
        abs_joints = superset + translations[i][None, :]
        pose2d = camera.project(abs_joints)
        pose3d = (abs_joints - abs_joints[J.ROOT_SUPERSET_INDEX:J.ROOT_SUPERSET_INDEX + 1]) * 1000.0

        cols = np.clip(np.round(pose2d[:, 0]).astype(np.int64), 0, size - 1)
        rows = np.clip(np.round(pose2d[:, 1]).astype(np.int64), 0, size - 1)
        in_frame = ((pose2d[:, 0] >= -0.5) & (pose2d[:, 0] <= size - 0.5)
                    & (pose2d[:, 1] >= -0.5) & (pose2d[:, 1] <= size - 0.5))
        covered = in_frame & (owner[rows, cols] >= 0) & (owner[rows, cols] != i)
        persons.append(PersonGT(
            theta_g=theta_g.astype(np.float32),
            theta=theta.astype(np.float32),
            beta=beta.astype(np.float32),
            translation=translations[i].astype(np.float32),
            gt_pose3d=pose3d.astype(np.float32),
            gt_pose2d=pose2d.astype(np.float32),
            visibility=~covered,
            silhouette=(owner == i).astype(np.uint8),
        ))
    return SceneSample(image=image, persons=persons, camera=camera, seed=seed,
                       overlap_ok=overlap_ok)


def scene_crowd_stats(sample: SceneSample) -> dict[str, float]:
    """Mean CrowdIndex and mean pairwise tight-bbox IoU of one scene."""
    from .metrics import crowd_index
    from .pose2d import Pose2D

    poses = [Pose2D(p.gt_pose2d, np.ones(len(p.gt_pose2d))) for p in sample.persons]
    boxes = [person_tight_bbox(p) for p in sample.persons]
    indices = []
    for i, pose in enumerate(poses):
        others = [poses[j] for j in range(len(poses)) if j != i]
        try:
            indices.append(crowd_index(pose, others, boxes[i]))
        except ValueError:
            continue
    ious = [bbox_iou(boxes[i], boxes[j])
            for i in range(len(boxes)) for j in range(i + 1, len(boxes))]
    return {
        "crowd_index": float(np.mean(indices)) if indices else 0.0,
        "bbox_iou": float(np.mean(ious)) if ious else 0.0,
    }


# ---------------------------------------------------------------------------
# serialization

def _person_arrays(i: int, person: PersonGT) -> dict[str, np.ndarray]:
    return {
        f"person{i}_theta_g": person.theta_g.astype(np.float32),
        f"person{i}_theta": person.theta.astype(np.float32),
        f"person{i}_beta": person.beta.astype(np.float32),
        f"person{i}_translation": person.translation.astype(np.float32),
        f"person{i}_gt_pose3d": person.gt_pose3d.astype(np.float32),
        f"person{i}_gt_pose2d": person.gt_pose2d.astype(np.float32),
        f"person{i}_visibility": person.visibility.astype(np.uint8),
        f"person{i}_silhouette": person.silhouette.astype(np.uint8),
    }


def write_sample(sample: SceneSample, path: str | Path) -> None:
    """Lossless directory serialization (floats stored bit-exact)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {
        "image": np.round(sample.image * 255.0).astype(np.uint8),
    }
    for i, person in enumerate(sample.persons):
        arrays.update(_person_arrays(i, person))

    manifest = []
    for name, arr in arrays.items():
        dtype = "<f4" if arr.dtype == np.float32 else "|u1"
        fname = f"{name}.bin"
        (path / fname).write_bytes(np.ascontiguousarray(arr, dtype=dtype).tobytes())
        manifest.append({"name": name, "file": fname, "dtype": dtype, "shape": list(arr.shape)})

    meta = {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "seed": sample.seed,
        "overlap_ok": sample.overlap_ok,
        "n_persons": len(sample.persons),
        "camera": {"focal": sample.camera.focal, "cx": sample.camera.cx, "cy": sample.camera.cy},
        "arrays": manifest,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=1))


def read_sample(path: str | Path) -> SceneSample:
    """Inverse of write_sample; raises SampleParseError on any corruption."""
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise SampleParseError(f"{path} has no meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise SampleParseError(f"corrupt meta.json in {path}: {exc.msg}", offset=exc.pos) from exc
    if meta.get("format") != SCENE_FORMAT:
        raise SampleParseError(f"{path} is not a scene sample")
    if meta.get("version") != SCENE_VERSION:
        raise UnsupportedVersionError(
            f"scene version {meta.get('version')} unsupported (expected {SCENE_VERSION})")

    arrays = {}
    for spec in meta["arrays"]:
        dtype = np.dtype(spec["dtype"])
        expected = int(np.prod(spec["shape"])) * dtype.itemsize
        raw = (path / spec["file"]).read_bytes() if (path / spec["file"]).exists() else None
        if raw is None:
            raise SampleParseError(f"missing array file {spec['file']} in {path}")
        if len(raw) != expected:
            raise SampleParseError(
                f"array {spec['name']} in {path} truncated: {len(raw)} of {expected} bytes",
                offset=len(raw))
        arrays[spec["name"]] = np.frombuffer(raw, dtype=dtype).reshape(spec["shape"]).copy()

    persons = []
    for i in range(meta["n_persons"]):
        try:
            persons.append(PersonGT(
                theta_g=arrays[f"person{i}_theta_g"],
                theta=arrays[f"person{i}_theta"],
                beta=arrays[f"person{i}_beta"],
                translation=arrays[f"person{i}_translation"],
                gt_pose3d=arrays[f"person{i}_gt_pose3d"],
                gt_pose2d=arrays[f"person{i}_gt_pose2d"],
                visibility=arrays[f"person{i}_visibility"].astype(bool),
                silhouette=arrays[f"person{i}_silhouette"],
            ))
        except KeyError as exc:
            raise SampleParseError(f"sample {path} lacks array {exc}") from exc
    cam = meta["camera"]
    return SceneSample(
        image=arrays["image"].astype(np.float32) / np.float32(255),
        persons=persons,
        camera=Camera(cam["focal"], cam["cx"], cam["cy"]),
        seed=meta["seed"],
        overlap_ok=meta["overlap_ok"],
    )


def generate_dataset(out_dir: str | Path, config: SceneConfig, base_seed: int,
                     splits: dict[str, int], model: BodyModel | None = None) -> dict:
    """Generate named splits (e.g. {"train": 256, "heldout": 64}) of scenes.

    Sample index i uses its own rng stream seeded with base_seed + i, so
    generation is order-independent and reproducible.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = model if model is not None else build_body_model(config.body.seed, config.body)

    index: dict = {
        "format": DATASET_FORMAT,
        "version": SCENE_VERSION,
        "base_seed": base_seed,
        "config": dataclasses.asdict(config),
        "splits": {},
    }
    counter = 0
    for split, count in splits.items():
        names = []
        for _ in range(count):
            seed = base_seed + counter
            sample = generate_scene(np.random.default_rng(seed), config, model, seed=seed)
            name = f"{split}_{counter:05d}"
            write_sample(sample, out_dir / name)
            names.append(name)
            counter += 1
        index["splits"][split] = names
    (out_dir / "index.json").write_text(json.dumps(index, indent=1))
    return index


def load_dataset_index(root: str | Path) -> dict:
    root = Path(root)
    index_path = root / "index.json"
    if not index_path.exists():
        raise SampleParseError(f"{root} has no index.json")
    index = json.loads(index_path.read_text())
    if index.get("format") != DATASET_FORMAT:
        raise SampleParseError(f"{root} is not a scene dataset")
    return index


def load_split(root: str | Path, split: str) -> list[SceneSample]:
    index = load_dataset_index(root)
    if split not in index["splits"]:
        raise SampleParseError(f"dataset {root} has no split {split!r}; "
                               f"available: {sorted(index['splits'])}")
    return [read_sample(Path(root) / name) for name in index["splits"][split]]
