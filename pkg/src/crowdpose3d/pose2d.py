"""2D pose input preparation.

Turns (possibly noisy) 2D joint coordinates into the network inputs: maps
source joint sets into the 19-joint superset, synthesizes realistic detector
errors on clean poses for training, renders amplitude-1 Gaussian heatmaps
with don't-care masking, derives person boxes from poses, and crops images.

Pixel convention: continuous coordinates with pixel centers at integers.
Heatmap cell (r, c) covers the crop square centered at ((c+0.5)*stride,
(r+0.5)*stride), matching the soft-argmax decoding convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import joints as J
from .config import ErrorSynthConfig
from .errors import ConfigError, DegeneratePoseError, ShapeMismatchError


@dataclass
class Pose2D:
    joints: np.ndarray      # (J, 2) pixels
    confidence: np.ndarray  # (J,) in [0, 1]
    joint_set: str = "superset"

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 2)
        self.confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if self.joints.shape[0] != self.confidence.shape[0]:
            raise ShapeMismatchError("joints and confidence disagree on joint count")

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]


@dataclass
class Heatmap2D:
    maps: np.ndarray  # (J_s, H, W)
    sigma: float


@dataclass
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise DegeneratePoseError(f"degenerate bbox {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])


def map_to_superset(pose: Pose2D, registry: dict[str, list[int | None]] | None = None) -> Pose2D:
    """Lift a pose in a named convention to the superset; missing joints get
    confidence 0 (don't-care)."""
    registry = registry if registry is not None else J.default_registry()
    if pose.joint_set not in registry:
        raise ConfigError(f"unknown joint set {pose.joint_set!r}; "
                          f"registered: {sorted(registry)}")
    mapping = registry[pose.joint_set]
    if len(mapping) != pose.num_joints:
        raise ShapeMismatchError(
            f"{pose.joint_set!r} declares {len(mapping)} joints, pose has {pose.num_joints}")
    j_s = len(registry["superset"])
    joints = np.zeros((j_s, 2))
    conf = np.zeros(j_s)
    for src, dst in enumerate(mapping):
        if dst is None:
            continue
        joints[dst] = pose.joints[src]
        conf[dst] = pose.confidence[src]
    return Pose2D(joints=joints, confidence=conf, joint_set="superset")


def project_to_set(pose: Pose2D, set_name: str,
                   registry: dict[str, list[int | None]] | None = None) -> Pose2D:
    """Restrict a superset pose to a named convention (inverse of mapping)."""
    registry = registry if registry is not None else J.default_registry()
    if set_name not in registry:
        raise ConfigError(f"unknown joint set {set_name!r}")
    mapping = registry[set_name]
    joints = np.zeros((len(mapping), 2))
    conf = np.zeros(len(mapping))
    for src, dst in enumerate(mapping):
        if dst is None:
            continue
        joints[src] = pose.joints[dst]
        conf[src] = pose.confidence[dst]
    return Pose2D(joints=joints, confidence=conf, joint_set=set_name)


def synthesize_pose_errors(gt: Pose2D, rng: np.random.Generator,
                           config: ErrorSynthConfig | None = None,
                           others: list[Pose2D] | None = None) -> Pose2D:
    """Mimic detector outputs by degrading a clean pose joint by joint.

    Independent per-joint events: Gaussian jitter, misses (confidence dropped
    to the configured floor), left/right inversion, and swaps with the same
    joint of another person in the scene. Deterministic given the rng state.
    """
    config = config or ErrorSynthConfig()
    for name in ("p_jitter", "p_miss", "p_inversion", "p_swap"):
        p = getattr(config, name)
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"{name}={p} outside [0, 1]")

    joints = gt.joints.copy()
    conf = gt.confidence.copy()
    n = gt.num_joints
    mirror = J.left_right_map(n)

    if config.jitter_sigma_px is not None:
        sigma = config.jitter_sigma_px
    else:
        kept = gt.confidence > 0
        if kept.sum() >= 2:
            span = gt.joints[kept].max(axis=0) - gt.joints[kept].min(axis=0)
            sigma = config.jitter_sigma_frac * float(np.hypot(*span))
        else:
            sigma = 0.0

    # draws are consumed in a fixed order so runs are seed-reproducible
    do_jitter = rng.random(n) < config.p_jitter
    jitter = rng.normal(0.0, 1.0, size=(n, 2)) * sigma
    do_miss = rng.random(n) < config.p_miss
    do_inv = rng.random(n) < config.p_inversion
    do_swap = rng.random(n) < config.p_swap
    swap_pick = rng.integers(0, max(1, len(others or [])), size=n)

    joints[do_jitter] += jitter[do_jitter]
    inv = np.flatnonzero(do_inv & (mirror != np.arange(n)))
    joints[inv] = gt.joints[mirror[inv]]
    conf[inv] = gt.confidence[mirror[inv]]
    if others:
        for j in np.flatnonzero(do_swap):
            other = others[swap_pick[j] % len(others)]
            if j < other.num_joints and other.confidence[j] > 0:
                joints[j] = other.joints[j]
    conf[do_miss] = config.miss_confidence
    return Pose2D(joints=joints, confidence=conf, joint_set=gt.joint_set)


def make_heatmaps(pose: Pose2D, height: int, width: int, sigma: float,
                  keep_threshold: float = 0.1, crop_size: float | None = None) -> Heatmap2D:
    """Amplitude-1 Gaussian blob per joint on an HxW grid.

    Joints below keep_threshold produce identically-zero (don't-care)
    channels. Pose coordinates are in crop pixels and are first scaled onto
    the heatmap grid (crop defaults to 4H x 4W).
    """
    if height <= 0 or width <= 0:
        raise ConfigError("heatmap dims must be positive")
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    crop_h = crop_size if crop_size is not None else 4.0 * height
    crop_w = crop_size if crop_size is not None else 4.0 * width
    stride_y, stride_x = crop_h / height, crop_w / width

    maps = np.zeros((pose.num_joints, height, width), dtype=np.float64)
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    for j in range(pose.num_joints):
        if pose.confidence[j] < keep_threshold:
            continue
        cx = pose.joints[j, 0] / stride_x - 0.5
        cy = pose.joints[j, 1] / stride_y - 0.5
        g = np.exp(-((cols[None, :] - cx) ** 2 + (rows[:, None] - cy) ** 2) / (2.0 * sigma ** 2))
        maps[j] = g
    return Heatmap2D(maps=maps, sigma=sigma)


def bbox_from_pose(pose: Pose2D, margin_factor: float = 1.2,
                   keep_threshold: float = 0.1, aspect: float = 1.0) -> BBox:
    """Tight box over confident joints, expanded about its center, then padded
    on the short side to the target width:height aspect (default square)."""
    kept = pose.confidence >= keep_threshold
    if kept.sum() < 2:
        raise DegeneratePoseError(
            f"bbox needs >= 2 joints with confidence >= {keep_threshold}, got {int(kept.sum())}")
    pts = pose.joints[kept]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * margin_factor
    half = np.maximum(half, 1e-3)
    w, h = 2 * half[0], 2 * half[1]
    if w / h < aspect:
        half[0] = 0.5 * aspect * h
    else:
        half[1] = 0.5 * w / aspect
    return BBox(center[0] - half[0], center[1] - half[1],
                center[0] + half[0], center[1] + half[1])


def crop_and_resize(image: np.ndarray, bbox: BBox,
                    out_size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly resample the bbox region to out_size=(height, width).

    Returns (crop, affine) where affine is the 2x3 map from original-image
    pixels to crop pixels; regions outside the image are zero-filled.
    """
    out_h, out_w = out_size
    s_x = out_w / bbox.width
    s_y = out_h / bbox.height
    affine = np.array([[s_x, 0.0, -bbox.x_min * s_x],
                       [0.0, s_y, -bbox.y_min * s_y]])

    us = np.arange(out_w) / s_x + bbox.x_min
    vs = np.arange(out_h) / s_y + bbox.y_min
    gx, gy = np.meshgrid(us, vs)
    crop = _bilinear_sample_zero(image, gx, gy)
    return crop, affine


def apply_affine(affine: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 2x3 affine to (N, 2) points."""
    return points @ affine[:, :2].T + affine[:, 2]


def invert_affine(affine: np.ndarray) -> np.ndarray:
    lin = np.linalg.inv(affine[:, :2])
    return np.concatenate([lin, -lin @ affine[:, 2:3]], axis=1)


def _bilinear_sample_zero(image: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Sample image at continuous (gx, gy); out-of-image reads as zero."""
    h, w = image.shape[:2]
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    fx, fy = gx - x0, gy - y0

    def fetch(xi, yi):
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = image[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        if image.ndim == 3:
            return np.where(inside[..., None], vals, 0.0)
        return np.where(inside, vals, 0.0)

    wx, wy = (fx[..., None], fy[..., None]) if image.ndim == 3 else (fx, fy)
    top = fetch(x0, y0) * (1 - wx) + fetch(x0 + 1, y0) * wx
    bot = fetch(x0, y0 + 1) * (1 - wx) + fetch(x0 + 1, y0 + 1) * wx
    return top * (1 - wy) + bot * wy
