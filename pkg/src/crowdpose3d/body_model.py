"""Miniature parametric body model with an SMPL-style interface.

The template is a procedurally generated capsule body: every skeleton joint
owns one bone capsule (the root owns a short pelvis capsule) sampled as rings
of 8 vertices. Each bone contributes one tiny "marker" ring centered exactly
on its joint plus one or more surface rings; marker rings make the nearest-
neighbor joint regressor exact by construction. Parameters follow the SMPL
convention: global rotation theta_g in R^3, per-joint axis-angle theta in
R^{K_pose x 3}, shape coefficients beta in R^10, decoded by linear blend
skinning to a mesh from which superset joints are regressed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import joints as J
from .config import BodyConfig
from .errors import ConfigError, SampleParseError, ShapeMismatchError, UnsupportedVersionError

MODEL_FORMAT = "crowdpose3d-body-model"
MODEL_VERSION = 1

MARKER_RING_RADIUS = 0.012
RING_SIZE = 8


@dataclass
class BodyParams:
    """SMPL-style parameter block: global rotation, pose, shape, camera."""
    theta_g: torch.Tensor  # (3,) axis-angle, radians
    theta: torch.Tensor    # (K_pose, 3) axis-angle, radians
    beta: torch.Tensor     # (num_betas,)
    k: torch.Tensor        # (3,) weak-perspective camera: scale, tx, ty (crop px)

    @staticmethod
    def zeros(k_pose: int = 15, num_betas: int = 10, dtype=torch.float32) -> "BodyParams":
        return BodyParams(
            theta_g=torch.zeros(3, dtype=dtype),
            theta=torch.zeros(k_pose, 3, dtype=dtype),
            beta=torch.zeros(num_betas, dtype=dtype),
            k=torch.tensor([1.0, 0.0, 0.0], dtype=dtype),
        )


@dataclass
class Mesh:
    vertices: torch.Tensor  # (V, 3) model units
    faces: np.ndarray       # (F, 3) int


@dataclass
class BodyModel:
    """Immutable after construction; decode() is a pure function of params."""
    template_vertices: np.ndarray  # (V, 3)
    shape_dirs: np.ndarray         # (V, 3, num_betas)
    skin_weights: np.ndarray       # (V, K)
    joint_regressor: np.ndarray    # (J_s, V)
    kinematic_tree: np.ndarray     # (K,) parent index, -1 for root
    rest_joints: np.ndarray        # (K, 3)
    faces: np.ndarray              # (F, 3)
    bone_radii: np.ndarray         # (K,) capsule radius of the bone ending at each joint
    seed: int
    config: BodyConfig
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_joints(self) -> int:
        return self.rest_joints.shape[0]

    @property
    def k_pose(self) -> int:
        return self.num_joints - 1

    @property
    def num_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def num_superset(self) -> int:
        return self.joint_regressor.shape[0]

    def tensors(self, dtype=torch.float32) -> dict[str, torch.Tensor]:
        """Torch views of the model arrays, cached per dtype."""
        if dtype not in self._cache:
            self._cache[dtype] = {
                "template": torch.as_tensor(self.template_vertices, dtype=dtype),
                "shape_dirs": torch.as_tensor(self.shape_dirs, dtype=dtype),
                "skin_weights": torch.as_tensor(self.skin_weights, dtype=dtype),
                "joint_regressor": torch.as_tensor(self.joint_regressor, dtype=dtype),
                "rest_joints": torch.as_tensor(self.rest_joints, dtype=dtype),
            }
        return self._cache[dtype]


def _ring(center: np.ndarray, axis: np.ndarray, radius: float, phase: float = 0.0) -> np.ndarray:
    """8 points on a circle of the given radius, centered exactly on center."""
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    w = np.cross(axis, u)
    ang = phase + 2.0 * np.pi * np.arange(RING_SIZE) / RING_SIZE
    return center[None, :] + radius * (np.cos(ang)[:, None] * u[None, :]
                                       + np.sin(ang)[:, None] * w[None, :])


def _bone_segment(rest: np.ndarray, parents: list[int], j: int) -> tuple[np.ndarray, np.ndarray]:
    """(proximal, distal) endpoints of the capsule owned by joint j."""
    if parents[j] < 0:
        half = np.array([0.0, 0.06, 0.0])
        return rest[j] - half, rest[j] + half
    return rest[parents[j]], rest[j]


def _smooth_fields(rng: np.random.Generator, verts: np.ndarray, n_modes: int) -> np.ndarray:
    """Seeded low-frequency sinusoidal displacement fields, (V, 3, n_modes)."""
    out = np.zeros((verts.shape[0], 3, n_modes))
    for m in range(n_modes):
        for axis in range(3):
            freq = rng.uniform(-3.0, 3.0, size=3)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.5, 1.0)
            out[:, axis, m] = amp * np.sin(verts @ freq + phase)
    return out


def build_body_model(seed: int, config: BodyConfig | None = None) -> BodyModel:
    """Construct the procedural capsule body deterministically from a seed.

    Raises ConfigError for undersized configs (fewer than 8 joints, or too few
    vertices per bone to hold a marker ring plus one surface ring).
    """
    if config is None:
        config = BodyConfig(seed=seed)
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    if config.num_joints < 8:
        raise ConfigError(f"need at least 8 joints, got {config.num_joints}")
    if config.num_joints > len(J.SKELETON_NAMES):
        raise ConfigError(f"at most {len(J.SKELETON_NAMES)} joints supported")
    if config.verts_per_bone < 2 * RING_SIZE or config.verts_per_bone % RING_SIZE:
        raise ConfigError("verts_per_bone must be a multiple of 8 and >= 16")

    k = config.num_joints
    parents = list(J.SKELETON_PARENTS[:k])
    rest = J.SKELETON_REST[:k].copy()
    radii = J.BONE_RADII[:k].copy()
    rng = np.random.default_rng(seed)

    n_surface_rings = config.verts_per_bone // RING_SIZE - 1
    verts = []
    weights = []
    marker_rows = np.zeros(k, dtype=np.int64)  # start row of each joint's marker ring
    faces = []
    row = 0

    for j in range(k):
        a, b = _bone_segment(rest, parents, j)
        axis = b - a
        parent = parents[j] if parents[j] >= 0 else j

        marker_rows[j] = row
        verts.append(_ring(rest[j], axis, MARKER_RING_RADIUS))
        w = np.zeros((RING_SIZE, k))
        w[:, j] = 1.0
        weights.append(w)
        row += RING_SIZE

        ts = np.linspace(0.2, 0.85, n_surface_rings)
        ring_rows = []
        for t in ts:
            ring_rows.append(row)
            verts.append(_ring(a + t * axis, axis, radii[j], phase=np.pi / RING_SIZE))
            w = np.zeros((RING_SIZE, k))
            w[:, j] = t
            w[:, parent] += 1.0 - t
            weights.append(w)
            row += RING_SIZE
        for r0, r1 in zip(ring_rows[:-1], ring_rows[1:]):
            for i in range(RING_SIZE):
                i2 = (i + 1) % RING_SIZE
                faces.append([r0 + i, r0 + i2, r1 + i])
                faces.append([r1 + i, r0 + i2, r1 + i2])

    template = np.concatenate(verts, axis=0)
    skin_weights = np.concatenate(weights, axis=0)
    faces = np.asarray(faces, dtype=np.int32).reshape(-1, 3)

    # superset joint regressor: uniform weights over each joint's marker ring
    # (its 8 nearest template vertices); derived joints average two rings
    pairs = J.derived_pairs(k)
    j_s = k + len(pairs)
    regressor = np.zeros((j_s, template.shape[0]))
    for j in range(k):
        regressor[j, marker_rows[j]:marker_rows[j] + RING_SIZE] = 1.0 / RING_SIZE
    for i, (a, b) in enumerate(pairs):
        for end in (a, b):
            regressor[k + i, marker_rows[end]:marker_rows[end] + RING_SIZE] = 1.0 / (2 * RING_SIZE)

    shape_dirs = np.zeros((template.shape[0], 3, config.num_betas))
    root = rest[0]
    shape_dirs[:, :, 0] = template - root[None, :]  # global scale about the root
    torso = [j for j, name in enumerate(J.SKELETON_NAMES[:k])
             if name in ("pelvis", "thorax", "neck", "head")]
    torso_w = skin_weights[:, torso].sum(axis=1)
    shape_dirs[:, :, 1] = torso_w[:, None] * (template - root[None, :])
    arm_anchor = {"l_": 4, "r_": 7}   # shoulders
    leg_anchor = {"l_": 10, "r_": 13}  # hips
    limb_offset = np.zeros((k, 3))
    for j, name in enumerate(J.SKELETON_NAMES[:k]):
        side = name[:2]
        if side not in arm_anchor:
            continue
        anchor = arm_anchor[side] if name.split("_")[1] in ("shoulder", "elbow", "wrist") \
            else leg_anchor[side]
        if anchor < k and anchor != j:
            limb_offset[j] = rest[j] - rest[anchor]
    shape_dirs[:, :, 2] = skin_weights @ limb_offset  # limb lengthening
    if config.num_betas > 3:
        shape_dirs[:, :, 3:] = _smooth_fields(rng, template, config.num_betas - 3)
    rms = np.sqrt((shape_dirs ** 2).sum(axis=1).mean(axis=0))
    rms[rms == 0] = 1.0
    shape_dirs /= rms[None, None, :]

    model = BodyModel(
        template_vertices=template,
        shape_dirs=shape_dirs,
        skin_weights=skin_weights,
        joint_regressor=regressor,
        kinematic_tree=np.asarray(parents, dtype=np.int32),
        rest_joints=rest,
        faces=faces,
        bone_radii=radii,
        seed=seed,
        config=config,
    )
    _check_build(model)
    return model


def _check_build(model: BodyModel) -> None:
    if not np.allclose(model.skin_weights.sum(axis=1), 1.0, atol=1e-6):
        raise AssertionError("skin weight rows must sum to 1")
    if not np.allclose(model.joint_regressor.sum(axis=1), 1.0, atol=1e-6):
        raise AssertionError("joint regressor rows must sum to 1")
    regressed = model.joint_regressor @ model.template_vertices
    k = model.num_joints
    if np.abs(regressed[:k] - model.rest_joints).max() > 1e-5:
        raise AssertionError("regressed template joints must match rest joints")


def rodrigues(axis_angle: torch.Tensor) -> torch.Tensor:
    """Axis-angle vectors (..., 3) to rotation matrices (..., 3, 3).

    Numerically safe (Taylor branch) near zero so gradients stay finite.
    """
    theta_sq = (axis_angle ** 2).sum(dim=-1)
    small = theta_sq < 1e-12
    theta = torch.sqrt(torch.clamp(theta_sq, min=1e-12))
    sin_t, cos_t = torch.sin(theta), torch.cos(theta)
    a = torch.where(small, 1.0 - theta_sq / 6.0, sin_t / theta)
    b = torch.where(small, 0.5 - theta_sq / 24.0, (1.0 - cos_t) / theta_sq.clamp(min=1e-12))

    x, y, z = axis_angle[..., 0], axis_angle[..., 1], axis_angle[..., 2]
    zero = torch.zeros_like(x)
    hat = torch.stack([
        torch.stack([zero, -z, y], dim=-1),
        torch.stack([z, zero, -x], dim=-1),
        torch.stack([-y, x, zero], dim=-1),
    ], dim=-2)
    eye = torch.eye(3, dtype=axis_angle.dtype, device=axis_angle.device)
    eye = eye.expand(*axis_angle.shape[:-1], 3, 3)
    return eye + a[..., None, None] * hat + b[..., None, None] * (hat @ hat)


def _about(rotation: torch.Tensor, pivot: torch.Tensor) -> torch.Tensor:
    """4x4 transform rotating about a fixed pivot point, batched over leading dims."""
    batch = rotation.shape[:-2]
    out = torch.zeros(*batch, 4, 4, dtype=rotation.dtype, device=rotation.device)
    out[..., :3, :3] = rotation
    out[..., :3, 3] = pivot - (rotation @ pivot[..., :, None])[..., 0]
    out[..., 3, 3] = 1.0
    return out


def forward_kinematics(model: BodyModel, theta_g: torch.Tensor,
                       theta: torch.Tensor) -> torch.Tensor:
    """Per-joint world transforms, ([B,] K, 4, 4).

    The root rotates by theta_g about the rest pelvis; each child composes its
    parent's transform with a local rotation about its own rest position.
    """
    batched = theta_g.dim() == 2
    if not batched:
        theta_g, theta = theta_g[None], theta[None]
    if theta.shape[-2] != model.k_pose:
        raise ShapeMismatchError(f"theta must have {model.k_pose} joints, got {theta.shape[-2]}")
    rest = model.tensors(theta_g.dtype)["rest_joints"]
    local = rodrigues(torch.cat([theta_g[:, None, :], theta], dim=1))  # (B, K, 3, 3)
    transforms = [_about(local[:, 0], rest[0])]
    for j in range(1, model.num_joints):
        parent = int(model.kinematic_tree[j])
        transforms.append(transforms[parent] @ _about(local[:, j], rest[j]))
    out = torch.stack(transforms, dim=1)
    return out if batched else out[0]


def posed_joints(model: BodyModel, transforms: torch.Tensor) -> torch.Tensor:
    """Skeleton joint positions under FK transforms, ([B,] K, 3)."""
    rest = model.tensors(transforms.dtype)["rest_joints"]
    hom = torch.cat([rest, torch.ones_like(rest[:, :1])], dim=1)
    return (transforms @ hom[..., :, :, None])[..., :3, 0]


def decode(model: BodyModel, params: BodyParams) -> Mesh:
    """Shape-blend the template, then linear-blend-skin it with FK transforms."""
    verts = decode_vertices(model, params.theta_g, params.theta, params.beta)
    return Mesh(vertices=verts, faces=model.faces)


def decode_vertices(model: BodyModel, theta_g: torch.Tensor, theta: torch.Tensor,
                    beta: torch.Tensor) -> torch.Tensor:
    """Decoded mesh vertices, ([B,] V, 3); differentiable in all parameters."""
    batched = theta_g.dim() == 2
    if not batched:
        theta_g, theta, beta = theta_g[None], theta[None], beta[None]
    t = model.tensors(theta_g.dtype)
    shaped = t["template"][None] + torch.einsum("vcb,nb->nvc", t["shape_dirs"], beta)
    transforms = forward_kinematics(model, theta_g, theta)  # (B, K, 4, 4)
    vertex_tf = torch.einsum("vk,nkij->nvij", t["skin_weights"], transforms)
    verts = (vertex_tf[..., :3, :3] @ shaped[..., None])[..., 0] + vertex_tf[..., :3, 3]
    return verts if batched else verts[0]


def regress_joints(model: BodyModel, mesh: Mesh | torch.Tensor) -> torch.Tensor:
    """Superset joints ([B,] J_s, 3) as the fixed linear map of mesh vertices."""
    verts = mesh.vertices if isinstance(mesh, Mesh) else mesh
    if verts.shape[-2] != model.num_vertices:
        raise ShapeMismatchError(
            f"mesh has {verts.shape[-2]} vertices, model expects {model.num_vertices}")
    return model.tensors(verts.dtype)["joint_regressor"] @ verts


_FIELDS = [
    ("template_vertices", "<f4"),
    ("shape_dirs", "<f4"),
    ("skin_weights", "<f4"),
    ("joint_regressor", "<f4"),
    ("rest_joints", "<f4"),
    ("bone_radii", "<f4"),
    ("kinematic_tree", "<i4"),
    ("faces", "<i4"),
]


def save_model(model: BodyModel, path: str | Path) -> None:
    """Single-file archive: one-line JSON header, then raw little-endian blocks."""
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "endianness": "little",
        "seed": model.seed,
        "config": {
            "seed": model.config.seed,
            "num_joints": model.config.num_joints,
            "verts_per_bone": model.config.verts_per_bone,
            "num_betas": model.config.num_betas,
            "regressor_neighbors": model.config.regressor_neighbors,
        },
        "K": model.num_joints,
        "V": model.num_vertices,
        "F": int(model.faces.shape[0]),
        "fields": [
            {"name": name, "dtype": dtype, "shape": list(getattr(model, name).shape)}
            for name, dtype in _FIELDS
        ],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name, dtype in _FIELDS:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype=dtype).tobytes())


def load_model(path: str | Path) -> BodyModel:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise SampleParseError("model file has no header line", offset=len(raw))
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SampleParseError(f"bad model header: {exc}", offset=0) from exc
    if header.get("format") != MODEL_FORMAT:
        raise SampleParseError(f"not a body model file: {header.get('format')!r}", offset=0)
    if header.get("version") != MODEL_VERSION:
        raise UnsupportedVersionError(
            f"body model version {header.get('version')} unsupported (expected {MODEL_VERSION})")

    arrays = {}
    offset = newline + 1
    for spec in header["fields"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        end = offset + count * dtype.itemsize
        if end > len(raw):
            raise SampleParseError(f"model file truncated in field {spec['name']!r}",
                                   offset=offset)
        arrays[spec["name"]] = np.frombuffer(raw[offset:end], dtype=dtype).reshape(spec["shape"]).copy()
        offset = end
    config = BodyConfig(**header["config"])
    return BodyModel(
        template_vertices=arrays["template_vertices"].astype(np.float64),
        shape_dirs=arrays["shape_dirs"].astype(np.float64),
        skin_weights=arrays["skin_weights"].astype(np.float64),
        joint_regressor=arrays["joint_regressor"].astype(np.float64),
        kinematic_tree=arrays["kinematic_tree"],
        rest_joints=arrays["rest_joints"].astype(np.float64),
        faces=arrays["faces"],
        bone_radii=arrays["bone_radii"].astype(np.float64),
        seed=header["seed"],
        config=config,
    )
