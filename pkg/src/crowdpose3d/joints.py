"""Skeleton topology and joint-set conventions.

The kinematic skeleton has up to 16 joints (pelvis root + 15 articulated
joints). Annotation joint sets are expressed against a *superset* of 19
joints: the 16 skeleton joints plus 3 derived midpoints. Smaller named
conventions (the 15-joint "common" set used by the 3D pose head and the
graph regressor, a 12-joint limbs-only set) map into the superset through
a registry; joints a source set lacks become don't-care channels.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError

# skeleton joints in topological order (parent index always < joint index)
SKELETON_NAMES = [
    "pelvis", "thorax", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
]
SKELETON_PARENTS = [-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14]

# rest positions, model units (1 unit = 1 m), camera convention: x right, y down
SKELETON_REST = np.array([
    [0.00, 0.00, 0.00],    # pelvis
    [0.00, -0.28, 0.00],   # thorax
    [0.00, -0.54, 0.00],   # neck
    [0.00, -0.72, 0.00],   # head
    [0.19, -0.50, 0.00],   # l_shoulder
    [0.24, -0.22, 0.00],   # l_elbow
    [0.26, 0.04, 0.00],    # l_wrist
    [-0.19, -0.50, 0.00],  # r_shoulder
    [-0.24, -0.22, 0.00],  # r_elbow
    [-0.26, 0.04, 0.00],   # r_wrist
    [0.10, 0.04, 0.00],    # l_hip
    [0.12, 0.48, 0.00],    # l_knee
    [0.13, 0.92, 0.00],    # l_ankle
    [-0.10, 0.04, 0.00],   # r_hip
    [-0.12, 0.48, 0.00],   # r_knee
    [-0.13, 0.92, 0.00],   # r_ankle
], dtype=np.float64)

# capsule radius of the bone ending at each joint (root owns a short pelvis capsule)
BONE_RADII = np.array([
    0.11, 0.13, 0.10, 0.11,
    0.06, 0.05, 0.04,
    0.06, 0.05, 0.04,
    0.08, 0.07, 0.05,
    0.08, 0.07, 0.05,
], dtype=np.float64)

# derived superset joints: midpoints of two skeleton joints
DERIVED_JOINTS = [
    ("mid_torso", 0, 1),
    ("l_forearm", 5, 6),
    ("r_forearm", 8, 9),
]

ROOT_SUPERSET_INDEX = 0  # pelvis


def superset_names(num_skeleton_joints: int = 16) -> list[str]:
    """Superset joint names for a model with the given skeleton size."""
    names = list(SKELETON_NAMES[:num_skeleton_joints])
    for name, a, b in DERIVED_JOINTS:
        if a < num_skeleton_joints and b < num_skeleton_joints:
            names.append(name)
    return names


def derived_pairs(num_skeleton_joints: int = 16) -> list[tuple[int, int]]:
    """(endpoint, endpoint) skeleton indices of each derived superset joint."""
    return [(a, b) for _, a, b in DERIVED_JOINTS
            if a < num_skeleton_joints and b < num_skeleton_joints]


def num_superset(num_skeleton_joints: int = 16) -> int:
    return len(superset_names(num_skeleton_joints))


# left/right counterpart pairs in superset index space (full 16-joint skeleton)
LEFT_RIGHT_PAIRS = [(4, 7), (5, 8), (6, 9), (10, 13), (11, 14), (12, 15), (17, 18)]

# 15-joint common set: the joints shared by typical annotation conventions
COMMON_SET = [0, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]

# limbs-only 12-joint convention (shoulders/elbows/wrists/hips/knees/ankles)
LIMBS12_SET = [4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]

# skeleton edges restricted to the common set, in local common-set indices
COMMON_EDGES = [
    (0, 1), (1, 2),
    (1, 3), (3, 4), (4, 5),
    (1, 6), (6, 7), (7, 8),
    (0, 9), (9, 10), (10, 11),
    (0, 12), (12, 13), (13, 14),
]


def default_registry(num_skeleton_joints: int = 16) -> dict[str, list[int | None]]:
    """Registry mapping each named convention to superset indices.

    Entry ``registry[set_name][i]`` is the superset index of the set's
    ``i``-th joint, or None when that joint has no superset counterpart.
    """
    j_s = num_superset(num_skeleton_joints)
    return {
        "superset": list(range(j_s)),
        "common15": list(COMMON_SET),
        "limbs12": list(LIMBS12_SET),
    }


def left_right_map(j_s: int = 19) -> np.ndarray:
    """Per-superset-joint index of the mirrored counterpart (self if unpaired)."""
    out = np.arange(j_s)
    for a, b in LEFT_RIGHT_PAIRS:
        if a < j_s and b < j_s:
            out[a], out[b] = b, a
    return out


def save_registry(registry: dict[str, list[int | None]], path: str | Path) -> None:
    Path(path).write_text(json.dumps(registry, indent=1))


def load_registry(path: str | Path) -> dict[str, list[int | None]]:
    registry = json.loads(Path(path).read_text())
    if "superset" not in registry:
        raise ConfigError(f"joint-set registry {path} lacks the 'superset' entry")
    return registry
