"""Dataclass configs and JSON round-tripping with dotted-path overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError


@dataclass(frozen=True)
class BodyConfig:
    """Procedural body model size parameters."""
    seed: int = 0
    num_joints: int = 16      # skeleton joints incl. the pelvis root
    verts_per_bone: int = 24  # 8 marker verts + >=1 surface ring of 8
    num_betas: int = 10
    regressor_neighbors: int = 8


@dataclass(frozen=True)
class ErrorSynthConfig:
    """Per-joint error events applied to clean 2D poses during training."""
    p_jitter: float = 0.25
    jitter_sigma_px: float | None = None  # None: jitter_sigma_frac * bbox diagonal
    jitter_sigma_frac: float = 0.05
    p_miss: float = 0.10
    p_inversion: float = 0.05
    p_swap: float = 0.05
    miss_confidence: float = 0.0


@dataclass(frozen=True)
class NetConfig:
    """Architecture dimensions for the guided backbone and both heads."""
    crop_size: int = 64
    early_channels: int = 32   # C
    late_channels: int = 128   # C'
    blocks_per_stage: int = 2
    depth_bins: int = 8        # D
    graph_channels: int = 64   # C_g
    depth_range_mm: float = 1000.0
    num_superset: int = 19     # J_s
    num_common: int = 15       # J_c
    k_pose: int = 15
    variant: str = "guided"    # guided | unguided | hmr | no_posenet
    normalize_fs_coords: bool = True

    @property
    def heatmap_size(self) -> int:
        return self.crop_size // 4


@dataclass(frozen=True)
class SceneConfig:
    """Synthetic crowd-scene generator parameters."""
    n_persons: int = 2
    overlap_target: float = 0.4
    overlap_tolerance: float = 0.15
    max_attempts: int = 100
    image_size: int = 256
    focal_px: float = 500.0
    depth_base_m: float = 4.5
    depth_step_m: float = 0.45
    pose_range_rad: float = 0.6
    global_rot_range_rad: float = 0.5
    # shape directions are unit-RMS (meters per unit beta), so +/-0.12 keeps
    # body deformations in a plausible +/-12 cm band
    beta_range: float = 0.12
    # 0: independent person colors; 1: identical. High values mimic the hard
    # crowd case of similarly dressed people
    color_similarity: float = 0.0
    body: BodyConfig = field(default_factory=BodyConfig)


@dataclass(frozen=True)
class TrainConfig:
    """End-to-end training/evaluation run configuration."""
    dataset: str = ""
    out_dir: str = "runs/default"
    batch_size: int = 64
    learning_rate: float = 1e-4
    epochs: int = 6
    lr_decay_epochs: tuple[int, ...] = (3, 5)
    lr_decay_factor: float = 10.0
    crop_size: int = 256
    heatmap_sigma: float | None = None  # None: 2.0 for 16x16 grids, else 2.5
    keep_threshold: float = 0.1
    bbox_margin: float = 1.2
    loss_weight_pose: float = 1.0
    loss_weight_param: float = 1.0
    loss_weight_coord: float = 1.0
    seed: int = 0
    synth_errors: bool = True
    errors: ErrorSynthConfig = field(default_factory=ErrorSynthConfig)
    net: NetConfig = field(default_factory=NetConfig)
    body: BodyConfig = field(default_factory=BodyConfig)

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0 or self.crop_size <= 0:
            raise ConfigError("batch_size, epochs and crop_size must be positive")
        if any(e >= self.epochs for e in self.lr_decay_epochs):
            raise ConfigError("lr_decay_epochs must be < epochs")
        if self.net.crop_size != self.crop_size:
            object.__setattr__(self, "net", dataclasses.replace(self.net, crop_size=self.crop_size))

    @property
    def sigma(self) -> float:
        if self.heatmap_sigma is not None:
            return self.heatmap_sigma
        return 2.0 if self.crop_size // 4 <= 16 else 2.5


def desk_train_config(**overrides) -> TrainConfig:
    """Desk-scale profile: 64px crops, small batches, runs CPU-only in minutes."""
    base = dict(batch_size=16, crop_size=64)
    base.update(overrides)
    return TrainConfig(**base)


def full_scale_config(**overrides) -> TrainConfig:
    """Full-scale profile (256px crops, batch 64) kept configurable."""
    base = dict(
        batch_size=64, crop_size=256,
        net=NetConfig(crop_size=256, early_channels=64, late_channels=512, depth_bins=64),
    )
    base.update(overrides)
    return TrainConfig(**base)


def _from_dict(cls, data: dict[str, Any]):
    nested = {"errors": ErrorSynthConfig, "net": NetConfig, "body": BodyConfig}
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if f.name in nested and isinstance(value, dict):
            value = _from_dict(nested[f.name], value)
        elif f.name == "lr_decay_epochs" and isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ConfigError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**kwargs)


def train_config_from_dict(data: dict[str, Any]) -> TrainConfig:
    return _from_dict(TrainConfig, data)


def scene_config_from_dict(data: dict[str, Any]) -> SceneConfig:
    return _from_dict(SceneConfig, data)


def load_train_config(path: str | Path) -> TrainConfig:
    return train_config_from_dict(json.loads(Path(path).read_text()))


def save_train_config(config: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(config_to_json(config))


def config_to_json(config) -> str:
    return json.dumps(dataclasses.asdict(config), indent=1)


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``dotted.path=value`` overrides onto a nested config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} descends into non-dict key {key!r}")
        node[leaf] = value
    return data
