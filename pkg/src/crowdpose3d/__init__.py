"""2D-pose-guided 3D human pose and shape estimation on synthetic crowd scenes."""

from .body_model import (
    BodyModel,
    BodyParams,
    Mesh,
    build_body_model,
    decode,
    decode_vertices,
    forward_kinematics,
    load_model,
    regress_joints,
    rodrigues,
    save_model,
)
from .config import (
    BodyConfig,
    ErrorSynthConfig,
    NetConfig,
    SceneConfig,
    TrainConfig,
    desk_train_config,
    full_scale_config,
)
from .metrics import MetricsReport, bbox_iou, crowd_index, mpjpe, mpvpe, pa_mpjpe, pck3d
from .model import CrowdPoseNet, build_model, load_checkpoint, save_checkpoint
from .pose2d import BBox, Heatmap2D, Pose2D
from .scene import SceneSample, generate_dataset, generate_scene, read_sample, write_sample

__all__ = [
    "BodyModel", "BodyParams", "Mesh", "build_body_model", "decode",
    "decode_vertices", "forward_kinematics", "load_model", "regress_joints",
    "rodrigues", "save_model",
    "BodyConfig", "ErrorSynthConfig", "NetConfig", "SceneConfig", "TrainConfig",
    "desk_train_config", "full_scale_config",
    "MetricsReport", "bbox_iou", "crowd_index", "mpjpe", "mpvpe", "pa_mpjpe", "pck3d",
    "CrowdPoseNet", "build_model", "load_checkpoint", "save_checkpoint",
    "BBox", "Heatmap2D", "Pose2D",
    "SceneSample", "generate_dataset", "generate_scene", "read_sample", "write_sample",
]
