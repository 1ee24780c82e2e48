"""End-to-end training with per-epoch checkpoints and a JSON loss log.

Adam with the configured step schedule (the learning rate drops by the decay
factor after each configured epoch). Fully seeded: model init, per-epoch data
order, and error synthesis all derive from the run seed, so identical
(seed, config) runs reproduce identical loss curves.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from . import joints as J
from .body_model import BodyModel, build_body_model, decode_vertices, regress_joints
from .config import TrainConfig, config_to_json
from .data import collate, prepare_epoch
from .errors import SampleParseError
from .losses import SupervisionMask, loss_coord_shape, loss_param, loss_pose, total_loss
from .model import CrowdPoseNet, build_model, save_checkpoint
from .scene import load_split
from .shapenet import project_weak_persp

MM_PER_UNIT = 1000.0


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate during a 1-based epoch: decayed after each decay epoch."""
    drops = sum(1 for d in cfg.lr_decay_epochs if epoch > d)
    return cfg.learning_rate / (cfg.lr_decay_factor ** drops)


def shape_supervision(model: CrowdPoseNet, body: BodyModel, out: dict,
                      batch: dict, cfg: TrainConfig) -> dict[str, torch.Tensor]:
    """Loss terms for one forward pass (pose head, parameters, coordinates)."""
    j_c = model.config.num_common
    mask_c = SupervisionMask.all_valid(j_c, batch["crop"].shape[0])
    parts = {}
    if model.config.variant != "no_posenet":
        parts["pose"] = loss_pose(out["pose3d"], batch["target_pose3d"], mask_c)

    parts["param"] = loss_param(out["theta_g"], out["theta"], out["beta"],
                                batch["theta_g"], batch["theta"], batch["beta"],
                                SupervisionMask.all_valid(j_c))

    verts = decode_vertices(body, out["theta_g"], out["theta"], out["beta"])
    joints_units = regress_joints(body, verts)  # (B, J_s, 3) model units
    root = joints_units[:, J.ROOT_SUPERSET_INDEX:J.ROOT_SUPERSET_INDEX + 1]
    centered = joints_units - root
    pred_3d = centered * MM_PER_UNIT
    pred_2d = project_weak_persp(centered, out["cam"], cfg.crop_size)
    j_s = pred_3d.shape[1]
    mask_s = SupervisionMask.all_valid(j_s, batch["crop"].shape[0])
    parts["coord"] = loss_coord_shape(pred_3d, pred_2d,
                                      batch["gt_joints3d"], batch["gt_joints2d"], mask_s)
    return parts


def _loss_weights(cfg: TrainConfig) -> dict[str, float]:
    return {"pose": cfg.loss_weight_pose, "param": cfg.loss_weight_param,
            "coord": cfg.loss_weight_coord}


def train(cfg: TrainConfig, body: BodyModel | None = None,
          max_steps: int | None = None, quiet: bool = False) -> dict:
    """Run training; returns a summary dict with checkpoint and log paths."""
    if not cfg.dataset or not Path(cfg.dataset).exists():
        raise SampleParseError(f"dataset {cfg.dataset!r} does not exist")
    samples = load_split(cfg.dataset, "train")
    if not samples:
        raise SampleParseError(f"dataset {cfg.dataset!r} has an empty train split")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config_to_json(cfg))

    body = body if body is not None else build_body_model(cfg.body.seed, cfg.body)
    model = build_model(cfg.net, seed=cfg.seed)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    weights = _loss_weights(cfg)

    log: list[dict] = []
    step = 0
    stop = False
    for epoch in range(1, cfg.epochs + 1):
        lr = lr_at_epoch(cfg, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        rng = np.random.default_rng((cfg.seed, epoch))
        items = prepare_epoch(samples, cfg, rng)
        order = rng.permutation(len(items))

        for start in range(0, len(items), cfg.batch_size):
            batch_items = [items[i] for i in order[start:start + cfg.batch_size]]
            if len(batch_items) < 2 and len(items) > 1:
                continue  # size-1 remainders break batch-norm statistics
            batch = collate(batch_items)
            out = model(batch["crop"], batch["heatmaps"], batch["input_pose"])
            parts = shape_supervision(model, body, out, batch, cfg)
            loss = total_loss(parts, weights)

            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at step {step}: "
                    + ", ".join(f"{k}={v.item():.4g}" for k, v in parts.items()))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            record = {"step": step, "epoch": epoch, "lr": lr,
                      "total": float(loss.item())}
            record.update({k: float(v.item()) for k, v in parts.items()})
            log.append(record)
            step += 1
            if max_steps is not None and step >= max_steps:
                stop = True
                break

        save_checkpoint(model, out_dir / f"epoch_{epoch:03d}.npz",
                        extra={"epoch": epoch, "step": step, "lr": lr})
        if not quiet:
            epoch_losses = [r["total"] for r in log if r["epoch"] == epoch]
            print(f"epoch {epoch}: lr {lr:.2e}  mean loss {np.mean(epoch_losses):.4f}")
        if stop:
            break

    final = out_dir / "final.npz"
    save_checkpoint(model, final, extra={"epoch": cfg.epochs, "step": step})
    (out_dir / "train_log.json").write_text(json.dumps(log, indent=0))
    return {
        "checkpoint": str(final),
        "log": str(out_dir / "train_log.json"),
        "steps": step,
        "first_loss": log[0]["total"] if log else None,
        "last_loss": log[-1]["total"] if log else None,
        "records": log,
    }
