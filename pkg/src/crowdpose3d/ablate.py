"""Ablation harness: train architecture variants under identical protocols.

Each variant differs only by its config switch (heatmap guide zeroed, pooled
HMR-style regressor, joint features sampled at the input pose); seeds,
schedules, and data are shared, and every variant is scored on the same
held-out overlap split.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .body_model import BodyModel, build_body_model
from .config import TrainConfig
from .evaluate import evaluate_samples, guided_activation_stats
from .model import VARIANTS, load_checkpoint
from .scene import load_split
from .train import train


def run_variant(cfg: TrainConfig, variant: str, body: BodyModel | None = None,
                eval_split: str = "heldout", quiet: bool = True) -> dict:
    """Train one variant and evaluate it; returns the report row."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; one of {VARIANTS}")
    var_cfg = dataclasses.replace(
        cfg,
        out_dir=str(Path(cfg.out_dir) / f"{variant}_seed{cfg.seed}"),
        net=dataclasses.replace(cfg.net, variant=variant),
    )
    body = body if body is not None else build_body_model(cfg.body.seed, cfg.body)
    result = train(var_cfg, body=body, quiet=quiet)
    model = load_checkpoint(result["checkpoint"])
    samples = load_split(cfg.dataset, eval_split)
    report = evaluate_samples(model, samples, var_cfg, body=body)
    row = {
        "variant": variant,
        "seed": cfg.seed,
        "checkpoint": result["checkpoint"],
        "mpjpe_mm": report.mpjpe_mm,
        "pa_mpjpe_mm": report.pa_mpjpe_mm,
        "pck3d_percent": report.pck3d_percent,
        "mpvpe_mm": report.mpvpe_mm,
        "final_loss": result["last_loss"],
    }
    if variant == "guided":
        row["activation"] = guided_activation_stats(model, samples, var_cfg)
    return row


def ablation_run(cfg: TrainConfig, variants: tuple[str, ...] = VARIANTS,
                 eval_split: str = "heldout", quiet: bool = True) -> dict:
    """Side-by-side variant table on the held-out overlap split."""
    body = build_body_model(cfg.body.seed, cfg.body)
    rows = [run_variant(cfg, variant, body, eval_split, quiet) for variant in variants]
    report = {"seed": cfg.seed, "eval_split": eval_split, "rows": rows}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(report, indent=1))
    (out / "ablation.txt").write_text(ablation_table(rows) + "\n")
    return report


def ablation_table(rows: list[dict]) -> str:
    header = f"{'variant':>12} {'seed':>4} {'mpjpe':>10} {'pa_mpjpe':>10} {'pck3d':>8} {'mpvpe':>10}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row['variant']:>12} {row['seed']:>4} {row['mpjpe_mm']:>10.2f} "
                     f"{row['pa_mpjpe_mm']:>10.2f} {row['pck3d_percent']:>8.2f} "
                     f"{row['mpvpe_mm']:>10.2f}")
    return "\n".join(lines)
