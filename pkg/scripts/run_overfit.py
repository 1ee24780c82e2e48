"""Overfit sanity experiment: 16 single-person scenes, 500 steps, desk profile.

Generates the toy dataset if needed, trains with a flat learning rate, and
reports the loss drop plus evaluate-on-train MPJPE against the untrained
initialization. Mirrors acceptance criterion 6.

Usage: python scripts/run_overfit.py [--out runs/overfit]
"""

import argparse
import dataclasses
from pathlib import Path

from crowdpose3d.body_model import build_body_model
from crowdpose3d.config import SceneConfig, desk_train_config
from crowdpose3d.evaluate import evaluate_samples
from crowdpose3d.model import build_model, load_checkpoint
from crowdpose3d.scene import generate_dataset, load_split
from crowdpose3d.train import train


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/overfit")
    parser.add_argument("--steps", type=int, default=500)
    args = parser.parse_args()

    out = Path(args.out)
    dataset = out / "dataset"
    if not (dataset / "index.json").exists():
        scene_cfg = dataclasses.replace(SceneConfig(), n_persons=1, overlap_target=0.0)
        generate_dataset(dataset, scene_cfg, base_seed=0, splits={"train": 16})

    cfg = desk_train_config(dataset=str(dataset), out_dir=str(out / "run"),
                            epochs=args.steps, lr_decay_epochs=(), seed=0,
                            synth_errors=False)
    result = train(cfg, quiet=False)
    print(f"loss {result['first_loss']:.2f} -> {result['last_loss']:.2f} "
          f"({result['first_loss'] / result['last_loss']:.1f}x)")

    body = build_body_model(0)
    samples = load_split(cfg.dataset, "train")
    trained = evaluate_samples(load_checkpoint(result["checkpoint"]), samples, cfg, body=body)
    untrained = evaluate_samples(build_model(cfg.net, seed=cfg.seed), samples, cfg, body=body)
    print(f"evaluate-on-train MPJPE: untrained {untrained.mpjpe_mm:.1f} mm -> "
          f"trained {trained.mpjpe_mm:.1f} mm "
          f"({untrained.mpjpe_mm / trained.mpjpe_mm:.1f}x)")


if __name__ == "__main__":
    main()
