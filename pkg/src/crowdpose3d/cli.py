"""Command-line interface.

Subcommands: generate, train, eval, infer, ablate, visualize. Run
configuration comes from a JSON file (see docs/config.md); individual keys
can be overridden with repeated --set dotted.path=value flags. Exits 0 on
success, nonzero with a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import apply_overrides, scene_config_from_dict, train_config_from_dict
from .errors import ConfigError


def _load_config(args) -> TrainConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    data = apply_overrides(data, args.set or [])
    return train_config_from_dict(data)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                        help="override a config key (repeatable)")


def cmd_generate(args) -> int:
    from .scene import generate_dataset

    data = json.loads(Path(args.config).read_text()) if args.config else {}
    data = apply_overrides(data, args.set or [])
    scene_cfg = scene_config_from_dict(data)
    splits = {}
    for spec in args.split:
        name, _, count = spec.partition("=")
        if not count.isdigit():
            raise ConfigError(f"--split expects name=count, got {spec!r}")
        splits[name] = int(count)
    index = generate_dataset(args.out, scene_cfg, args.seed, splits)
    total = sum(len(v) for v in index["splits"].values())
    print(f"wrote {total} scenes to {args.out} "
          f"({', '.join(f'{k}: {len(v)}' for k, v in index['splits'].items())})")
    return 0


def cmd_train(args) -> int:
    from .train import train

    cfg = _load_config(args)
    if args.dataset:
        cfg = dataclasses.replace(cfg, dataset=args.dataset)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    result = train(cfg, quiet=False)
    print(f"final checkpoint: {result['checkpoint']}  "
          f"loss {result['first_loss']:.4f} -> {result['last_loss']:.4f}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate

    cfg = _load_config(args)
    if args.dataset:
        cfg = dataclasses.replace(cfg, dataset=args.dataset)
    report = evaluate(args.checkpoint, cfg.dataset, args.split, cfg,
                      synth_errors=args.synth_errors, oracle=args.oracle,
                      joint_records_path=args.dump_joints)
    print(report.to_table())
    if args.out:
        report.save(args.out, Path(args.out).with_suffix(".txt"))
        print(f"report written to {args.out}")
    return 0


def cmd_infer(args) -> int:
    from .infer import infer, load_image, load_pose_file
    from .model import load_checkpoint

    cfg = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    cfg = dataclasses.replace(cfg, crop_size=model.config.crop_size)
    paths = infer(model, load_image(args.image), load_pose_file(args.pose),
                  cfg, out_dir=args.out, stem=args.stem)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def cmd_ablate(args) -> int:
    from .ablate import ablation_run, ablation_table

    cfg = _load_config(args)
    if args.dataset:
        cfg = dataclasses.replace(cfg, dataset=args.dataset)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    report = ablation_run(cfg, variants=tuple(args.variants), eval_split=args.split)
    print(ablation_table(report["rows"]))
    return 0


def cmd_visualize(args) -> int:
    from .infer import draw_points, save_image
    from .scene import load_dataset_index, read_sample

    index = load_dataset_index(args.dataset)
    split = args.split or next(iter(index["splits"]))
    names = index["splits"][split][:args.count]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    colors = [(1.0, 0.3, 0.3), (0.3, 1.0, 0.3), (0.3, 0.5, 1.0), (1.0, 1.0, 0.3)]
    for name in names:
        sample = read_sample(Path(args.dataset) / name)
        image = sample.image
        for i, person in enumerate(sample.persons):
            image = draw_points(image, person.gt_pose2d[person.visibility],
                                color=colors[i % len(colors)], radius=2)
        save_image(image, out_dir / f"{name}.png")
    print(f"wrote {len(names)} visualizations to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdpose3d",
                                     description="2D-pose-guided 3D pose and shape estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic scene dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", action="append", default=None, metavar="NAME=COUNT",
                   help="split spec, e.g. train=256 (repeatable)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the network")
    _add_common(p)
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--out", help="run output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--split", default="heldout")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--synth-errors", action="store_true",
                   help="apply error synthesis to the input 2D poses")
    p.add_argument("--oracle", action="store_true",
                   help="sanity mode: score the GT against itself")
    p.add_argument("--dump-joints", metavar="PATH",
                   help="write per-person prediction/GT joint records (JSON)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="run on one image + 2D pose file")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--pose", required=True, help="2D pose JSON file")
    p.add_argument("--out", default="infer_out")
    p.add_argument("--stem", default="person")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train and compare architecture variants")
    _add_common(p)
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--split", default="heldout")
    p.add_argument("--variants", nargs="+",
                   default=["guided", "unguided", "hmr", "no_posenet"])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("visualize", help="export overlay images for dataset samples")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--out", default="viz_out")
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "split", None) is None and args.command == "generate":
        args.split = ["train=256", "heldout=64"]
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report and exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
