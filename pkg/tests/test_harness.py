import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest
import torch

from crowdpose3d.cli import main as cli_main
from crowdpose3d.config import NetConfig, TrainConfig, desk_train_config, load_train_config, \
    save_train_config
from crowdpose3d.errors import ConfigError, SampleParseError
from crowdpose3d.model import build_model, load_checkpoint, save_checkpoint
from crowdpose3d.train import lr_at_epoch, train


def tiny_net(**kw):
    base = dict(early_channels=8, late_channels=32, depth_bins=4, graph_channels=16)
    base.update(kw)
    return NetConfig(**base)


def tiny_cfg(dataset, out_dir, **kw):
    base = dict(dataset=dataset, out_dir=str(out_dir), epochs=2, lr_decay_epochs=(),
                net=tiny_net(), seed=0)
    base.update(kw)
    return desk_train_config(**base)


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = desk_train_config(dataset="x", epochs=3, lr_decay_epochs=(1, 2))
        save_train_config(cfg, tmp_path / "c.json")
        loaded = load_train_config(tmp_path / "c.json")
        assert loaded == cfg

    def test_sigma_defaults(self):
        assert desk_train_config().sigma == 2.0           # 16x16 heatmaps
        assert TrainConfig(crop_size=256).sigma == 2.5    # 64x64 heatmaps

    def test_decay_epochs_validated(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=2)  # default decay epochs (3, 5) out of range

    def test_unknown_key_rejected(self):
        from crowdpose3d.config import train_config_from_dict
        with pytest.raises(ConfigError):
            train_config_from_dict({"not_a_key": 1})

    def test_dotted_overrides(self):
        from crowdpose3d.config import apply_overrides
        data = apply_overrides({}, ["net.depth_bins=4", "learning_rate=0.01",
                                    "dataset=ds"])
        assert data == {"net": {"depth_bins": 4}, "learning_rate": 0.01, "dataset": "ds"}

    def test_paper_scale_profile_shapes(self):
        from crowdpose3d.config import full_scale_config

        cfg = full_scale_config(dataset="x")
        assert cfg.crop_size == 256 and cfg.batch_size == 64
        assert cfg.sigma == 2.5  # 64x64 heatmap grid
        model = build_model(cfg.net, seed=0)
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(1, 3, 256, 256), torch.rand(1, 19, 64, 64))
        assert out["fprime"].shape == (1, 512, 16, 16)
        assert out["volume"].shape == (1, 15, 64, 16, 16)


class TestSchedule:
    def test_paper_schedule_values(self):
        cfg = TrainConfig(epochs=6, lr_decay_epochs=(3, 5), learning_rate=1e-4,
                          lr_decay_factor=10.0)
        lrs = [lr_at_epoch(cfg, e) for e in range(1, 7)]
        assert lrs == pytest.approx([1e-4, 1e-4, 1e-4, 1e-5, 1e-5, 1e-6])


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = build_model(tiny_net(), seed=3)
        model.eval()
        crop = torch.rand(2, 3, 64, 64)
        hm = torch.rand(2, 19, 16, 16)
        with torch.no_grad():
            before = model(crop, hm)
        save_checkpoint(model, tmp_path / "ck.npz", extra={"step": 5})
        loaded = load_checkpoint(tmp_path / "ck.npz")
        with torch.no_grad():
            after = loaded(crop, hm)
        for key in ("fprime", "pose3d", "confidence", "theta_g", "theta", "beta", "cam"):
            assert torch.equal(before[key], after[key]), key

    def test_variant_preserved(self, tmp_path):
        model = build_model(tiny_net(variant="hmr"), seed=0)
        save_checkpoint(model, tmp_path / "ck.npz")
        loaded = load_checkpoint(tmp_path / "ck.npz")
        assert loaded.config.variant == "hmr"
        assert loaded.hmr_head is not None

    def test_unreadable_raises(self, tmp_path):
        (tmp_path / "junk.npz").write_bytes(b"not a zip")
        with pytest.raises(SampleParseError):
            load_checkpoint(tmp_path / "junk.npz")

    def test_shape_disagreement_rejected(self, tmp_path):
        import io
        import json as json_mod
        from crowdpose3d.errors import ShapeMismatchError
        model = build_model(tiny_net(), seed=0)
        save_checkpoint(model, tmp_path / "ck.npz")
        archive = dict(np.load(tmp_path / "ck.npz"))
        # declare a wider backbone than the stored arrays provide
        meta = json_mod.loads(bytes(archive["__meta__"]).decode())
        meta["config"]["early_channels"] = 16
        archive["__meta__"] = np.frombuffer(json_mod.dumps(meta).encode(), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **archive)
        (tmp_path / "bad.npz").write_bytes(buf.getvalue())
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(tmp_path / "bad.npz")

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            build_model(tiny_net(variant="bogus"))


class TestTraining:
    def test_loss_decreases_and_logs(self, single_person_dataset, tmp_path):
        cfg = tiny_cfg(single_person_dataset, tmp_path / "run", epochs=6,
                       lr_decay_epochs=(3, 5))
        result = train(cfg, quiet=True)
        assert Path(result["checkpoint"]).exists()
        log = json.loads(Path(result["log"]).read_text())
        assert len(log) == result["steps"]
        assert all(np.isfinite(r["total"]) for r in log)
        # logged learning rate follows the configured schedule
        by_epoch = {r["epoch"]: r["lr"] for r in log}
        assert by_epoch[1] == pytest.approx(1e-4)
        assert by_epoch[4] == pytest.approx(1e-5)
        assert by_epoch[6] == pytest.approx(1e-6)
        assert log[-1]["total"] < log[0]["total"]

    def test_reproducible_loss_curves(self, single_person_dataset, tmp_path):
        cfg_a = tiny_cfg(single_person_dataset, tmp_path / "a", seed=11)
        cfg_b = tiny_cfg(single_person_dataset, tmp_path / "b", seed=11)
        res_a = train(cfg_a, quiet=True)
        res_b = train(cfg_b, quiet=True)
        curve_a = [r["total"] for r in res_a["records"]]
        curve_b = [r["total"] for r in res_b["records"]]
        assert np.allclose(curve_a, curve_b, atol=1e-5)

    def test_missing_dataset_fails_before_first_step(self, tmp_path):
        cfg = tiny_cfg(str(tmp_path / "nope"), tmp_path / "run")
        with pytest.raises(SampleParseError):
            train(cfg)

    def test_non_finite_loss_aborts_with_diagnostics(self, single_person_dataset,
                                                     tmp_path):
        # an absurd learning rate blows the parameters up within a few steps;
        # training must stop with the offending loss terms named
        cfg = tiny_cfg(single_person_dataset, tmp_path / "run", epochs=50,
                       learning_rate=1e8)
        with pytest.raises(FloatingPointError, match="non-finite loss"):
            train(cfg, quiet=True)

    def test_epoch_checkpoints_written(self, single_person_dataset, tmp_path):
        cfg = tiny_cfg(single_person_dataset, tmp_path / "run", epochs=2)
        train(cfg, quiet=True)
        assert (tmp_path / "run" / "epoch_001.npz").exists()
        assert (tmp_path / "run" / "epoch_002.npz").exists()
        assert (tmp_path / "run" / "config.json").exists()


class TestEvaluate:
    def test_report_schema_and_oracle(self, single_person_dataset, tmp_path):
        from crowdpose3d.evaluate import evaluate

        cfg = tiny_cfg(single_person_dataset, tmp_path / "run", epochs=1)
        result = train(cfg, quiet=True)
        report = evaluate(result["checkpoint"], cfg.dataset, "heldout", cfg)
        data = report.to_dict()
        for key in ("mpjpe_mm", "pa_mpjpe_mm", "pck3d_percent", "mpvpe_mm", "rows"):
            assert key in data
        assert data["n_samples"] == len(data["rows"]) > 0
        for row in data["rows"]:
            assert set(row) >= {"sample", "person", "mpjpe_mm", "pa_mpjpe_mm",
                                "pck3d_percent", "mpvpe_mm"}

        oracle = evaluate(result["checkpoint"], cfg.dataset, "heldout", cfg, oracle=True)
        assert oracle.mpjpe_mm == pytest.approx(0.0, abs=1e-9)
        assert oracle.pa_mpjpe_mm == pytest.approx(0.0, abs=1e-6)
        assert oracle.mpvpe_mm == pytest.approx(0.0, abs=1e-9)
        assert oracle.pck3d_percent == 100.0

    def test_joint_set_mismatch_raises(self, single_person_dataset, tmp_path):
        from crowdpose3d.evaluate import evaluate_samples

        model = build_model(tiny_net(), seed=0)
        cfg = dataclasses.replace(tiny_cfg(single_person_dataset, tmp_path),
                                  net=tiny_net(num_superset=12))
        with pytest.raises(ConfigError):
            evaluate_samples(model, [], cfg)


class TestVariants:
    def test_unguided_ignores_heatmaps(self):
        model = build_model(tiny_net(variant="unguided"), seed=0)
        model.eval()
        crop = torch.rand(1, 3, 64, 64)
        with torch.no_grad():
            a = model(crop, torch.rand(1, 19, 16, 16))
            b = model(crop, torch.rand(1, 19, 16, 16))
        assert torch.equal(a["fprime"], b["fprime"])
        assert torch.equal(a["theta"], b["theta"])

    def test_guided_uses_heatmaps(self):
        model = build_model(tiny_net(variant="guided"), seed=0)
        model.eval()
        crop = torch.rand(1, 3, 64, 64)
        with torch.no_grad():
            a = model(crop, torch.rand(1, 19, 16, 16))
            b = model(crop, torch.rand(1, 19, 16, 16))
        assert not torch.equal(a["fprime"], b["fprime"])

    def test_no_posenet_requires_and_uses_input_pose(self):
        model = build_model(tiny_net(variant="no_posenet"), seed=0)
        model.eval()
        crop = torch.rand(1, 3, 64, 64)
        hm = torch.rand(1, 19, 16, 16)
        with pytest.raises(ConfigError):
            model(crop, hm)
        pose = torch.rand(1, 15, 3)
        with torch.no_grad():
            out = model(crop, hm, pose)
        assert out["volume"] is None
        assert torch.equal(out["pose3d"][..., :2], pose[..., :2])
        assert torch.equal(out["confidence"], pose[..., 2])

    def test_hmr_uses_pooled_head(self):
        model = build_model(tiny_net(variant="hmr"), seed=0)
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(1, 3, 64, 64), torch.rand(1, 19, 16, 16))
        assert out["theta"].shape == (1, 15, 3)

    def test_ablation_trains_each_variant(self, single_person_dataset, tmp_path):
        from crowdpose3d.ablate import ablation_run

        cfg = tiny_cfg(single_person_dataset, tmp_path / "ab", epochs=1)
        report = ablation_run(cfg, variants=("guided", "unguided"), eval_split="heldout")
        assert [r["variant"] for r in report["rows"]] == ["guided", "unguided"]
        schema = {"variant", "seed", "mpjpe_mm", "pa_mpjpe_mm", "pck3d_percent",
                  "mpvpe_mm", "checkpoint", "final_loss"}
        for row in report["rows"]:
            assert schema <= set(row)
        assert (tmp_path / "ab" / "ablation.json").exists()


class TestInfer:
    def test_outputs_exist(self, single_person_dataset, tmp_path, body):
        from crowdpose3d.infer import infer, load_pose_file, save_image, load_image
        from crowdpose3d.scene import read_sample
        from crowdpose3d.scene import load_dataset_index

        cfg = tiny_cfg(single_person_dataset, tmp_path / "run", epochs=1)
        result = train(cfg, quiet=True)
        model = load_checkpoint(result["checkpoint"])

        index = load_dataset_index(single_person_dataset)
        sample = read_sample(Path(single_person_dataset) / index["splits"]["heldout"][0])
        image_path = tmp_path / "img.png"
        save_image(sample.image, image_path)
        pose_path = tmp_path / "pose.json"
        pose_path.write_text(json.dumps({
            "joints": sample.persons[0].gt_pose2d.tolist(),
            "confidence": sample.persons[0].visibility.astype(float).tolist(),
            "joint_set": "superset",
        }))

        out = infer(model, load_image(image_path), load_pose_file(pose_path), cfg,
                    body=body, out_dir=tmp_path / "inf")
        assert Path(out["params"]).exists()
        assert Path(out["mesh"]).exists()
        assert Path(out["overlay"]).exists()
        params = json.loads(Path(out["params"]).read_text())
        assert len(params["beta"]) == 10
        mesh_text = Path(out["mesh"]).read_text()
        assert mesh_text.count("\nv ") + mesh_text.startswith("v ") == body.num_vertices
        assert " f " in mesh_text or "\nf " in mesh_text

    def test_degenerate_pose_propagates(self, single_person_dataset, tmp_path, body):
        from crowdpose3d.errors import DegeneratePoseError
        from crowdpose3d.infer import infer
        from crowdpose3d.pose2d import Pose2D

        model = build_model(tiny_net(), seed=0)
        cfg = tiny_cfg(single_person_dataset, tmp_path)
        pose = Pose2D(np.full((19, 2), 10.0), np.full(19, 0.01))
        with pytest.raises(DegeneratePoseError):
            infer(model, np.zeros((64, 64, 3), dtype=np.float32), pose, cfg,
                  body=body, out_dir=tmp_path)

    def test_bad_pose_file(self, tmp_path):
        from crowdpose3d.infer import load_pose_file

        bad = tmp_path / "p.json"
        bad.write_text("{\"joints\": 3}")
        with pytest.raises(SampleParseError):
            load_pose_file(bad)


class TestCli:
    def test_generate_train_eval_infer_visualize(self, tmp_path, capsys):
        ds = tmp_path / "ds"
        run = tmp_path / "run"
        assert cli_main(["generate", "--out", str(ds), "--seed", "3",
                         "--split", "train=4", "--split", "heldout=2",
                         "--set", "n_persons=1"]) == 0
        assert (ds / "index.json").exists()

        overrides = ["--set", "batch_size=16", "--set", "crop_size=64",
                     "--set", "epochs=1", "--set", "lr_decay_epochs=[]",
                     "--set", "net.early_channels=8", "--set", "net.late_channels=32",
                     "--set", "net.depth_bins=4", "--set", "net.graph_channels=16"]
        assert cli_main(["train", "--dataset", str(ds), "--out", str(run)] + overrides) == 0
        ck = run / "final.npz"
        assert ck.exists()

        assert cli_main(["eval", "--checkpoint", str(ck), "--dataset", str(ds),
                         "--split", "heldout", "--out", str(tmp_path / "report.json"),
                         "--dump-joints", str(tmp_path / "joints.json")]
                        + overrides) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["n_samples"] > 0

        from crowdpose3d.metrics import load_joint_records, report_from_records
        records = load_joint_records(tmp_path / "joints.json")
        assert len(records) == report["n_samples"]
        rescored = report_from_records(records)
        assert rescored.mpjpe_mm == pytest.approx(report["mpjpe_mm"], rel=1e-9)

        assert cli_main(["visualize", "--dataset", str(ds), "--out",
                         str(tmp_path / "viz"), "--count", "1"]) == 0
        assert len(list((tmp_path / "viz").glob("*.png"))) == 1

    def test_nonzero_exit_and_stderr_on_error(self, tmp_path, capsys):
        code = cli_main(["train", "--dataset", str(tmp_path / "missing"),
                         "--out", str(tmp_path / "r"), "--set", "epochs=1",
                         "--set", "lr_decay_epochs=[]"])
        assert code != 0
        assert "error:" in capsys.readouterr().err
