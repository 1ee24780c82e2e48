import numpy as np
import pytest
import torch

from crowdpose3d.posenet import PoseNet3D, normalize_volume, soft_argmax3d


class TestPoseNet3D:
    def test_shape_contract(self):
        torch.manual_seed(0)
        net = PoseNet3D(128, num_joints=15, depth_bins=8).eval()
        out = net(torch.rand(2, 128, 4, 4))
        assert out.shape == (2, 15, 8, 4, 4)

    def test_eval_deterministic(self):
        torch.manual_seed(0)
        net = PoseNet3D(32, 15, 8).eval()
        x = torch.rand(1, 32, 4, 4)
        with torch.no_grad():
            assert torch.equal(net(x), net(x))

    def test_gradient_nonzero(self):
        torch.manual_seed(0)
        net = PoseNet3D(32, 15, 8)
        x = torch.rand(1, 32, 4, 4, requires_grad=True)
        net(x).sum().backward()
        assert x.grad.abs().max() > 0


class TestSoftArgmax:
    def test_one_hot_volume_hand_values(self):
        # softmax of a 50-logit spike is a near-one-hot distribution, so the
        # expectations reduce to the spike's cell center:
        #   x = (1 + 0.5)*16 = 24, y = (2 + 0.5)*16 = 40,
        #   z = (3/7 - 0.5)*2000 = -1000/7
        vol = torch.zeros(1, 1, 8, 4, 4, dtype=torch.float64)
        vol[0, 0, 3, 2, 1] = 50.0
        coords, conf = soft_argmax3d(vol, stride=16, depth_range=1000.0)
        assert coords[0, 0, 0].item() == pytest.approx(24.0, abs=1e-6)
        assert coords[0, 0, 1].item() == pytest.approx(40.0, abs=1e-6)
        assert coords[0, 0, 2].item() == pytest.approx(-1000.0 / 7.0, abs=1e-3)
        assert conf[0, 0].item() == pytest.approx(1.0, abs=1e-6)

    def test_uniform_volume_decodes_center(self):
        vol = torch.zeros(2, 3, 8, 4, 4, dtype=torch.float64)
        coords, conf = soft_argmax3d(vol, stride=16, depth_range=1000.0)
        assert torch.allclose(coords[..., 0], torch.full((2, 3), 32.0, dtype=torch.float64))
        assert torch.allclose(coords[..., 1], torch.full((2, 3), 32.0, dtype=torch.float64))
        assert torch.allclose(coords[..., 2], torch.zeros(2, 3, dtype=torch.float64), atol=1e-9)
        assert torch.allclose(conf, torch.full((2, 3), 1.0 / (8 * 4 * 4), dtype=torch.float64))

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(0)
        vol = torch.tensor(rng.normal(size=(1, 5, 8, 4, 4)))
        a, ca = soft_argmax3d(vol, 16, 1000.0)
        b, cb = soft_argmax3d(vol + 123.4, 16, 1000.0)
        assert (a - b).abs().max() < 1e-6
        assert (ca - cb).abs().max() < 1e-6

    def test_probability_volume_sums_to_one(self):
        rng = np.random.default_rng(1)
        vol = torch.tensor(rng.normal(size=(3, 15, 8, 4, 4)))
        prob = normalize_volume(vol)
        sums = prob.reshape(3, 15, -1).sum(dim=-1)
        assert (sums - 1.0).abs().max() < 1e-6

    def test_sharp_gaussian_peak_within_quarter_cell(self):
        # Gaussian logit bump (peak >= 10, background 0) at a grid point must
        # decode within 0.25 grid cells of that point
        rng = np.random.default_rng(2)
        d, h, w = 8, 6, 6
        zz, yy, xx = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
        for _ in range(20):
            g = np.array([rng.integers(1, d - 1), rng.integers(1, h - 1), rng.integers(1, w - 1)])
            dist2 = (zz - g[0]) ** 2 + (yy - g[1]) ** 2 + (xx - g[2]) ** 2
            logits = 12.0 * np.exp(-dist2 / (2 * 0.8 ** 2))
            vol = torch.tensor(logits[None, None])
            coords, _ = soft_argmax3d(vol, stride=16, depth_range=1000.0)
            cell_x = coords[0, 0, 0].item() / 16 - 0.5
            cell_y = coords[0, 0, 1].item() / 16 - 0.5
            cell_z = (coords[0, 0, 2].item() / 2000.0 + 0.5) * (d - 1)
            assert abs(cell_x - g[2]) < 0.25
            assert abs(cell_y - g[1]) < 0.25
            assert abs(cell_z - g[0]) < 0.25

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        logits = torch.tensor(rng.normal(size=(1, 2, 4, 3, 3)), requires_grad=True)
        coords, _ = soft_argmax3d(logits, 16, 1000.0)
        probe = torch.tensor(rng.normal(size=(1, 2, 3)))
        (coords * probe).sum().backward()

        h = 1e-6
        flat = logits.detach().reshape(-1)
        grad = logits.grad.reshape(-1)
        for i in rng.choice(flat.numel(), size=12, replace=False):
            vp = flat.clone()
            vm = flat.clone()
            vp[i] += h
            vm[i] -= h
            cp, _ = soft_argmax3d(vp.reshape(1, 2, 4, 3, 3), 16, 1000.0)
            cm, _ = soft_argmax3d(vm.reshape(1, 2, 4, 3, 3), 16, 1000.0)
            fd = ((cp - cm) * probe).sum() / (2 * h)
            assert abs(float(fd) - float(grad[i])) / max(1.0, abs(float(fd))) < 1e-4

    def test_unbatched_volume_accepted(self):
        vol = torch.zeros(5, 8, 4, 4)
        coords, conf = soft_argmax3d(vol, 16, 1000.0)
        assert coords.shape == (5, 3)
        assert conf.shape == (5,)
