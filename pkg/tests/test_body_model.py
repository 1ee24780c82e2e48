import numpy as np
import pytest
import torch

from crowdpose3d.body_model import (
    BodyParams,
    build_body_model,
    decode,
    decode_vertices,
    forward_kinematics,
    load_model,
    posed_joints,
    regress_joints,
    rodrigues,
    save_model,
)
from crowdpose3d.config import BodyConfig
from crowdpose3d.errors import ConfigError, SampleParseError, UnsupportedVersionError


def rand_params(rng, k_pose=15, scale=0.5, dtype=torch.float64):
    return BodyParams(
        theta_g=torch.tensor(rng.uniform(-scale, scale, 3), dtype=dtype),
        theta=torch.tensor(rng.uniform(-scale, scale, (k_pose, 3)), dtype=dtype),
        beta=torch.tensor(rng.uniform(-0.3, 0.3, 10), dtype=dtype),
        k=torch.tensor([1.0, 0.0, 0.0], dtype=dtype),
    )


class TestBuild:
    def test_sizes_and_row_sums(self, body):
        assert body.num_vertices == 16 * 24 == 384
        assert body.num_joints == 16
        assert body.num_superset == 19
        assert np.abs(body.skin_weights.sum(axis=1) - 1.0).max() < 1e-6
        assert np.abs(body.joint_regressor.sum(axis=1) - 1.0).max() < 1e-6

    def test_deterministic(self, body):
        again = build_body_model(0)
        for name in ("template_vertices", "shape_dirs", "skin_weights",
                     "joint_regressor", "rest_joints"):
            assert np.array_equal(getattr(body, name), getattr(again, name)), name

    def test_different_seed_differs(self, body):
        other = build_body_model(7)
        assert not np.array_equal(body.shape_dirs, other.shape_dirs)

    def test_regressor_matches_rest_joints(self, body):
        regressed = body.joint_regressor @ body.template_vertices
        assert np.abs(regressed[:body.num_joints] - body.rest_joints).max() < 1e-5

    def test_regressor_rows_are_nearest_vertices(self, body):
        # uniform weights over the 8 template vertices nearest each joint
        for j in range(body.num_joints):
            dists = np.linalg.norm(body.template_vertices - body.rest_joints[j], axis=1)
            nearest = set(np.argsort(dists)[:8])
            support = set(np.flatnonzero(body.joint_regressor[j]))
            assert support == nearest
            assert np.allclose(body.joint_regressor[j][list(support)], 1 / 8)

    def test_kinematic_tree_is_topologically_ordered(self, body):
        parents = body.kinematic_tree
        assert parents[0] == -1
        assert (parents[1:] < np.arange(1, len(parents))).all()
        assert (parents[1:] >= 0).all()

    def test_shape_dirs_unit_rms(self, body):
        rms = np.sqrt((body.shape_dirs ** 2).sum(axis=1).mean(axis=0))
        assert np.allclose(rms, 1.0, atol=1e-9)

    @pytest.mark.parametrize("config", [
        BodyConfig(num_joints=4),
        BodyConfig(num_joints=40),
        BodyConfig(verts_per_bone=8),
        BodyConfig(verts_per_bone=0),
        BodyConfig(verts_per_bone=21),
    ])
    def test_invalid_config(self, config):
        with pytest.raises(ConfigError):
            build_body_model(0, config)

    def test_negative_seed(self):
        with pytest.raises(ConfigError):
            build_body_model(-1)

    def test_truncated_skeleton(self):
        small = build_body_model(0, BodyConfig(num_joints=10, verts_per_bone=16))
        assert small.num_joints == 10
        assert small.num_vertices == 160
        assert np.abs(small.joint_regressor.sum(axis=1) - 1.0).max() < 1e-6


class TestRodrigues:
    def test_zero_is_identity(self):
        r = rodrigues(torch.zeros(3, dtype=torch.float64))
        assert torch.allclose(r, torch.eye(3, dtype=torch.float64))

    def test_quarter_turn_about_z(self):
        r = rodrigues(torch.tensor([0.0, 0.0, np.pi / 2], dtype=torch.float64))
        expected = torch.tensor([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
                                dtype=torch.float64)
        assert torch.allclose(r, expected, atol=1e-12)

    def test_axis_is_fixed_point(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = torch.tensor(rng.normal(size=3), dtype=torch.float64)
            r = rodrigues(v)
            assert torch.allclose(r @ v, v, atol=1e-12)

    def test_orthonormal_100_random(self):
        rng = np.random.default_rng(4)
        vs = torch.tensor(rng.normal(size=(100, 3)) * 2.0, dtype=torch.float64)
        rs = rodrigues(vs)
        eye = torch.eye(3, dtype=torch.float64).expand(100, 3, 3)
        assert (rs.transpose(-1, -2) @ rs - eye).abs().max() < 1e-10
        assert (torch.linalg.det(rs) - 1.0).abs().max() < 1e-10


class TestForwardKinematics:
    def test_zero_angles_identity(self, body):
        tf = forward_kinematics(body, torch.zeros(3, dtype=torch.float64),
                                torch.zeros(15, 3, dtype=torch.float64))
        eye = torch.eye(4, dtype=torch.float64).expand(16, 4, 4)
        assert torch.allclose(tf, eye, atol=1e-12)
        joints = posed_joints(body, tf)
        assert torch.allclose(joints, torch.as_tensor(body.rest_joints), atol=1e-12)

    def test_global_rotation_is_rigid(self, body):
        tg = torch.tensor([0.0, 0.0, np.pi], dtype=torch.float64)
        tf = forward_kinematics(body, tg, torch.zeros(15, 3, dtype=torch.float64))
        joints = posed_joints(body, tf)
        rest = torch.as_tensor(body.rest_joints)
        root = rest[0]
        expected = (rodrigues(tg) @ (rest - root).T).T + root
        assert torch.allclose(joints, expected, atol=1e-10)

    @pytest.mark.parametrize("joint", [1, 4, 10, 13])
    def test_rotating_one_joint_moves_only_descendants(self, body, joint):
        theta = torch.zeros(15, 3, dtype=torch.float64)
        theta[joint - 1] = torch.tensor([0.3, -0.2, 0.5])
        tf = forward_kinematics(body, torch.zeros(3, dtype=torch.float64), theta)
        joints = posed_joints(body, tf).numpy()
        rest = body.rest_joints

        descendants = set()
        for j in range(body.num_joints):
            a = j
            while a != -1:
                if a == joint and j != joint:
                    descendants.add(j)
                a = int(body.kinematic_tree[a])
        for j in range(body.num_joints):
            moved = np.linalg.norm(joints[j] - rest[j]) > 1e-9
            assert moved == (j in descendants), f"joint {j}"


class TestDecode:
    def test_zero_params_returns_template(self, body):
        mesh = decode(body, BodyParams.zeros(dtype=torch.float64))
        assert torch.allclose(mesh.vertices, torch.as_tensor(body.template_vertices),
                              atol=1e-12)
        assert mesh.faces.shape == body.faces.shape

    def test_scale_mode_scales_about_root(self, body):
        # oracle: beta on the scale mode displaces every vertex radially, so
        # distances from the root scale by a common factor
        p = BodyParams.zeros(dtype=torch.float64)
        p.beta[0] = 0.1
        mesh = decode(body, p)
        root = torch.as_tensor(body.rest_joints[0])
        before = torch.as_tensor(body.template_vertices) - root
        after = mesh.vertices - root
        ratio = after.norm(dim=1) / before.norm(dim=1)
        assert ratio.std() < 1e-9
        assert ratio.mean() > 1.0

        joints = regress_joints(body, mesh)
        rest = torch.as_tensor(body.rest_joints)
        jr = (joints[:16] - root).norm(dim=1)[1:] / (rest - root).norm(dim=1)[1:]
        assert jr.std() < 1e-9

    def test_global_rotation_is_rigid_motion(self, body):
        p = BodyParams.zeros(dtype=torch.float64)
        p.theta_g = torch.tensor([0.4, -0.8, 0.2], dtype=torch.float64)
        mesh = decode(body, p)
        root = torch.as_tensor(body.rest_joints[0])
        expected = (rodrigues(p.theta_g) @ (torch.as_tensor(body.template_vertices) - root).T).T + root
        assert (mesh.vertices - expected).abs().max() < 1e-5

    def test_rigid_equivariance(self, body):
        # composing an extra rotation onto theta_g rotates the output about the root
        rng = np.random.default_rng(11)
        p = rand_params(rng)
        extra = torch.tensor([0.0, 0.0, 0.7], dtype=torch.float64)
        base = decode(body, p).vertices

        r_extra = rodrigues(extra)
        r_total = r_extra @ rodrigues(p.theta_g)
        # axis-angle of the composed rotation via matrix log (trace formula)
        angle = torch.arccos(torch.clamp((torch.trace(r_total) - 1) / 2, -1.0, 1.0))
        axis = torch.tensor([r_total[2, 1] - r_total[1, 2],
                             r_total[0, 2] - r_total[2, 0],
                             r_total[1, 0] - r_total[0, 1]], dtype=torch.float64)
        axis = axis / axis.norm()
        p2 = BodyParams(theta_g=axis * angle, theta=p.theta, beta=p.beta, k=p.k)
        rotated = decode(body, p2).vertices

        root = torch.as_tensor(body.rest_joints[0])
        expected = ((r_extra @ (base - root).T).T + root)
        assert (rotated - expected).abs().max() < 1e-5

    def test_batched_matches_loop(self, body):
        rng = np.random.default_rng(12)
        params = [rand_params(rng) for _ in range(3)]
        batched = decode_vertices(
            body,
            torch.stack([p.theta_g for p in params]),
            torch.stack([p.theta for p in params]),
            torch.stack([p.beta for p in params]),
        )
        for i, p in enumerate(params):
            assert torch.allclose(batched[i], decode(body, p).vertices, atol=1e-12)


class TestRegressJoints:
    def test_rest_mesh_gives_rest_joints(self, body):
        mesh = decode(body, BodyParams.zeros(dtype=torch.float64))
        joints = regress_joints(body, mesh)
        assert (joints[:16] - torch.as_tensor(body.rest_joints)).abs().max() < 1e-5

    def test_translation_equivariance(self, body):
        mesh = decode(body, BodyParams.zeros(dtype=torch.float64))
        t = torch.tensor([0.3, -1.2, 2.5], dtype=torch.float64)
        j0 = regress_joints(body, mesh.vertices)
        j1 = regress_joints(body, mesh.vertices + t)
        assert torch.allclose(j1, j0 + t, atol=1e-12)

    def test_matches_per_joint_loop_oracle(self, body):
        rng = np.random.default_rng(13)
        mesh = decode(body, rand_params(rng))
        joints = regress_joints(body, mesh).numpy()
        verts = mesh.vertices.numpy()
        for j in range(body.num_superset):  # naive weighted average per joint
            expected = sum(body.joint_regressor[j, v] * verts[v]
                           for v in range(body.num_vertices))
            assert np.abs(joints[j] - expected).max() < 1e-12


class TestGradients:
    def test_decode_and_regress_match_finite_differences(self, body):
        rng = np.random.default_rng(21)
        probe = torch.tensor(rng.normal(size=(19, 3)), dtype=torch.float64)

        def scalar(vec):
            tg, th, be = vec[:3], vec[3:48].reshape(15, 3), vec[48:]
            joints = regress_joints(body, decode_vertices(body, tg, th, be))
            return (joints * probe).sum()

        for trial in range(10):
            vec = torch.tensor(
                np.concatenate([rng.uniform(-0.6, 0.6, 48), rng.uniform(-0.3, 0.3, 10)]),
                requires_grad=True)
            scalar(vec).backward()
            grad = vec.grad.clone()
            h = 1e-5
            for i in rng.choice(58, size=6, replace=False):
                vp = vec.detach().clone()
                vm = vec.detach().clone()
                vp[i] += h
                vm[i] -= h
                fd = (scalar(vp) - scalar(vm)) / (2 * h)
                denom = max(1.0, abs(float(fd)))
                assert abs(float(fd) - float(grad[i])) / denom < 1e-4


class TestSerialization:
    def test_round_trip(self, body, tmp_path):
        path = tmp_path / "model.bin"
        save_model(body, path)
        loaded = load_model(path)
        assert loaded.num_vertices == body.num_vertices
        assert np.abs(loaded.template_vertices - body.template_vertices).max() < 1e-6
        assert np.array_equal(loaded.kinematic_tree, body.kinematic_tree)
        assert np.array_equal(loaded.faces, body.faces)
        assert loaded.seed == body.seed
        # invariants survive float32 storage
        assert np.abs(loaded.skin_weights.sum(axis=1) - 1.0).max() < 1e-6
        assert np.abs(loaded.joint_regressor.sum(axis=1) - 1.0).max() < 1e-6

    def test_truncated_file(self, body, tmp_path):
        path = tmp_path / "model.bin"
        save_model(body, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(SampleParseError):
            load_model(path)

    def test_version_mismatch(self, body, tmp_path):
        import json
        path = tmp_path / "model.bin"
        save_model(body, path)
        raw = path.read_bytes()
        header = json.loads(raw[:raw.find(b"\n")])
        header["version"] = 99
        path.write_bytes(json.dumps(header).encode() + raw[raw.find(b"\n"):])
        with pytest.raises(UnsupportedVersionError):
            load_model(path)

    def test_garbage_header(self, tmp_path):
        path = tmp_path / "model.bin"
        path.write_bytes(b"{not json}\n\x00\x01")
        with pytest.raises(SampleParseError):
            load_model(path)
