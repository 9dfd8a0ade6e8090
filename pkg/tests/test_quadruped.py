import math

import numpy as np
import pytest

from pedikit.geometry import Pose, Quat, quat_angle_between
from pedikit.quadruped import (
    LEG_NAMES,
    QuadrupedModel,
    RobotState,
    clamp_limits,
    forward_kinematics,
    in_workspace,
    jacobian,
    leg_state,
    read_kv_config,
    toe_positions_body,
)


@pytest.fixture(scope="module")
def model():
    return QuadrupedModel.default()


def fd_jacobian(model, q, leg, h=1e-5):
    """Central finite differences of the toe position: the analytic oracle."""
    base = np.asarray(q, dtype=float)
    cols = []
    for j in range(3):
        qp, qm = base.copy(), base.copy()
        qp[3 * leg + j] += h
        qm[3 * leg + j] -= h
        tp = leg_state(model, qp[3 * leg : 3 * leg + 3], leg).toe
        tm = leg_state(model, qm[3 * leg : 3 * leg + 3], leg).toe
        cols.append((tp - tm) / (2 * h))
    return np.column_stack(cols)


def random_q(model, rng, margin=0.05):
    span = model.joint_upper - model.joint_lower
    return model.joint_lower + span * rng.uniform(margin, 1 - margin, size=12)


class TestForwardKinematics:
    def test_zero_pose_hand_computed(self, model):
        base = Pose.identity()
        toes = forward_kinematics(model, np.zeros(12), base)
        for leg in range(4):
            m = model.mount_positions[leg]
            s = model.side_signs[leg]
            expected = m + np.array([0.0, s * model.hip_offset, -(model.thigh + model.shank)])
            assert np.allclose(toes[leg].position, expected, atol=1e-12), LEG_NAMES[leg]

    def test_base_translation_equivariance(self, model):
        rng = np.random.default_rng(0)
        q = random_q(model, rng)
        t0 = forward_kinematics(model, q, Pose.identity())
        t1 = forward_kinematics(model, q, Pose.from_xyz_yaw(1.0, 0.0, 0.0))
        for leg in range(4):
            assert np.allclose(t1[leg].position, t0[leg].position + [1, 0, 0], atol=1e-12)

    def test_base_rigid_equivariance(self, model):
        rng = np.random.default_rng(1)
        for _ in range(20):
            q = random_q(model, rng)
            base = Pose(rng.uniform(-1, 1, 3), Quat.from_array(rng.normal(size=4)))
            t_mapped = Pose(rng.uniform(-1, 1, 3), Quat.from_array(rng.normal(size=4)))
            lhs = forward_kinematics(model, q, t_mapped.compose(base))
            rhs = forward_kinematics(model, q, base)
            for leg in range(4):
                assert np.allclose(
                    lhs[leg].position, t_mapped.transform_point(rhs[leg].position), atol=1e-9
                )

    def test_knee_bend_two_link_closed_form(self, model):
        q = np.zeros(12)
        q[2] = -math.pi / 2  # FL knee
        straight = leg_state(model, [0.0, 0.0, 0.0], 0).toe
        bent = leg_state(model, q[0:3], 0).toe
        dz = bent[2] - straight[2]
        dx = bent[0] - straight[0]
        assert abs(dz - model.shank * (1 - math.cos(math.pi / 2))) < 1e-12
        assert abs(abs(dx) - model.shank * math.sin(math.pi / 2)) < 1e-12

    def test_continuity_in_q(self, model):
        rng = np.random.default_rng(2)
        for _ in range(100):
            q = random_q(model, rng)
            dq = rng.normal(size=12) * 1e-6
            a = toe_positions_body(model, q)
            b = toe_positions_body(model, clamp_limits(model, q + dq))
            assert np.max(np.abs(a - b)) < 1e-4


class TestJacobian:
    def test_matches_finite_differences(self, model):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            q = random_q(model, rng)
            leg = int(rng.integers(0, 4))
            ja = jacobian(model, q, leg)
            jf = fd_jacobian(model, q, leg)
            rel = np.max(np.abs(ja - jf)) / max(np.max(np.abs(ja)), 1e-9)
            assert rel < 1e-4

    def test_straight_leg_singular(self, model):
        j = jacobian(model, np.zeros(12), 0)
        assert abs(np.linalg.det(j)) < 1e-6

    def test_abduction_column_orthogonal_at_zero(self, model):
        j = jacobian(model, np.zeros(12), 0)
        assert abs(j[:, 0] @ j[:, 1]) < 1e-12
        assert abs(j[:, 0] @ j[:, 2]) < 1e-12


class TestWorkspace:
    def test_fk_point_inside(self, model):
        rng = np.random.default_rng(4)
        base = Pose.identity()
        hits = 0
        for _ in range(200):
            q = random_q(model, rng, margin=0.15)
            for leg in range(4):
                toe = forward_kinematics(model, q, base)[leg].position
                if in_workspace(model, base, leg, toe):
                    hits += 1
        assert hits > 600  # most sampled postures stay inside the shell

    def test_far_point_outside(self, model):
        assert not in_workspace(model, Pose.identity(), 0, [10.0, 0.0, 0.0])

    def test_hip_point_outside(self, model):
        hip = model.hip_anchor(0)
        assert not in_workspace(model, Pose.identity(), 0, hip)


class TestClamp:
    def test_inside_unchanged(self, model):
        q = model.q_stance
        assert np.array_equal(clamp_limits(model, q), q)

    def test_huge_value_clamps_to_hi(self, model):
        q = np.full(12, 1e9)
        assert np.array_equal(clamp_limits(model, q), model.joint_upper)

    def test_idempotent(self, model):
        rng = np.random.default_rng(5)
        q = rng.uniform(-10, 10, 12)
        once = clamp_limits(model, q)
        assert np.array_equal(clamp_limits(model, once), once)


class TestConfig:
    def test_kv_parse(self, tmp_path):
        p = tmp_path / "m.cfg"
        p.write_text("# comment\nthigh = 0.3\nshank=0.2\n")
        assert read_kv_config(p) == {"thigh": 0.3, "shank": 0.2}

    def test_bad_line_diagnosed(self, tmp_path):
        p = tmp_path / "m.cfg"
        p.write_text("thigh 0.3\n")
        with pytest.raises(ValueError, match="key = value"):
            read_kv_config(p)

    def test_override(self, tmp_path):
        p = tmp_path / "m.cfg"
        p.write_text("thigh = 0.30\n")
        m = QuadrupedModel.from_config(p)
        assert m.thigh == 0.30
        assert m.shank == 0.25

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "m.cfg"
        p.write_text("thichk = 0.30\n")
        with pytest.raises(ValueError, match="unknown"):
            QuadrupedModel.from_config(p)

    def test_shipped_default_config_matches_defaults(self):
        from importlib import resources

        path = resources.files("pedikit").joinpath("configs/quadruped_default.cfg")
        with resources.as_file(path) as p:
            m = QuadrupedModel.from_config(p)
        assert m.config_hash() == QuadrupedModel.default().config_hash()


class TestRobotState:
    def test_at_rest_gravity(self, model):
        s = RobotState.at_rest(model)
        assert np.allclose(s.gravity_body, [0, 0, -1], atol=1e-12)

    def test_shape_validation(self, model):
        with pytest.raises(ValueError):
            RobotState(
                base=Pose.identity(),
                base_lin_vel=np.zeros(2),
                base_ang_vel=np.zeros(3),
                q=np.zeros(12),
                qd=np.zeros(12),
                prev_action=np.zeros(12),
                gravity_body=np.array([0, 0, -1.0]),
            )
