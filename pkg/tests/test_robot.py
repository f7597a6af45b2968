import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from encounter.errors import Unreachable
from encounter.geometry import Pose, quat_from_axis_angle
from encounter.robot import (
    DEFAULT_PARK, UR3_DH, DHTable, KinematicLimits, RobotModel, clamp_step, fk, fk_batch, fk_pose_error,
    numeric_jacobian, solve_ik,
)

import oracles

# TCP at q = 0 for the UR3 table: x = a2 + a3, y = -(d4 + d6), z = d1 - d5
GOLDEN_ZERO = np.array([
    [1.0, 0.0, 0.0, -0.4569],
    [0.0, 0.0, -1.0, -0.19425],
    [0.0, 1.0, 0.0, 0.06655],
    [0.0, 0.0, 0.0, 1.0],
])

joint_vec = st.lists(st.floats(-math.pi, math.pi), min_size=6, max_size=6).map(np.array)


class TestDHTable:
    def test_needs_six_rows(self):
        with pytest.raises(ValueError):
            DHTable(np.zeros(5), np.zeros(5), np.zeros(5))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            DHTable(np.full(6, np.nan), np.zeros(6), np.zeros(6))

    def test_rows_round_trip(self):
        back = DHTable.from_rows(json.loads(json.dumps(UR3_DH.to_rows())))
        assert np.array_equal(back.d, UR3_DH.d) and np.array_equal(back.alpha, UR3_DH.alpha)

    def test_manufacturer_constants(self):
        assert UR3_DH.d[0] == 0.1519 and UR3_DH.a[1] == -0.24365 and UR3_DH.a[2] == -0.21325
        assert list(UR3_DH.d[3:]) == [0.11235, 0.08535, 0.0819]


class TestLimits:
    def test_defaults(self):
        lim = KinematicLimits()
        assert np.all(lim.q_min == -2 * math.pi) and np.all(lim.v_max == math.pi) and lim.tcp_v_max == 0.25

    def test_invalid(self):
        with pytest.raises(ValueError):
            KinematicLimits(q_min=np.ones(6), q_max=np.zeros(6))
        with pytest.raises(ValueError):
            KinematicLimits(v_max=np.zeros(6))


class TestFK:
    def test_zero_golden(self):
        assert np.allclose(fk_batch(UR3_DH, np.zeros(6))[0], GOLDEN_ZERO, atol=1e-15)

    @given(joint_vec)
    def test_matches_chain_oracle(self, q):
        want = oracles.dh_chain(UR3_DH.d, UR3_DH.a, UR3_DH.alpha, q)
        assert np.allclose(fk_batch(UR3_DH, q)[0], want, atol=1e-14)

    @given(joint_vec)
    def test_base_symmetry(self, q):
        q2 = q.copy()
        q2[0] += math.pi
        p1, p2 = fk(UR3_DH, q).position, fk(UR3_DH, q2).position
        assert np.allclose(p2, [-p1[0], -p1[1], p1[2]], atol=1e-14)

    @given(joint_vec)
    def test_reach_bound(self, q):
        assert np.linalg.norm(fk(UR3_DH, q).position) <= UR3_DH.reach

    def test_bitwise_deterministic(self, rng):
        Q = rng.uniform(-3, 3, (50, 6))
        assert np.array_equal(fk_batch(UR3_DH, Q), fk_batch(UR3_DH, Q.copy()))

    def test_batch_matches_single(self, rng):
        Q = rng.uniform(-3, 3, (20, 6))
        T = fk_batch(UR3_DH, Q)
        for i, q in enumerate(Q):
            assert np.array_equal(T[i], fk_batch(UR3_DH, q)[0])


class TestJacobian:
    def test_linear_part_matches_fd(self, rng):
        q = rng.uniform(-2, 2, 6)
        J, _ = numeric_jacobian(UR3_DH, q)
        h = 1e-7
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            d = (fk(UR3_DH, q + e).position - fk(UR3_DH, q - e).position) / (2 * h)
            assert np.allclose(J[:3, i], d, atol=1e-7)

    def test_angular_part_is_joint_axis(self, rng):
        # first column's angular velocity is the base z axis
        J, _ = numeric_jacobian(UR3_DH, rng.uniform(-2, 2, 6))
        assert np.allclose(J[3:, 0], [0, 0, 1], atol=1e-8)


class TestIK:
    def test_fixed_point(self, rng):
        q0 = rng.uniform(-2, 2, 6)
        res = solve_ik(UR3_DH, fk(UR3_DH, q0), q0)
        assert res.iterations == 0 and np.array_equal(res.q, q0)

    def test_noisy_seed_round_trip(self, rng):
        for _ in range(20):
            q0 = rng.uniform(-math.pi, math.pi, 6)
            target = fk(UR3_DH, q0)
            q = solve_ik(UR3_DH, target, q0 + rng.uniform(-0.05, 0.05, 6)).q
            dp, dr = fk_pose_error(UR3_DH, q, target)
            assert dp < 1e-6 and dr < 1e-4

    def test_out_of_reach(self):
        target = Pose([2 * UR3_DH.reach, 0, 0])
        with pytest.raises(Unreachable):
            solve_ik(UR3_DH, target, np.zeros(6))

    def test_limits_respected(self, rng):
        lim = KinematicLimits(q_min=np.full(6, -math.pi), q_max=np.full(6, math.pi))
        for _ in range(10):
            q0 = rng.uniform(-3, 3, 6)
            q = solve_ik(UR3_DH, fk(UR3_DH, q0), q0 + 0.1, lim).q
            assert lim.contains(q)

    def test_reseeding_recovers(self):
        # a seed far from any solution still converges through the perturbed re-seeds
        q0 = np.array([0.3, -1.2, 1.4, -0.5, 1.1, 0.2])
        res = solve_ik(UR3_DH, fk(UR3_DH, q0), q0 + 2.5, max_iter=30)
        assert fk_pose_error(UR3_DH, res.q, fk(UR3_DH, q0))[0] < 1e-6

    def test_unreachable_orientation_within_reach(self):
        # inside the reach sphere but outside the annulus the wrist can reach
        lim = KinematicLimits(q_min=np.full(6, -0.1), q_max=np.full(6, 0.1))
        with pytest.raises(Unreachable):
            solve_ik(UR3_DH, Pose([0.0, 0.3, 0.3]), np.zeros(6), lim, max_iter=20)

    def test_deterministic(self, rng):
        q0 = rng.uniform(-2, 2, 6)
        a = solve_ik(UR3_DH, fk(UR3_DH, q0), q0 + 0.3).q
        b = solve_ik(UR3_DH, fk(UR3_DH, q0), q0 + 0.3).q
        assert np.array_equal(a, b)


class TestClampStep:
    lim = KinematicLimits()
    dt = 0.008

    def test_within_limits_unchanged(self):
        q0 = np.zeros(6)
        q1 = np.full(6, 0.5 * math.pi * self.dt)
        assert np.array_equal(clamp_step(q0, q1, self.dt, self.lim), q1)

    def test_uniform_scaling(self):
        q0 = np.zeros(6)
        q1 = np.array([2 * math.pi * self.dt, 0.001, -0.002, 0, 0, 0])
        out = clamp_step(q0, q1, self.dt, self.lim)
        assert out[0] == pytest.approx(math.pi * self.dt)
        assert np.allclose(out[1:], q1[1:] / 2)

    def test_zero_step(self):
        q0 = np.arange(6.0)
        assert np.array_equal(clamp_step(q0, q0, self.dt, self.lim), q0)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            clamp_step(np.zeros(6), np.zeros(6), 0.0, self.lim)

    @given(joint_vec, joint_vec, st.floats(1e-3, 0.1))
    def test_never_exceeds(self, a, b, dt):
        out = clamp_step(a, b, dt, self.lim)
        assert np.all(np.abs(out - a) / dt <= self.lim.v_max + 1e-12)


class TestRobotModel:
    def test_park_holds_display_flat(self):
        m = RobotModel()
        pose = m.display_pose(m.park)
        assert np.allclose(pose.position, [0.30, 0.0, 0.20], atol=1e-4)
        assert np.allclose(pose.axis(2), [0, 0, 1], atol=1e-4)
        assert np.array_equal(m.park, DEFAULT_PARK)

    def test_flange_target_inverts_tool(self, rng):
        m = RobotModel()
        q = rng.uniform(-2, 2, 6)
        disp = m.display_pose(q)
        assert np.allclose(m.flange_target(disp).matrix, fk(m.dh, q).matrix, atol=1e-12)

    def test_park_must_respect_limits(self):
        with pytest.raises(ValueError):
            RobotModel(park=np.full(6, 7.0))

    def test_json_round_trip(self, tmp_path):
        m = RobotModel(tool=Pose([0, 0, 0.12], quat_from_axis_angle([0, 0, 1], 0.3)), linkage={"l1": 0.05})
        path = tmp_path / "r.json"
        path.write_text(json.dumps(m.to_dict()))
        back = RobotModel.load(path)
        assert np.array_equal(back.park, m.park) and back.linkage == {"l1": 0.05}
        assert np.allclose(back.tool.matrix, m.tool.matrix)

    def test_bundled_config(self):
        from encounter.trajectories import ROBOT_FILE
        m = RobotModel.load(ROBOT_FILE)
        assert np.array_equal(m.dh.d, UR3_DH.d) and m.linkage["l2"] == 0.08
