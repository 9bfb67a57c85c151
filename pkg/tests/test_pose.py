"""Tests for odoscale.core.pose module."""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation

from odoscale.core.pose import (
    EulerAngles,
    RelativePose,
    Rotation,
    RotationValidationError,
    Trajectory,
    compose_trajectory,
    euler_from_rotation,
    nearest_rotation,
    relative_between,
    rotation_angle,
    rotation_deviation,
    rotation_from_euler,
    validate_rotation,
    wrap_angle,
)


def random_rotation(rng) -> np.ndarray:
    return ScipyRotation.random(random_state=rng).as_matrix()


def random_relatives(rng, count: int) -> list[RelativePose]:
    return [
        RelativePose(Rotation(random_rotation(rng)), rng.normal(size=3))
        for _ in range(count)
    ]


class TestValidateRotation:
    """Tests for validate_rotation tolerance bands."""

    def test_exact_rotation_returned_unchanged(self):
        """Round-off level matrices are accepted as they are."""
        m = random_rotation(np.random.default_rng(1))
        r = validate_rotation(m)
        assert np.array_equal(r.m, m)

    def test_small_perturbation_is_projected(self):
        """Matrices within the loose tolerance are re-orthonormalized."""
        rng = np.random.default_rng(2)
        m = random_rotation(rng) + 1e-6 * rng.normal(size=(3, 3))
        r = validate_rotation(m)
        assert rotation_deviation(r.m) < 1e-12
        assert np.allclose(r.m, m, atol=1e-5)

    def test_projection_can_be_disabled(self):
        """project=False keeps an admissible matrix unchanged."""
        m = np.eye(3) + 1e-7
        assert np.array_equal(validate_rotation(m, project=False).m, m)

    def test_large_deviation_rejected(self):
        """Corrupt matrices raise with the measured deviation."""
        m = np.eye(3)
        m[0, 1] = 0.1
        with pytest.raises(RotationValidationError) as exc:
            validate_rotation(m)
        assert exc.value.deviation > 1e-4

    def test_reflection_rejected(self):
        """A determinant of -1 is never a rotation."""
        with pytest.raises(RotationValidationError) as exc:
            validate_rotation(np.diag([1.0, 1.0, -1.0]))
        assert exc.value.deviation == pytest.approx(2.0)

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError):
            validate_rotation(np.eye(4))

    def test_nearest_rotation_of_rotation_is_itself(self):
        m = random_rotation(np.random.default_rng(3))
        assert np.allclose(nearest_rotation(m).m, m, atol=1e-14)


class TestRotationAngle:
    """Tests for the clamped rotation angle."""

    def test_identity_is_zero(self):
        assert rotation_angle(np.eye(3)) == 0.0

    def test_roundoff_above_one_is_clamped(self):
        """Trace slightly above 3 gives 0, not NaN."""
        assert rotation_angle(np.eye(3) * (1.0 + 1e-15)) == 0.0

    def test_known_angle(self):
        r = rotation_from_euler((0.0, 0.0, 0.7))
        assert r.angle() == pytest.approx(0.7, abs=1e-12)

    def test_vectorized(self):
        stack = np.stack([np.eye(3), rotation_from_euler((math.pi, 0.0, 0.0)).m])
        assert np.allclose(rotation_angle(stack), [0.0, math.pi])


class TestEulerConversion:
    """Tests for rotation_from_euler / euler_from_rotation."""

    def test_elementary_yaw(self):
        """theta_y rotates +z towards +x."""
        r = rotation_from_euler((0.0, math.pi / 2, 0.0))
        assert np.allclose(r.apply([0.0, 0.0, 1.0]), [1.0, 0.0, 0.0], atol=1e-15)

    def test_composition_order(self):
        """R = Rz @ Ry @ Rx."""
        rx = rotation_from_euler((0.3, 0.0, 0.0))
        ry = rotation_from_euler((0.0, -0.2, 0.0))
        rz = rotation_from_euler((0.0, 0.0, 1.1))
        assert np.allclose(rotation_from_euler((0.3, -0.2, 1.1)).m, (rz @ ry @ rx).m, atol=1e-15)

    def test_round_trip_random(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            theta = rng.uniform([-math.pi, -1.5, -math.pi], [math.pi, 1.5, math.pi])
            back = euler_from_rotation(rotation_from_euler(theta))
            assert not back.gimbal_locked
            assert np.allclose(back.theta, theta, atol=1e-9)

    def test_rotation_round_trip(self):
        """rotation -> euler -> rotation reproduces the matrix."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            m = random_rotation(rng)
            assert np.allclose(rotation_from_euler(euler_from_rotation(Rotation(m))).m, m, atol=1e-9)

    @pytest.mark.parametrize("pitch", [math.pi / 2, -math.pi / 2])
    def test_gimbal_lock_flagged(self, pitch):
        """At theta_y = +-pi/2 theta_x is 0 and the rotation still reconstructs."""
        r = rotation_from_euler((0.3, pitch, 0.5))
        angles = euler_from_rotation(r)
        assert angles.gimbal_locked
        assert angles.theta[0] == 0.0
        assert angles.theta[1] == pytest.approx(pitch, abs=1e-9)
        assert np.allclose(rotation_from_euler(angles).m, r.m, atol=1e-9)

    def test_angles_wrapped(self):
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert isinstance(EulerAngles((0, 0, 0)).theta, np.ndarray)


class TestComposeTrajectory:
    """Tests for compose_trajectory and relative_between."""

    def test_straight_line(self):
        step = RelativePose(Rotation.identity(), [0.0, 0.0, 20.0])
        traj = compose_trajectory([step, step])
        assert len(traj) == 3
        assert np.array_equal(traj.arclen, [0.0, 20.0, 40.0])
        assert np.array_equal(traj.positions[-1], [0.0, 0.0, 40.0])
        assert traj.length == 40.0

    def test_first_pose_is_identity(self):
        traj = compose_trajectory(random_relatives(np.random.default_rng(6), 3))
        assert np.array_equal(traj.rotations[0], np.eye(3))
        assert np.array_equal(traj.positions[0], np.zeros(3))

    def test_empty_sequence_is_single_pose(self):
        assert len(compose_trajectory([])) == 1

    def test_chaining_convention(self):
        """p_i = p_{i-1} + R_{i-1} t_i."""
        turn = RelativePose(rotation_from_euler((0.0, math.pi / 2, 0.0)), [0.0, 0.0, 1.0])
        traj = compose_trajectory([turn, turn])
        assert np.allclose(traj.positions[2], [1.0, 0.0, 1.0], atol=1e-15)

    def test_relatives_invert_composition(self):
        rels = random_relatives(np.random.default_rng(7), 20)
        back = compose_trajectory(rels).relatives()
        for a, b in zip(rels, back):
            assert np.allclose(a.rotation.m, b.rotation.m, atol=1e-12)
            assert np.allclose(a.translation, b.translation, atol=1e-12)

    def test_relative_between_same_frame_is_identity(self):
        traj = compose_trajectory(random_relatives(np.random.default_rng(8), 5))
        rel = relative_between(traj, 3, 3)
        assert np.array_equal(rel.matrix(), np.eye(4))

    def test_relative_between_matches_homogeneous(self):
        traj = compose_trajectory(random_relatives(np.random.default_rng(9), 6))
        expected = np.linalg.inv(traj.pose(1).matrix()) @ traj.pose(5).matrix()
        assert np.allclose(relative_between(traj, 1, 5).matrix(), expected, atol=1e-12)

    def test_relative_between_chains(self):
        rng = np.random.default_rng(13)
        traj = compose_trajectory(random_relatives(rng, 12))
        for _ in range(50):
            i, j, k = sorted(int(x) for x in rng.integers(0, 13, size=3))
            chained = relative_between(traj, i, j).compose(relative_between(traj, j, k))
            assert np.allclose(relative_between(traj, i, k).matrix(), chained.matrix(), atol=1e-10)

    @pytest.mark.parametrize("pair", [(2, 1), (-1, 2), (0, 10)])
    def test_relative_between_rejects_bad_pairs(self, pair):
        traj = compose_trajectory(random_relatives(np.random.default_rng(10), 3))
        with pytest.raises(ValueError):
            relative_between(traj, *pair)

    def test_global_transform_keeps_relatives(self):
        rng = np.random.default_rng(11)
        traj = compose_trajectory(random_relatives(rng, 10))
        g = RelativePose(Rotation(random_rotation(rng)), rng.normal(size=3))
        moved = traj.transformed(g)
        assert np.allclose(moved.arclen, traj.arclen, atol=1e-12)
        for a, b in zip(traj.relatives(), moved.relatives()):
            assert np.allclose(a.matrix(), b.matrix(), atol=1e-12)


class TestValueTypes:
    """Tests for immutability and validation of value types."""

    def test_arrays_are_read_only(self):
        pose = RelativePose.identity()
        with pytest.raises(ValueError):
            pose.translation[0] = 1.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            RelativePose(Rotation.identity(), [0.0, float("nan"), 0.0])

    def test_trajectory_needs_a_pose(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((0, 3, 3)), np.zeros((0, 3)))

    def test_compose_and_inverse(self):
        rng = np.random.default_rng(12)
        a, b = random_relatives(rng, 2)
        assert np.allclose(a.compose(b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)
        assert np.allclose(a.compose(a.inverse()).matrix(), np.eye(4), atol=1e-12)
