"""Rotation and rigid-pose values, Euler conversion and trajectory composition.

Conventions:
    Euler vectors are stored as (theta_x, theta_y, theta_z) and applied as
    intrinsic Z-Y-X rotations, R = Rz(theta_z) @ Ry(theta_y) @ Rx(theta_x).

    A relative pose y_i = [R_i | t_i] maps coordinates of frame i into
    frame i-1, so absolute poses chain as T_i = T_{i-1} @ y_i and the world
    frame is the first camera frame (T_0 = identity). This is the frame
    convention of the 12-column odometry pose files.

All values are immutable: arrays are copied on construction and marked
read-only, so every function here is safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import polar

# Deviation below which a matrix is treated as an exact rotation
ROUNDOFF_TOL = 1e-12

# Deviation admissible with re-orthonormalization; larger means corrupt data
LOOSE_TOL = 1e-4

# cos(theta_y) below this is treated as gimbal lock
GIMBAL_TOL = 1e-9


class RotationValidationError(ValueError):
    """Matrix too far from SO(3) to be accepted as a rotation."""

    def __init__(self, message: str, deviation: float):
        super().__init__(message)
        self.deviation = deviation


def _frozen(values, shape: tuple[int, ...], name: str) -> np.ndarray:
    """Copy values into a read-only float array of the given shape."""
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


def wrap_angle(angle: float) -> float:
    """Map an angle in radians into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True, eq=False)
class Rotation:
    """3x3 rotation matrix.

    The constructor only checks shape and finiteness; use validate_rotation()
    for matrices coming from outside the library.
    """

    m: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "m", _frozen(self.m, (3, 3), "rotation"))

    @classmethod
    def identity(cls) -> Rotation:
        return cls(np.eye(3))

    def __matmul__(self, other: Rotation) -> Rotation:
        return Rotation(self.m @ other.m)

    def inverse(self) -> Rotation:
        return Rotation(self.m.T)

    def apply(self, vector) -> np.ndarray:
        return self.m @ np.asarray(vector, dtype=float)

    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        return float(rotation_angle(self.m))


@dataclass(frozen=True, eq=False)
class EulerAngles:
    """Euler vector (theta_x, theta_y, theta_z) in radians.

    gimbal_locked is set by euler_from_rotation() when theta_y sits at
    +-pi/2; theta_x is then 0 and the ambiguity is folded into theta_z.
    """

    theta: np.ndarray
    gimbal_locked: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", _frozen(self.theta, (3,), "Euler angles"))


@dataclass(frozen=True, eq=False)
class RelativePose:
    """Rigid transform [R | t]; translation in meters.

    Used both for two-frame motions and for absolute poses, which are poses
    relative to frame 0.
    """

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.rotation, Rotation):
            object.__setattr__(self, "rotation", Rotation(self.rotation))
        object.__setattr__(
            self, "translation", _frozen(self.translation, (3,), "translation")
        )

    @classmethod
    def identity(cls) -> RelativePose:
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> RelativePose:
        """Build from a 3x4 or 4x4 [R | t] matrix (rotation not validated)."""
        arr = np.asarray(matrix, dtype=float)
        if arr.shape not in ((3, 4), (4, 4)):
            raise ValueError(f"pose matrix must be 3x4 or 4x4, got {arr.shape}")
        return cls(Rotation(arr[:3, :3]), arr[:3, 3])

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        out = np.eye(4)
        out[:3, :3] = self.rotation.m
        out[:3, 3] = self.translation
        return out

    def compose(self, other: RelativePose) -> RelativePose:
        """self @ other: apply other first, then self."""
        return RelativePose(
            self.rotation @ other.rotation,
            self.translation + self.rotation.m @ other.translation,
        )

    def inverse(self) -> RelativePose:
        rt = self.rotation.m.T
        return RelativePose(Rotation(rt), -(rt @ self.translation))

    @property
    def distance(self) -> float:
        """Translation norm in meters."""
        return float(np.linalg.norm(self.translation))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Absolute poses in the frame of camera 0, indexed by path length.

    arclen[i] is the cumulative Euclidean path length from position 0 to
    position i, summed in frame order.
    """

    rotations: np.ndarray
    positions: np.ndarray
    arclen: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        rotations = np.array(self.rotations, dtype=float)
        positions = np.array(self.positions, dtype=float)
        if rotations.ndim != 3 or rotations.shape[1:] != (3, 3):
            raise ValueError(f"rotations must have shape (n, 3, 3), got {rotations.shape}")
        if positions.shape != (rotations.shape[0], 3):
            raise ValueError(
                f"positions must have shape ({rotations.shape[0]}, 3), got {positions.shape}"
            )
        if rotations.shape[0] == 0:
            raise ValueError("trajectory must hold at least one pose")
        if not (np.all(np.isfinite(rotations)) and np.all(np.isfinite(positions))):
            raise ValueError("trajectory poses must be finite")

        steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
        arclen = np.concatenate([[0.0], np.cumsum(steps)])

        for name, arr in (("rotations", rotations), ("positions", positions), ("arclen", arclen)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_poses(cls, poses: Sequence[RelativePose]) -> Trajectory:
        """Build from absolute poses (pose of frame i in frame 0)."""
        if not poses:
            raise ValueError("trajectory must hold at least one pose")
        return cls(
            np.stack([p.rotation.m for p in poses]),
            np.stack([p.translation for p in poses]),
        )

    def __len__(self) -> int:
        return self.rotations.shape[0]

    def pose(self, i: int) -> RelativePose:
        """Absolute pose of frame i."""
        return RelativePose(Rotation(self.rotations[i]), self.positions[i])

    @property
    def poses(self) -> list[RelativePose]:
        return [self.pose(i) for i in range(len(self))]

    @property
    def length(self) -> float:
        """Total path length in meters."""
        return float(self.arclen[-1])

    def relatives(self) -> list[RelativePose]:
        """Consecutive relative poses; inverse of compose_trajectory()."""
        return [relative_between(self, i - 1, i) for i in range(1, len(self))]

    def transformed(self, g: RelativePose) -> Trajectory:
        """Left-apply one rigid transform to every absolute pose."""
        return Trajectory(
            np.einsum("ij,njk->nik", g.rotation.m, self.rotations),
            self.positions @ g.rotation.m.T + g.translation,
        )


def rotation_angle(m) -> np.ndarray | float:
    """Angle in [0, pi] of one or more rotation matrices.

    Equal to arccos(clamp((tr(R) - 1) / 2, -1, 1)), evaluated as
    atan2(|vee(R - R^T)| / 2, (tr(R) - 1) / 2): arccos amplifies round-off
    of order 1e-16 into angles of order 1e-8 near the identity, atan2 does not.
    """
    arr = np.asarray(m, dtype=float)
    cos = (np.trace(arr, axis1=-2, axis2=-1) - 1.0) / 2.0
    skew = np.stack([
        arr[..., 2, 1] - arr[..., 1, 2],
        arr[..., 0, 2] - arr[..., 2, 0],
        arr[..., 1, 0] - arr[..., 0, 1],
    ], axis=-1)
    sin = np.linalg.norm(skew, axis=-1) / 2.0
    return np.arctan2(sin, cos)


def rotation_deviation(m) -> float:
    """max(||m^T m - I||_F, |det(m) - 1|)."""
    arr = np.asarray(m, dtype=float)
    ortho = float(np.linalg.norm(arr.T @ arr - np.eye(3)))
    return max(ortho, abs(float(np.linalg.det(arr)) - 1.0))


def nearest_rotation(m) -> Rotation:
    """Project a matrix onto SO(3) via the orthogonal polar factor."""
    u, _ = polar(np.asarray(m, dtype=float), side="right")
    if np.linalg.det(u) <= 0:
        raise RotationValidationError(
            "matrix has no nearby proper rotation (orthogonal factor is a reflection)",
            deviation=rotation_deviation(m),
        )
    return Rotation(u)


def validate_rotation(m, tol: float = LOOSE_TOL, project: bool = True) -> Rotation:
    """Accept a 3x3 matrix as a Rotation.

    Matrices within round-off of SO(3) are returned unchanged. Matrices
    within tol are projected onto the nearest rotation (or returned
    unchanged when project is False). Anything further away raises
    RotationValidationError carrying the measured deviation.
    """
    arr = np.asarray(m, dtype=float)
    if arr.shape != (3, 3):
        raise ValueError(f"rotation must have shape (3, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("rotation must be finite")

    deviation = rotation_deviation(arr)
    if deviation <= ROUNDOFF_TOL:
        return Rotation(arr)
    if deviation > tol:
        raise RotationValidationError(
            f"matrix is not a rotation: deviation {deviation:.3e} exceeds tolerance {tol:.1e}",
            deviation=deviation,
        )
    if not project:
        return Rotation(arr)
    return nearest_rotation(arr)


def rotation_from_euler(angles: EulerAngles | Sequence[float]) -> Rotation:
    """Rotation for an Euler vector: Rz(theta_z) @ Ry(theta_y) @ Rx(theta_x)."""
    if not isinstance(angles, EulerAngles):
        angles = EulerAngles(angles)
    rx, ry, rz = angles.theta
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    return Rotation([
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ])


def euler_from_rotation(r: Rotation) -> EulerAngles:
    """Euler vector of a rotation; theta_x and theta_z in (-pi, pi].

    At gimbal lock (cos(theta_y) < GIMBAL_TOL) theta_x is set to 0, the
    combined rotation about the degenerate axis is reported in theta_z,
    and the result is flagged.
    """
    m = r.m
    cos_y = math.hypot(m[0, 0], m[1, 0])
    ry = math.atan2(-m[2, 0], cos_y)
    if cos_y < GIMBAL_TOL:
        return EulerAngles(
            (0.0, ry, wrap_angle(math.atan2(-m[0, 1], m[1, 1]))),
            gimbal_locked=True,
        )
    rx = math.atan2(m[2, 1], m[2, 2])
    rz = math.atan2(m[1, 0], m[0, 0])
    return EulerAngles((wrap_angle(rx), ry, wrap_angle(rz)))


def compose_trajectory(rels: Sequence[RelativePose]) -> Trajectory:
    """Chain relative poses into absolute poses starting at the identity."""
    n = len(rels)
    rotations = np.empty((n + 1, 3, 3))
    positions = np.empty((n + 1, 3))
    rotations[0] = np.eye(3)
    positions[0] = 0.0
    for i, rel in enumerate(rels, start=1):
        positions[i] = positions[i - 1] + rotations[i - 1] @ rel.translation
        rotations[i] = rotations[i - 1] @ rel.rotation.m
    return Trajectory(rotations, positions)


def relative_between(traj: Trajectory, i: int, j: int) -> RelativePose:
    """Pose of frame j expressed in frame i (0 <= i <= j < len(traj))."""
    n = len(traj)
    if not (0 <= i <= j < n):
        raise ValueError(f"invalid frame pair ({i}, {j}) for trajectory of {n} poses")
    if i == j:
        return RelativePose.identity()
    ri_t = traj.rotations[i].T
    return RelativePose(
        Rotation(ri_t @ traj.rotations[j]),
        ri_t @ (traj.positions[j] - traj.positions[i]),
    )
