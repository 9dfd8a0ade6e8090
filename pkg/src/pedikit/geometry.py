"""Quaternion and rigid-pose math shared by every other module.

Conventions used throughout the toolkit:

* quaternions are scalar-first ``(w, x, y, z)`` and kept unit-norm
* all angles are radians, all lengths are meters
* a ``Pose`` maps points expressed in its child frame into its parent frame
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-9


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Quat:
    """Unit quaternion, scalar first.

    The constructor renormalizes, so any ``Quat`` instance satisfies
    ``|q| = 1`` to within 1e-9.  ``q`` and ``-q`` encode the same rotation;
    comparisons go through :func:`quat_angle_between`, which accounts for
    the double cover.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if n < 1e-12:
            raise ValueError("zero-norm quaternion")
        if abs(n - 1.0) > 1e-15:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @staticmethod
    def identity() -> "Quat":
        return Quat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_array(a) -> "Quat":
        a = np.asarray(a, dtype=float)
        if a.shape != (4,):
            raise ValueError(f"expected a wxyz 4-vector, got shape {a.shape}")
        return Quat(a[0], a[1], a[2], a[3])

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "Quat":
        axis = _vec3(axis)
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise ValueError("zero-length rotation axis")
        half = 0.5 * angle
        s = math.sin(half) / n
        return Quat(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @staticmethod
    def from_yaw(yaw: float) -> "Quat":
        return Quat(math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw))

    @staticmethod
    def from_zyx(yaw: float, pitch: float, roll: float) -> "Quat":
        """Intrinsic z-y-x rotation: yaw about z, then pitch about y, then roll about x."""
        qz = Quat.from_axis_angle((0.0, 0.0, 1.0), yaw)
        qy = Quat.from_axis_angle((0.0, 1.0, 0.0), pitch)
        qx = Quat.from_axis_angle((1.0, 0.0, 0.0), roll)
        return qz * qy * qx

    @staticmethod
    def from_z_to(direction) -> "Quat":
        """Minimal rotation carrying the +z axis onto ``direction``."""
        d = _vec3(direction)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise ValueError("zero-length direction")
        d = d / n
        c = d[2]  # dot with z-hat
        if c > 1.0 - 1e-12:
            return Quat.identity()
        if c < -1.0 + 1e-12:
            # Antiparallel: rotate pi about x (any axis in the xy-plane works).
            return Quat(0.0, 1.0, 0.0, 0.0)
        axis = np.array([-d[1], d[0], 0.0])  # z-hat x d
        return Quat.from_axis_angle(axis, math.acos(max(-1.0, min(1.0, c))))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def __mul__(self, other: "Quat") -> "Quat":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        # Constructor renormalizes, bounding drift over long 50 Hz episodes.
        return Quat(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v) -> np.ndarray:
        """Rotate a 3-vector by this quaternion."""
        v = _vec3(v)
        w, x, y, z = self.w, self.x, self.y, self.z
        tx = 2.0 * (y * v[2] - z * v[1])
        ty = 2.0 * (z * v[0] - x * v[2])
        tz = 2.0 * (x * v[1] - y * v[0])
        return np.array(
            [
                v[0] + w * tx + y * tz - z * ty,
                v[1] + w * ty + z * tx - x * tz,
                v[2] + w * tz + x * ty - y * tx,
            ]
        )

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        xx, yy, zz = x * x, y * y, z * z
        wx, wy, wz = w * x, w * y, w * z
        xy, xz, yz = x * y, x * z, y * z
        return np.array(
            [
                [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
                [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
                [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
            ]
        )

    def angle_to(self, other: "Quat") -> float:
        return quat_angle_between(self, other)


def quat_angle_between(a: Quat, b: Quat) -> float:
    """Geodesic angle between two rotations, in [0, pi].

    Symmetric, and treats ``q`` and ``-q`` as the same rotation (the
    chord to whichever of ``b``/``-b`` is closer).  The arcsin form stays
    accurate for tiny angles where an arccos of the dot product loses
    precision.
    """
    av, bv = a.as_array(), b.as_array()
    chord = min(float(np.linalg.norm(av - bv)), float(np.linalg.norm(av + bv)))
    return 4.0 * math.asin(min(1.0, 0.5 * chord))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation then translation.

    ``transform_point`` maps a point in the child frame into the parent
    frame.  Instances are immutable values, safe to share across threads.
    """

    position: np.ndarray
    orientation: Quat

    def __post_init__(self):
        p = _vec3(self.position).copy()
        p.setflags(write=False)
        object.__setattr__(self, "position", p)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), Quat.identity())

    @staticmethod
    def from_xyz_yaw(x: float, y: float, z: float, yaw: float = 0.0) -> "Pose":
        return Pose(np.array([x, y, z]), Quat.from_yaw(yaw))

    @staticmethod
    def from_vec7(v) -> "Pose":
        v = np.asarray(v, dtype=float)
        if v.shape != (7,):
            raise ValueError(f"expected [x y z qw qx qy qz], got shape {v.shape}")
        return Pose(v[:3], Quat.from_array(v[3:]))

    def as_vec7(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation.as_array()])

    def matrix(self) -> np.ndarray:
        return self.orientation.to_matrix()

    def compose(self, other: "Pose") -> "Pose":
        """Chain transforms: (self o other) maps other's child frame into self's parent."""
        return Pose(
            self.position + self.orientation.rotate(other.position),
            self.orientation * other.orientation,
        )

    def invert(self) -> "Pose":
        inv = self.orientation.conjugate()
        return Pose(-inv.rotate(self.position), inv)

    def transform_point(self, pt) -> np.ndarray:
        return self.orientation.rotate(_vec3(pt)) + self.position

    def transform_direction(self, v) -> np.ndarray:
        return self.orientation.rotate(_vec3(v))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def transform_point(pose: Pose, pt) -> np.ndarray:
    return pose.transform_point(pt)
