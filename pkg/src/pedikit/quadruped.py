"""Kinematic model of a 12-DoF quadruped: four 3-joint legs on a floating base.

Leg order is fixed as [FL, FR, RL, RR]; each leg stacks a hip-abduction joint
(about the body x-axis), a hip-flexion joint (about y), and a knee (about y).
The foot toe is the end-effector.  The toe has no full 3-DoF orientation; its
orientation is defined as the unit toe-to-knee shank axis promoted to a
quaternion by the minimal rotation from the +z axis, which gives the
orientation-tracking reward a concrete vector to compare.

Geometry defaults approximate a mid-size quadruped and load from a
human-editable key = value config file; they are approximations, not vendor
data.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import Pose, Quat

LEG_NAMES = ("FL", "FR", "RL", "RR")
NUM_JOINTS = 12

DEFAULT_CONFIG = {
    "hip_offset": 0.083,
    "thigh": 0.25,
    "shank": 0.25,
    "mount_x": 0.24,
    "mount_y": 0.05,
    "abduction_lo": -0.87,
    "abduction_hi": 0.87,
    "flexion_lo": -3.35,
    "flexion_hi": 3.35,
    "knee_lo": -2.7,
    "knee_hi": 2.7,
    "stance_abduction": 0.0,
    "stance_flexion": 0.67,
    "stance_knee": -1.3,
    "base_height": 0.40,
    "torque_limit": 40.0,
}


def read_kv_config(path: str | Path) -> dict[str, float]:
    """Parse a flat ``key = value`` config file (floats only, # comments)."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        try:
            values[key.strip()] = float(val.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric value {val.strip()!r}") from exc
    return values


@dataclass(frozen=True)
class QuadrupedModel:
    """Immutable leg geometry, joint limits, and nominal stance."""

    hip_offset: float
    thigh: float
    shank: float
    mount_positions: np.ndarray  # (4, 3) on the base, leg order FL FR RL RR
    side_signs: np.ndarray  # (4,): +1 left legs, -1 right legs
    joint_lower: np.ndarray  # (12,)
    joint_upper: np.ndarray  # (12,)
    q_stance: np.ndarray  # (12,)
    base_height: float
    torque_limit: float

    def __post_init__(self):
        if not (self.hip_offset > 0 and self.thigh > 0 and self.shank > 0):
            raise ValueError("link lengths must be positive")
        if not np.all(self.joint_lower < self.joint_upper):
            raise ValueError("joint limits need lo < hi")
        for name in ("mount_positions", "side_signs", "joint_lower", "joint_upper", "q_stance"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @staticmethod
    def from_config(path: str | Path | None = None) -> "QuadrupedModel":
        cfg = dict(DEFAULT_CONFIG)
        if path is not None:
            overrides = read_kv_config(path)
            unknown = set(overrides) - set(cfg)
            if unknown:
                raise ValueError(f"unknown model config keys: {sorted(unknown)}")
            cfg.update(overrides)
        mx, my = cfg["mount_x"], cfg["mount_y"]
        mounts = np.array([[mx, my, 0.0], [mx, -my, 0.0], [-mx, my, 0.0], [-mx, -my, 0.0]])
        sides = np.array([1.0, -1.0, 1.0, -1.0])
        lo = np.tile([cfg["abduction_lo"], cfg["flexion_lo"], cfg["knee_lo"]], 4)
        hi = np.tile([cfg["abduction_hi"], cfg["flexion_hi"], cfg["knee_hi"]], 4)
        stance = np.tile([cfg["stance_abduction"], cfg["stance_flexion"], cfg["stance_knee"]], 4)
        return QuadrupedModel(
            hip_offset=cfg["hip_offset"],
            thigh=cfg["thigh"],
            shank=cfg["shank"],
            mount_positions=mounts,
            side_signs=sides,
            joint_lower=lo,
            joint_upper=hi,
            q_stance=stance,
            base_height=cfg["base_height"],
            torque_limit=cfg["torque_limit"],
        )

    @staticmethod
    def default() -> "QuadrupedModel":
        return QuadrupedModel.from_config(None)

    @property
    def reach(self) -> float:
        return self.thigh + self.shank

    def mount_poses(self) -> tuple[Pose, ...]:
        return tuple(Pose(p, Quat.identity()) for p in self.mount_positions)

    def hip_anchor(self, leg: int) -> np.ndarray:
        """Thigh pivot at zero abduction, in the body frame; the workspace center."""
        m = self.mount_positions[leg].copy()
        m[1] += self.side_signs[leg] * self.hip_offset
        return m

    def config_hash(self) -> str:
        parts = [
            f"{self.hip_offset:.9f}",
            f"{self.thigh:.9f}",
            f"{self.shank:.9f}",
            np.array2string(self.mount_positions, precision=9),
            np.array2string(self.joint_lower, precision=9),
            np.array2string(self.joint_upper, precision=9),
            np.array2string(self.q_stance, precision=9),
            f"{self.base_height:.9f}",
        ]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class LegState:
    """Body-frame kinematics of one leg at a joint configuration."""

    toe: np.ndarray  # (3,)
    knee: np.ndarray  # (3,)
    direction: np.ndarray  # unit toe-to-knee shank axis
    jac_pos: np.ndarray  # (3, 3) d toe / d q_leg
    jac_dir: np.ndarray  # (3, 3) d direction / d q_leg


def leg_state(model: QuadrupedModel, q_leg, leg: int) -> LegState:
    """Toe/knee positions, shank direction, and their Jacobians for one leg."""
    q1, q2, q3 = float(q_leg[0]), float(q_leg[1]), float(q_leg[2])
    s = model.side_signs[leg]
    m = model.mount_positions[leg]
    c1, s1 = math.cos(q1), math.sin(q1)
    s2 = math.sin(q2)
    c2 = math.cos(q2)
    s23 = math.sin(q2 + q3)
    c23 = math.cos(q2 + q3)

    off = s * model.hip_offset
    hip = np.array([m[0], m[1] + off * c1, m[2] + off * s1])
    thigh_dir = np.array([-s2, s1 * c2, -c1 * c2])  # unit, points hip -> knee
    knee = hip + model.thigh * thigh_dir
    shank_dir = np.array([-s23, s1 * c23, -c1 * c23])  # unit, points knee -> toe
    toe = knee + model.shank * shank_dir
    direction = -shank_dir

    # Geometric Jacobians: column i is axis_i x (point - joint_i), with the
    # abduction axis at (1,0,0) and the shared flexion/knee axis at (0,c1,s1).
    # Spelled out by hand: np.cross dominates the profile otherwise.
    def cross_a1(v):
        return np.array([0.0, -v[2], v[1]])

    def cross_a23(v):
        return np.array([c1 * v[2] - s1 * v[1], s1 * v[0], -c1 * v[0]])

    jac_pos = np.column_stack([cross_a1(toe - m), cross_a23(toe - hip), cross_a23(toe - knee)])
    d_col = cross_a23(direction)
    jac_dir = np.column_stack([cross_a1(direction), d_col, d_col])
    return LegState(toe=toe, knee=knee, direction=direction, jac_pos=jac_pos, jac_dir=jac_dir)


def toe_orientation(direction) -> Quat:
    """Promote the shank-axis direction to a quaternion (minimal rotation from +z)."""
    return Quat.from_z_to(direction)


def _wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def analytic_leg_ik(model: QuadrupedModel, target_body, leg: int) -> list[np.ndarray]:
    """Closed-form joint candidates placing the toe at a body-frame point.

    Solves abduction from the lateral-offset circle, then the planar two-link
    chain for both knee branches.  Candidates are clamped to joint limits and
    ordered by their true toe error, so the first entry is the best seed for
    an iterative refinement.
    """
    target = np.asarray(target_body, dtype=float)
    m = model.mount_positions[leg]
    s = model.side_signs[leg]
    d = target - m
    rr = math.hypot(d[1], d[2])
    base_ang = math.atan2(d[2], d[1])
    ratio = max(-1.0, min(1.0, (s * model.hip_offset) / rr)) if rr > 1e-9 else 1.0
    delta = math.acos(ratio)
    l2, l3 = model.thigh, model.shank

    candidates = []
    for q1 in (_wrap(base_ang + delta), _wrap(base_ang - delta)):
        zp = -math.sin(q1) * d[1] + math.cos(q1) * d[2]
        big_x, big_z = -d[0], -zp
        r2 = big_x * big_x + big_z * big_z
        cos_knee = max(-1.0, min(1.0, (r2 - l2 * l2 - l3 * l3) / (2.0 * l2 * l3)))
        for q3 in (math.acos(cos_knee), -math.acos(cos_knee)):
            q2 = _wrap(math.atan2(big_x, big_z) - math.atan2(l3 * math.sin(q3), l2 + l3 * math.cos(q3)))
            q_leg = np.clip(
                [q1, q2, q3],
                model.joint_lower[3 * leg : 3 * leg + 3],
                model.joint_upper[3 * leg : 3 * leg + 3],
            )
            err = float(np.linalg.norm(leg_state(model, q_leg, leg).toe - target))
            candidates.append((err, q_leg))
    candidates.sort(key=lambda pair: pair[0])
    return [q for _, q in candidates]


def forward_kinematics(model: QuadrupedModel, q, base: Pose) -> tuple[Pose, ...]:
    """World-frame toe poses of all four legs."""
    q = np.asarray(q, dtype=float)
    if q.shape != (NUM_JOINTS,):
        raise ValueError(f"expected 12 joint positions, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint vector contains non-finite values")
    poses = []
    for leg in range(4):
        ls = leg_state(model, q[3 * leg : 3 * leg + 3], leg)
        poses.append(
            Pose(base.transform_point(ls.toe), base.orientation * toe_orientation(ls.direction))
        )
    return tuple(poses)


def toe_positions_body(model: QuadrupedModel, q) -> np.ndarray:
    """Body-frame toe positions, (4, 3)."""
    q = np.asarray(q, dtype=float)
    return np.stack([leg_state(model, q[3 * leg : 3 * leg + 3], leg).toe for leg in range(4)])


def jacobian(model: QuadrupedModel, q, leg: int) -> np.ndarray:
    """Body-frame 3x3 position Jacobian of one leg's toe."""
    q = np.asarray(q, dtype=float)
    return leg_state(model, q[3 * leg : 3 * leg + 3], leg).jac_pos


def in_workspace(model: QuadrupedModel, base: Pose, leg: int, point_world) -> bool:
    """Whether a world point sits in the leg's reachable shell.

    The shell is centered on the zero-abduction thigh pivot and spans
    (0.05, 0.98) of the leg's full reach.
    """
    p_body = base.invert().transform_point(point_world)
    dist = float(np.linalg.norm(p_body - model.hip_anchor(leg)))
    return 0.05 * model.reach < dist < 0.98 * model.reach


def clamp_limits(model: QuadrupedModel, q) -> np.ndarray:
    """Componentwise clamp into the joint limits; idempotent."""
    return np.clip(np.asarray(q, dtype=float), model.joint_lower, model.joint_upper)


@dataclass(frozen=True)
class RobotState:
    """Proprioceptive snapshot produced by the simulator each control tick.

    ``gravity_body`` is the unit gravity direction in the body frame;
    serialization scales it by 9.81 (see the dataset layout descriptor).
    """

    base: Pose
    base_lin_vel: np.ndarray
    base_ang_vel: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    prev_action: np.ndarray
    gravity_body: np.ndarray

    def __post_init__(self):
        for name, size in (
            ("base_lin_vel", 3),
            ("base_ang_vel", 3),
            ("q", NUM_JOINTS),
            ("qd", NUM_JOINTS),
            ("prev_action", NUM_JOINTS),
            ("gravity_body", 3),
        ):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            if arr.shape != (size,):
                raise ValueError(f"{name} must have shape ({size},), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @staticmethod
    def at_rest(model: QuadrupedModel, base: Pose | None = None) -> "RobotState":
        if base is None:
            base = Pose(np.array([0.0, 0.0, model.base_height]), Quat.identity())
        zeros = np.zeros(3)
        return RobotState(
            base=base,
            base_lin_vel=zeros,
            base_ang_vel=zeros,
            q=model.q_stance,
            qd=np.zeros(NUM_JOINTS),
            prev_action=model.q_stance,
            gravity_body=base.orientation.conjugate().rotate(np.array([0.0, 0.0, -1.0])),
        )
