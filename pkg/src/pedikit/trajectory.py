"""Trajectory parameters: the planner-to-controller contract.

A parameter record names the manipulating forelimb, a 7-point weighted Bezier
position curve, a start/end orientation pair, and a duration, all tagged with
the reference frame the numbers are expressed in.  Planners emit parameters in
the world frame, task templates author them in the object frame, and the
controller consumes them in the body frame; `express_params` moves records
between those frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import CURVE_POINTS, OrientationTrack, PhaseClock, RationalBezier, lookahead_points
from .geometry import Pose, Quat

FRAME_OBJECT = "object"
FRAME_WORLD = "world"
FRAME_BODY = "body"
FRAMES = (FRAME_OBJECT, FRAME_WORLD, FRAME_BODY)
FRAME_CODES = {FRAME_OBJECT: 0.0, FRAME_WORLD: 1.0, FRAME_BODY: 2.0}

FLAG_FRONT_LEFT = 0
FLAG_FRONT_RIGHT = 1

# Flat serialization: flag, 21 point coords row-major, 7 weights,
# start/end quaternions wxyz, duration, frame code.
FLAT_SIZE = 1 + 3 * CURVE_POINTS + CURVE_POINTS + 8 + 1 + 1

# Supported frame hops and whether the supplied pose is applied inverted.
_HOPS = {
    (FRAME_OBJECT, FRAME_WORLD): False,
    (FRAME_WORLD, FRAME_OBJECT): True,
    (FRAME_WORLD, FRAME_BODY): True,
    (FRAME_BODY, FRAME_WORLD): False,
}


@dataclass(frozen=True)
class TrajectoryParams:
    """Complete command trajectory for one manipulation."""

    flag: int
    curve: RationalBezier
    orientation: OrientationTrack
    duration: float
    frame: str

    def __post_init__(self):
        if self.flag not in (FLAG_FRONT_LEFT, FLAG_FRONT_RIGHT):
            raise ValueError(f"manipulator flag must be 0 (front-left) or 1 (front-right), got {self.flag}")
        if not self.duration > 0.0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")

    def clock(self, t_start: float) -> PhaseClock:
        return PhaseClock(t_start, self.duration)

    def to_flat(self) -> np.ndarray:
        """Pack into the 39-number record used by datasets and the wire."""
        return np.concatenate(
            [
                [float(self.flag)],
                self.curve.control_points.ravel(),
                self.curve.weights,
                self.orientation.q_start.as_array(),
                self.orientation.q_end.as_array(),
                [self.duration, FRAME_CODES[self.frame]],
            ]
        )

    @staticmethod
    def from_flat(v) -> "TrajectoryParams":
        v = np.asarray(v, dtype=float)
        if v.shape != (FLAT_SIZE,):
            raise ValueError(f"expected {FLAT_SIZE} numbers, got shape {v.shape}")
        npts = CURVE_POINTS
        pts = v[1 : 1 + 3 * npts].reshape(npts, 3)
        w = v[1 + 3 * npts : 1 + 4 * npts]
        qa = v[1 + 4 * npts : 5 + 4 * npts]
        qb = v[5 + 4 * npts : 9 + 4 * npts]
        frame_code = v[-1]
        frame = {code: name for name, code in FRAME_CODES.items()}.get(frame_code)
        if frame is None:
            raise ValueError(f"unknown frame code {frame_code}")
        return TrajectoryParams(
            flag=int(round(v[0])),
            curve=RationalBezier(pts, w),
            orientation=OrientationTrack(Quat.from_array(qa), Quat.from_array(qb)),
            duration=float(v[-2]),
            frame=frame,
        )


@dataclass(frozen=True)
class ManipulationCommand:
    """Per-tick controller input, always expressed in the body frame."""

    flag: int
    desired_point: np.ndarray
    lookahead: np.ndarray
    desired_orientation: Quat

    def __post_init__(self):
        p = np.asarray(self.desired_point, dtype=float)
        la = np.asarray(self.lookahead, dtype=float)
        if p.shape != (3,):
            raise ValueError(f"desired point must be a 3-vector, got {p.shape}")
        if la.shape != (3, 3):
            raise ValueError(f"lookahead must be 3 x 3-vector, got {la.shape}")
        p = p.copy()
        la = la.copy()
        p.setflags(write=False)
        la.setflags(write=False)
        object.__setattr__(self, "desired_point", p)
        object.__setattr__(self, "lookahead", la)


@dataclass(frozen=True)
class RandomizationRanges:
    """Sampling intervals for random trajectory parameters.

    Defaults: control point x,y in [-2, 2] m, z in [0.01, 1.2] m, weights in
    [1, 2000], start/end orientation from uniform roll/yaw in [0, 2pi] and
    uniform cos(pitch) in [0, 1].
    """

    p_xy: tuple[float, float] = (-2.0, 2.0)
    p_z: tuple[float, float] = (0.01, 1.2)
    w: tuple[float, float] = (1.0, 2000.0)
    ori_phi_psi: tuple[float, float] = (0.0, 2.0 * math.pi)
    ori_cos_theta: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for name in ("p_xy", "p_z", "w", "ori_phi_psi", "ori_cos_theta"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"degenerate interval for {name}: [{lo}, {hi}]")
        if self.w[0] <= 0.0:
            raise ValueError("weights must stay strictly positive")


def _sample_orientation(rng: np.random.Generator, ranges: RandomizationRanges) -> Quat:
    # z-y-z: yaw about z, tilt about y, spin about the direction axis.
    # Uniform yaw/spin plus uniform cos(tilt) puts the tracked direction
    # uniformly on the upper hemisphere.
    phi = rng.uniform(*ranges.ori_phi_psi)
    psi = rng.uniform(*ranges.ori_phi_psi)
    pitch = math.acos(rng.uniform(*ranges.ori_cos_theta))
    z = (0.0, 0.0, 1.0)
    return Quat.from_axis_angle(z, psi) * Quat.from_axis_angle((0.0, 1.0, 0.0), pitch) * Quat.from_axis_angle(z, phi)


def sample_random_params(
    seed: int | np.random.Generator,
    ranges: RandomizationRanges = RandomizationRanges(),
    duration: float = 4.0,
) -> TrajectoryParams:
    """Draw body-frame trajectory parameters uniformly from ``ranges``.

    Deterministic given the seed; the same seed yields bit-identical output.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pts = np.empty((CURVE_POINTS, 3))
    pts[:, 0] = rng.uniform(*ranges.p_xy, size=CURVE_POINTS)
    pts[:, 1] = rng.uniform(*ranges.p_xy, size=CURVE_POINTS)
    pts[:, 2] = rng.uniform(*ranges.p_z, size=CURVE_POINTS)
    w = rng.uniform(*ranges.w, size=CURVE_POINTS)
    flag = int(rng.integers(0, 2))
    q_start = _sample_orientation(rng, ranges)
    q_end = _sample_orientation(rng, ranges)
    return TrajectoryParams(
        flag=flag,
        curve=RationalBezier(pts, w),
        orientation=OrientationTrack(q_start, q_end),
        duration=duration,
        frame=FRAME_BODY,
    )


def transform_params(params: TrajectoryParams, pose: Pose, new_frame: str) -> TrajectoryParams:
    """Apply a rigid transform to a parameter record (the raw frame action).

    Every control point is mapped through ``pose`` and both orientations are
    left-composed with its rotation; weights, flag, and duration are
    untouched.  Prefer :func:`express_params`, which checks that the hop
    between frame tags is meaningful.
    """
    if new_frame not in FRAMES:
        raise ValueError(f"frame must be one of {FRAMES}, got {new_frame!r}")
    pts = params.curve.control_points @ pose.matrix().T + pose.position
    return TrajectoryParams(
        flag=params.flag,
        curve=RationalBezier(pts, params.curve.weights),
        orientation=OrientationTrack(
            pose.orientation * params.orientation.q_start,
            pose.orientation * params.orientation.q_end,
        ),
        duration=params.duration,
        frame=new_frame,
    )


def express_params(params: TrajectoryParams, frame_pose: Pose, target: str) -> TrajectoryParams:
    """Re-express parameters in another frame.

    Supported hops: object<->world given the object pose in the world, and
    world<->body given the base pose in the world.  Going straight from
    object to body is rejected; route via the world frame so each hop names
    the pose it actually uses.
    """
    hop = (params.frame, target)
    if hop not in _HOPS:
        raise ValueError(f"unsupported frame hop {params.frame!r} -> {target!r}; route via the world frame")
    pose = frame_pose.invert() if _HOPS[hop] else frame_pose
    return transform_params(params, pose, target)


def build_command(
    params: TrajectoryParams, clock: PhaseClock, t_now: float, dt: float = 0.02
) -> ManipulationCommand:
    """Evaluate body-frame parameters into the per-tick controller command."""
    if params.frame != FRAME_BODY:
        raise ValueError(f"commands are built from body-frame parameters, got frame {params.frame!r}")
    t = clock.phase(t_now)
    return ManipulationCommand(
        flag=params.flag,
        desired_point=params.curve.point(t),
        lookahead=lookahead_points(params.curve, clock, t_now, dt, 3),
        desired_orientation=params.orientation.orientation(t),
    )
