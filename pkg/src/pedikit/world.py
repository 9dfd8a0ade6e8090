"""Deterministic desk-scale simulation.

The world steps base and joints kinematically at 50 Hz: joints follow their
commanded positions through a first-order lag with a rate limit, the base
integrates a saturated velocity command, and articulated scene objects
advance when the flagged toe moves through their grip region.  There is no
rigid-body dynamics; the point of the simulator is to exercise the
trajectory, command, reward, and dataset machinery end to end, and every
step is a pure function of the seed and the inputs.

Scene geometry is built from primitives (box, cylinder, sphere, hemisphere,
and composites of those) that support exact area-weighted surface sampling,
which is what the synthetic point clouds are drawn from.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .control import TrackingController, compute_reward
from .geometry import Pose, Quat
from .quadruped import (
    NUM_JOINTS,
    QuadrupedModel,
    RobotState,
    clamp_limits,
    leg_state,
    toe_orientation,
)
from .trajectory import FRAME_BODY, FRAME_WORLD, TrajectoryParams, build_command, express_params

CONTROL_DT = 0.02  # 50 Hz controller
PLANNER_EVERY = 5  # 10 Hz planner
POINT_CLOUD_SIZE = 768

JOINT_LAG_TAU = 0.06  # s, first-order actuator lag
JOINT_RATE_LIMIT = 10.0  # rad/s
BASE_MAX_LIN = 0.6  # m/s
BASE_MAX_YAW = 1.0  # rad/s
FREE_MAX_SPEED = 1.5  # m/s cap on released objects
FREE_FALL_RATE = 2.0  # m/s settle rate for released lifted objects


# --------------------------------------------------------------------------
# Surface primitives


@dataclass(frozen=True)
class Box:
    size: tuple[float, float, float]  # full extents; sits on z = 0

    def __post_init__(self):
        if min(self.size) <= 0:
            raise ValueError("box extents must be positive")

    def area(self) -> float:
        sx, sy, sz = self.size
        return 2.0 * (sx * sy + sy * sz + sx * sz)

    def sample_surface(self, rng: np.random.Generator, n: int) -> np.ndarray:
        sx, sy, sz = self.size
        faces = np.array([sx * sy, sx * sy, sy * sz, sy * sz, sx * sz, sx * sz])
        choice = rng.choice(6, size=n, p=faces / faces.sum())
        u = rng.uniform(-0.5, 0.5, size=n)
        v = rng.uniform(-0.5, 0.5, size=n)
        pts = np.empty((n, 3))
        for f in range(6):
            m = choice == f
            if not np.any(m):
                continue
            if f < 2:  # bottom, top
                pts[m, 0] = u[m] * sx
                pts[m, 1] = v[m] * sy
                pts[m, 2] = 0.0 if f == 0 else sz
            elif f < 4:  # -x, +x
                pts[m, 0] = (-0.5 if f == 2 else 0.5) * sx
                pts[m, 1] = u[m] * sy
                pts[m, 2] = (v[m] + 0.5) * sz
            else:  # -y, +y
                pts[m, 0] = u[m] * sx
                pts[m, 1] = (-0.5 if f == 4 else 0.5) * sy
                pts[m, 2] = (v[m] + 0.5) * sz
        return pts

    def surface_distance(self, p) -> float:
        sx, sy, sz = self.size
        lo = np.array([-0.5 * sx, -0.5 * sy, 0.0])
        hi = np.array([0.5 * sx, 0.5 * sy, sz])
        p = np.asarray(p, dtype=float)
        clamped = np.minimum(np.maximum(p, lo), hi)
        outside = float(np.linalg.norm(p - clamped))
        if outside > 0.0:
            return outside
        return float(np.min(np.minimum(p - lo, hi - p)))


@dataclass(frozen=True)
class Cylinder:
    radius: float
    height: float  # axis +z, base on z = 0

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("cylinder dimensions must be positive")

    def area(self) -> float:
        return 2.0 * math.pi * self.radius * self.height + 2.0 * math.pi * self.radius**2

    def sample_surface(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lat = 2.0 * math.pi * self.radius * self.height
        cap = math.pi * self.radius**2
        total = lat + 2 * cap
        choice = rng.choice(3, size=n, p=[lat / total, cap / total, cap / total])
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        u = rng.uniform(0.0, 1.0, size=n)
        pts = np.empty((n, 3))
        m = choice == 0
        pts[m, 0] = self.radius * np.cos(theta[m])
        pts[m, 1] = self.radius * np.sin(theta[m])
        pts[m, 2] = u[m] * self.height
        for f, z in ((1, 0.0), (2, self.height)):
            m = choice == f
            r = self.radius * np.sqrt(u[m])
            pts[m, 0] = r * np.cos(theta[m])
            pts[m, 1] = r * np.sin(theta[m])
            pts[m, 2] = z
        return pts

    def surface_distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        rp = math.hypot(p[0], p[1])
        dz_out = max(0.0, -p[2], p[2] - self.height)
        d_lat = math.hypot(rp - self.radius, dz_out)
        dr_out = max(0.0, rp - self.radius)
        return min(d_lat, math.hypot(dr_out, p[2]), math.hypot(dr_out, p[2] - self.height))


@dataclass(frozen=True)
class Sphere:
    radius: float  # centered on the local origin

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    def area(self) -> float:
        return 4.0 * math.pi * self.radius**2

    def sample_surface(self, rng: np.random.Generator, n: int) -> np.ndarray:
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.radius * v

    def surface_distance(self, p) -> float:
        return abs(float(np.linalg.norm(p)) - self.radius)


@dataclass(frozen=True)
class Hemisphere:
    radius: float  # dome over z >= 0 plus the flat base disk at z = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("hemisphere radius must be positive")

    def area(self) -> float:
        return 3.0 * math.pi * self.radius**2

    def sample_surface(self, rng: np.random.Generator, n: int) -> np.ndarray:
        dome = 2.0 / 3.0  # dome is two thirds of the total area
        on_dome = rng.uniform(size=n) < dome
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        u = rng.uniform(0.0, 1.0, size=n)
        pts = np.empty((n, 3))
        m = on_dome
        z = u[m] * self.radius  # uniform z is uniform area on a sphere
        rxy = np.sqrt(np.maximum(0.0, self.radius**2 - z**2))
        pts[m, 0] = rxy * np.cos(theta[m])
        pts[m, 1] = rxy * np.sin(theta[m])
        pts[m, 2] = z
        m = ~on_dome
        r = self.radius * np.sqrt(u[m])
        pts[m, 0] = r * np.cos(theta[m])
        pts[m, 1] = r * np.sin(theta[m])
        pts[m, 2] = 0.0
        return pts

    def surface_distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        rp = math.hypot(p[0], p[1])
        if p[2] >= 0.0:
            d_dome = abs(float(np.linalg.norm(p)) - self.radius)
        else:
            d_dome = math.hypot(rp - self.radius, p[2])
        dr_out = max(0.0, rp - self.radius)
        return min(d_dome, math.hypot(dr_out, p[2]))


@dataclass(frozen=True)
class Composite:
    children: tuple[tuple[Pose, "Primitive"], ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError("composite needs at least one child")

    def area(self) -> float:
        return sum(prim.area() for _, prim in self.children)

    def sample_surface(self, rng: np.random.Generator, n: int) -> np.ndarray:
        areas = np.array([prim.area() for _, prim in self.children])
        counts = rng.multinomial(n, areas / areas.sum())
        parts = []
        for (pose, prim), k in zip(self.children, counts):
            if k == 0:
                continue
            local = prim.sample_surface(rng, k)
            parts.append(local @ pose.matrix().T + pose.position)
        return np.concatenate(parts) if parts else np.empty((0, 3))

    def surface_distance(self, p) -> float:
        return min(prim.surface_distance(pose.invert().transform_point(p)) for pose, prim in self.children)


Primitive = Box | Cylinder | Sphere | Hemisphere | Composite


# --------------------------------------------------------------------------
# Scene objects and articulation


@dataclass(frozen=True)
class Articulation:
    """How an object yields to the flagged toe.

    ``hinge`` rotates the shape about a local axis through ``pivot``;
    ``prismatic`` translates it along ``axis`` (buttons); ``free`` makes the
    object follow the toe while in the grip region and roll out with decaying
    velocity on release.  ``grip`` is the local contact anchor at the neutral
    state.  Advance is proportional to the toe's motion along the free
    direction, scaled by ``gain``.
    """

    kind: str  # "hinge" | "prismatic" | "free"
    grip: tuple[float, float, float]
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    pivot: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gain: float = 1.0
    lo: float = 0.0
    hi: float = math.pi
    initial: float = 0.0
    planar: bool = False  # free only: ignore vertical follow (rolling balls)
    friction_tau: float = 1.5  # free only: velocity decay time constant, s

    def __post_init__(self):
        if self.kind not in ("hinge", "prismatic", "free"):
            raise ValueError(f"unknown articulation kind {self.kind!r}")
        if self.kind == "hinge" and abs(np.linalg.norm(self.axis)) < 1e-9:
            raise ValueError("hinge axis must be nonzero")


@dataclass(frozen=True)
class SceneObject:
    oid: str
    shape: Primitive
    pose: Pose  # base pose before articulation
    articulation: Articulation | None = None
    interaction_radius: float = 0.15


@dataclass
class _ObjectState:
    """Mutable per-episode articulation state."""

    value: float = 0.0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    in_contact: bool = False


class World:
    """One episode's mutable simulation state."""

    def __init__(self, model: QuadrupedModel, objects: list[SceneObject], start_base: Pose | None = None):
        self.model = model
        self.objects: dict[str, SceneObject] = {}
        for obj in objects:
            if obj.oid in self.objects:
                raise ValueError(f"duplicate object id {obj.oid!r}")
            self.objects[obj.oid] = obj
        self.obj_state: dict[str, _ObjectState] = {
            oid: _ObjectState(value=obj.articulation.initial if obj.articulation else 0.0)
            for oid, obj in self.objects.items()
        }
        if start_base is None:
            start_base = Pose(np.array([0.0, 0.0, model.base_height]), Quat.identity())
        self.start_base = start_base
        self.base = start_base
        self.yaw = 0.0
        self.q = model.q_stance.copy()
        self.qd = np.zeros(NUM_JOINTS)
        self.prev_action = model.q_stance.copy()
        self.base_lin_vel = np.zeros(3)
        self.base_ang_vel = np.zeros(3)
        self.tick_index = 0
        self.manipulator_leg = 0

    # -- scene queries ------------------------------------------------------

    def effective_pose(self, oid: str) -> Pose:
        obj = self.objects[oid]
        st = self.obj_state[oid]
        art = obj.articulation
        if art is None:
            return obj.pose
        if art.kind == "hinge":
            axis = np.asarray(art.axis, dtype=float)
            rot = Quat.from_axis_angle(axis, st.value)
            pivot = np.asarray(art.pivot, dtype=float)
            local = Pose(pivot - rot.rotate(pivot), rot)
            return obj.pose.compose(local)
        if art.kind == "prismatic":
            axis = np.asarray(art.axis, dtype=float)
            return obj.pose.compose(Pose(axis * st.value, Quat.identity()))
        # free: accumulated world-frame offset
        return Pose(obj.pose.position + st.offset, obj.pose.orientation)

    def grip_world(self, oid: str) -> np.ndarray:
        return self.effective_pose(oid).transform_point(np.asarray(self.objects[oid].articulation.grip, dtype=float))

    def surface_distance(self, point_world) -> float:
        """Distance from a world point to the nearest object surface."""
        if not self.objects:
            raise ValueError("empty scene")
        return min(
            self.objects[oid].shape.surface_distance(self.effective_pose(oid).invert().transform_point(point_world))
            for oid in self.objects
        )

    def state(self) -> RobotState:
        return RobotState(
            base=self.base,
            base_lin_vel=self.base_lin_vel,
            base_ang_vel=self.base_ang_vel,
            q=self.q,
            qd=self.qd,
            prev_action=self.prev_action,
            gravity_body=self.base.orientation.conjugate().rotate(np.array([0.0, 0.0, -1.0])),
        )

    def flagged_toe_world(self, leg: int) -> np.ndarray:
        ls = leg_state(self.model, self.q[3 * leg : 3 * leg + 3], leg)
        return self.base.transform_point(ls.toe)

    # -- dynamics -----------------------------------------------------------

    def step(self, q_desired, base_vel_cmd, flagged_leg: int | None = None) -> RobotState:
        """Advance one 50 Hz tick; deterministic in its inputs."""
        q_desired = np.asarray(q_desired, dtype=float)
        base_vel_cmd = np.asarray(base_vel_cmd, dtype=float)
        if q_desired.shape != (NUM_JOINTS,) or base_vel_cmd.shape != (3,):
            raise ValueError("expected 12 joint targets and a [vx, vy, yaw_rate] base command")
        if not (np.all(np.isfinite(q_desired)) and np.all(np.isfinite(base_vel_cmd))):
            raise ValueError("non-finite command input")
        leg = self.manipulator_leg if flagged_leg is None else int(flagged_leg)
        self.manipulator_leg = leg
        dt = CONTROL_DT

        toe_before = self.flagged_toe_world(leg)

        # Base: saturate, then integrate in the world frame (yaw-only attitude).
        v_xy = base_vel_cmd[:2].copy()
        speed = float(np.linalg.norm(v_xy))
        if speed > BASE_MAX_LIN:
            v_xy *= BASE_MAX_LIN / speed
        wz = max(-BASE_MAX_YAW, min(BASE_MAX_YAW, float(base_vel_cmd[2])))
        rot = self.base.orientation
        v_world = rot.rotate(np.array([v_xy[0], v_xy[1], 0.0]))
        self.yaw += wz * dt
        self.base = Pose(self.base.position + v_world * dt, Quat.from_yaw(self.yaw))
        self.base_lin_vel = v_world
        self.base_ang_vel = np.array([0.0, 0.0, wz])

        # Joints: first-order lag toward the command, rate limited, clamped.
        alpha = 1.0 - math.exp(-dt / JOINT_LAG_TAU)
        dq = np.clip((q_desired - self.q) * alpha, -JOINT_RATE_LIMIT * dt, JOINT_RATE_LIMIT * dt)
        q_new = clamp_limits(self.model, self.q + dq)
        self.qd = (q_new - self.q) / dt
        self.q = q_new

        toe_after = self.flagged_toe_world(leg)
        toe_delta = toe_after - toe_before
        self._advance_articulations(toe_after, toe_delta, dt)

        self.prev_action = q_desired.copy()
        self.tick_index += 1
        return self.state()

    def _advance_articulations(self, toe: np.ndarray, toe_delta: np.ndarray, dt: float) -> None:
        # Contact cannot transmit motion faster than the slew cap; a briefly
        # flailing toe (an IK branch change) must not fling objects.
        speed = float(np.linalg.norm(toe_delta)) / dt
        if speed > FREE_MAX_SPEED:
            toe_delta = toe_delta * (FREE_MAX_SPEED / speed)
        for oid, obj in self.objects.items():
            art = obj.articulation
            if art is None:
                continue
            st = self.obj_state[oid]
            grip = self.grip_world(oid)
            # Hysteresis: engaged contact survives until 1.25x the entry
            # radius, so a grip caught at the sphere edge is not dropped by
            # millimeter-scale tracking wobble.
            threshold = obj.interaction_radius * (1.25 if st.in_contact else 1.0)
            st.in_contact = float(np.linalg.norm(toe - grip)) <= threshold
            if art.kind == "free":
                if st.in_contact:
                    follow = toe_delta.copy()
                    if art.planar:
                        follow[2] = 0.0
                    st.offset = st.offset + follow
                    st.offset[2] = max(0.0, st.offset[2])  # the ground carries the object
                    st.velocity = follow / dt
                    st.velocity[2] = 0.0
                    v = float(np.linalg.norm(st.velocity))
                    if v > FREE_MAX_SPEED:
                        st.velocity *= FREE_MAX_SPEED / v
                else:
                    st.offset = st.offset + st.velocity * dt
                    st.velocity = st.velocity * math.exp(-dt / art.friction_tau)
                    if float(np.linalg.norm(st.velocity)) < 1e-3:
                        st.velocity = np.zeros(3)
                    if st.offset[2] > 0.0:  # released above rest height: settle
                        st.offset[2] = max(0.0, st.offset[2] - FREE_FALL_RATE * dt)
                continue
            if not st.in_contact:
                continue
            pose = self.effective_pose(oid)
            axis_w = pose.transform_direction(np.asarray(art.axis, dtype=float))
            axis_w /= np.linalg.norm(axis_w)
            if art.kind == "prismatic":
                st.value = min(art.hi, max(art.lo, st.value + art.gain * float(toe_delta @ axis_w)))
            else:  # hinge
                pivot_w = Pose(obj.pose.position, obj.pose.orientation).transform_point(
                    np.asarray(art.pivot, dtype=float)
                )
                r = grip - pivot_w
                r_perp = r - (r @ axis_w) * axis_w
                lever = float(np.linalg.norm(r_perp))
                if lever < 1e-6:
                    continue
                tangent = np.cross(axis_w, r_perp / lever)
                st.value = min(
                    art.hi, max(art.lo, st.value + art.gain * float(toe_delta @ tangent) / lever)
                )

    def apply_perturbation(self, object_id: str, delta: Pose) -> None:
        """Compose a world-frame pose delta onto an object mid-episode."""
        if object_id not in self.objects:
            raise KeyError(f"unknown object id {object_id!r}")
        obj = self.objects[object_id]
        self.objects[object_id] = SceneObject(
            oid=obj.oid,
            shape=obj.shape,
            pose=delta.compose(obj.pose),
            articulation=obj.articulation,
            interaction_radius=obj.interaction_radius,
        )

    # -- sensing ------------------------------------------------------------

    def synth_point_cloud(self, n: int = POINT_CLOUD_SIZE, seed=0) -> np.ndarray:
        """Area-weighted uniform surface samples over all objects, world frame.

        The robot body is excluded and there is no occlusion culling.
        Deterministic given the seed; returns exactly ``n`` points.
        """
        if n < 1:
            raise ValueError("point count must be >= 1")
        if not self.objects:
            raise ValueError("cannot sample a point cloud from an empty scene")
        rng = np.random.default_rng(seed)
        oids = list(self.objects)
        areas = np.array([self.objects[o].shape.area() for o in oids])
        counts = rng.multinomial(n, areas / areas.sum())
        parts = []
        for oid, k in zip(oids, counts):
            if k == 0:
                continue
            local = self.objects[oid].shape.sample_surface(rng, k)
            pose = self.effective_pose(oid)
            parts.append(local @ pose.matrix().T + pose.position)
        return np.concatenate(parts)


# --------------------------------------------------------------------------
# Episode orchestration


class HoldPlanner:
    """Null planner: freezes the flagged toe where the episode starts."""

    def __init__(self, flag: int = 0):
        self.flag = flag
        self._params: TrajectoryParams | None = None

    def plan(self, t_now, cloud, state: RobotState, world: World) -> TrajectoryParams:
        from .curves import OrientationTrack, RationalBezier

        if self._params is None:
            ls = leg_state(world.model, state.q[3 * self.flag : 3 * self.flag + 3], self.flag)
            toe_w = state.base.transform_point(ls.toe)
            ori_w = state.base.orientation * toe_orientation(ls.direction)
            self._params = TrajectoryParams(
                flag=self.flag,
                curve=RationalBezier(np.tile(toe_w, (7, 1)), np.ones(7)),
                orientation=OrientationTrack(ori_w, ori_w),
                duration=20.0,
                frame=FRAME_WORLD,
            )
        return self._params


@dataclass
class Episode:
    """Write-once log of one simulated episode."""

    task: str
    seed: int
    dt: float
    duration: float
    ticks: int
    object_ids: list[str]
    state_vecs: np.ndarray  # (T, 46) float32
    cmd_vecs: np.ndarray  # (T, 17) float32: flag, point, 3 lookaheads, quat
    reward_terms: np.ndarray  # (T, 6) float32: total + 5 terms
    toe_poses: np.ndarray  # (T, 4, 7) float32 world frame
    obj_log: np.ndarray  # (T, n_obj, 9) float32: pose7, articulation, contact
    pos_err: np.ndarray  # (T,) float32 flagged toe vs command, body frame
    ori_err: np.ndarray  # (T,) float32 direction angle, rad
    clouds: np.ndarray  # (P, 768, 3) float32
    planner_states: np.ndarray  # (P, 46) float32
    planner_params: np.ndarray  # (P, 39) float32
    actions: np.ndarray  # (P, 5, 12) float32
    final_values: dict[str, float]
    final_contact: dict[str, bool]
    success: bool | None = None
    fault: str | None = None

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (
            self.state_vecs,
            self.cmd_vecs,
            self.reward_terms,
            self.toe_poses,
            self.obj_log,
            self.pos_err,
            self.ori_err,
            self.clouds,
            self.planner_states,
            self.planner_params,
            self.actions,
        ):
            h.update(arr.tobytes())
        return h.hexdigest()


def _cloud_seed(seed: int, planner_idx: int):
    return (int(seed) & 0x7FFFFFFF, 0x5EED, planner_idx)


class EpisodeEngine:
    """Per-tick stepping and logging shared by episodes and teleop sessions.

    Encapsulates the 10 Hz plan / 50 Hz control cadence: at planner
    boundaries the parameter source is consulted (and a changed output
    re-anchors the phase clock); every control tick the active world-frame
    parameters are re-expressed into the body frame, the controller runs,
    the world steps, and the full log row is captured.
    """

    def __init__(self, task_name: str, world: World, controller: TrackingController, seed: int, duration: float):
        from .dataset import STATE_SIZE  # late import; dataset depends on world

        self.world = world
        self.controller = controller
        self.seed = seed
        controller.reset()
        n_ticks = int(round(duration / CONTROL_DT))
        n_plans = (n_ticks + PLANNER_EVERY - 1) // PLANNER_EVERY
        oids = list(world.objects)
        self.episode = Episode(
            task=task_name,
            seed=seed,
            dt=CONTROL_DT,
            duration=duration,
            ticks=n_ticks,
            object_ids=oids,
            state_vecs=np.zeros((n_ticks, STATE_SIZE), dtype=np.float32),
            cmd_vecs=np.zeros((n_ticks, 17), dtype=np.float32),
            reward_terms=np.zeros((n_ticks, 6), dtype=np.float32),
            toe_poses=np.zeros((n_ticks, 4, 7), dtype=np.float32),
            obj_log=np.zeros((n_ticks, len(oids), 9), dtype=np.float32),
            pos_err=np.zeros(n_ticks, dtype=np.float32),
            ori_err=np.zeros(n_ticks, dtype=np.float32),
            clouds=np.zeros((n_plans, POINT_CLOUD_SIZE, 3), dtype=np.float32),
            planner_states=np.zeros((n_plans, STATE_SIZE), dtype=np.float32),
            planner_params=np.zeros((n_plans, 39), dtype=np.float32),
            actions=np.zeros((n_plans, PLANNER_EVERY, NUM_JOINTS), dtype=np.float32),
            final_values={},
            final_contact={},
        )
        self.tick_index = 0
        self.plan_index = -1
        self.active: TrajectoryParams | None = None
        self.active_flat: np.ndarray | None = None
        self.clock = None
        self._window: list[RobotState] = []
        self._z_hat = np.array([0.0, 0.0, 1.0])

    @property
    def t_now(self) -> float:
        return self.tick_index * CONTROL_DT

    @property
    def done(self) -> bool:
        return self.tick_index >= self.episode.ticks

    def set_active_params(self, params: TrajectoryParams, restart_clock: bool = False) -> None:
        """Install world-frame parameters; optionally re-anchor the phase."""
        if params.frame != FRAME_WORLD:
            raise ValueError("active parameters must be world-frame")
        self.active = params
        self.active_flat = params.to_flat()
        if restart_clock or self.clock is None:
            self.clock = params.clock(self.t_now)

    def tick(self, planner=None) -> int:
        """Advance one 50 Hz tick; returns the tick index just logged."""
        from .dataset import state_vector  # late import; dataset depends on world

        world, ep = self.world, self.episode
        model = world.model
        tick = self.tick_index
        t_now = self.t_now
        state = world.state()

        if tick % PLANNER_EVERY == 0:
            self.plan_index += 1
            cloud = world.synth_point_cloud(POINT_CLOUD_SIZE, seed=_cloud_seed(self.seed, self.plan_index))
            if planner is not None:
                params = planner.plan(t_now, cloud, state, world)
                if params.frame != FRAME_WORLD:
                    raise ValueError("planners must emit world-frame parameters")
                flat = params.to_flat()
                if self.active_flat is None or not np.array_equal(flat, self.active_flat):
                    self.active, self.active_flat = params, flat
                    self.clock = params.clock(t_now)
            if self.active is None:
                raise ValueError("no active trajectory parameters")
            ep.clouds[self.plan_index] = cloud
            ep.planner_states[self.plan_index] = state_vector(state, self.active.flag, tick)
            ep.planner_params[self.plan_index] = self.active_flat

        params_body = express_params(self.active, state.base, FRAME_BODY)
        cmd = build_command(params_body, self.clock, t_now, CONTROL_DT)
        q_cmd, base_cmd = self.controller.tick(state, cmd)
        ep.actions[self.plan_index, tick % PLANNER_EVERY] = q_cmd
        new_state = world.step(q_cmd, base_cmd, flagged_leg=cmd.flag)

        self._window.append(new_state)
        if len(self._window) > 3:
            self._window.pop(0)
        padded = [self._window[0]] * (3 - len(self._window)) + self._window
        reward, terms = compute_reward(model, padded, cmd, dt=CONTROL_DT)

        leg = cmd.flag
        ls = leg_state(model, new_state.q[3 * leg : 3 * leg + 3], leg)
        dir_des = cmd.desired_orientation.rotate(self._z_hat)
        ep.state_vecs[tick] = state_vector(new_state, cmd.flag, tick)
        ep.cmd_vecs[tick, 0] = cmd.flag
        ep.cmd_vecs[tick, 1:4] = cmd.desired_point
        ep.cmd_vecs[tick, 4:13] = cmd.lookahead.ravel()
        ep.cmd_vecs[tick, 13:17] = cmd.desired_orientation.as_array()
        ep.reward_terms[tick, 0] = reward
        ep.reward_terms[tick, 1:] = [
            terms["pos_xy"],
            terms["pos_z"],
            terms["ori"],
            terms["ee_accel"],
            terms["base_accel"],
        ]
        for i in range(4):
            lsi = leg_state(model, new_state.q[3 * i : 3 * i + 3], i)
            ep.toe_poses[tick, i, :3] = new_state.base.transform_point(lsi.toe)
            ep.toe_poses[tick, i, 3:] = (
                new_state.base.orientation * toe_orientation(lsi.direction)
            ).as_array()
        for j, oid in enumerate(ep.object_ids):
            ep.obj_log[tick, j, :7] = world.effective_pose(oid).as_vec7()
            ep.obj_log[tick, j, 7] = world.obj_state[oid].value
            ep.obj_log[tick, j, 8] = float(world.obj_state[oid].in_contact)
        ep.pos_err[tick] = float(np.linalg.norm(ls.toe - cmd.desired_point))
        cos_a = float(np.clip(ls.direction @ dir_des, -1.0, 1.0))
        ep.ori_err[tick] = math.acos(cos_a)
        self.tick_index += 1
        return tick

    def finalize(self, task=None) -> Episode:
        ep = self.episode
        if ep.fault is None:
            for oid in ep.object_ids:
                ep.final_values[oid] = self.world.obj_state[oid].value
                ep.final_contact[oid] = self.world.obj_state[oid].in_contact
            if task is not None and hasattr(task, "success"):
                ep.success = bool(task.success(ep))
        return ep


def run_episode(
    task,
    planner,
    controller: TrackingController,
    seed: int,
    hooks=(),
    duration: float = 20.0,
) -> Episode:
    """Run one episode: 10 Hz planner over a 50 Hz controller and world.

    The planner is invoked every 5 control ticks with a fresh world-frame
    point cloud and the robot state; its world-frame parameters are
    re-expressed into the body frame every control tick.  A changed planner
    output re-anchors the phase clock at the current time.  Hooks run at the
    start of their tick and may mutate the world (perturbations).
    Everything is deterministic given the seed.
    """
    world: World = task.instantiate(seed)
    engine = EpisodeEngine(getattr(task, "name", str(task)), world, controller, seed, duration)
    try:
        while not engine.done:
            for hook in hooks:
                hook(world, engine.tick_index, engine.t_now)
            engine.tick(planner)
    except Exception as exc:  # noqa: BLE001 - faults become a diagnostic record
        engine.episode.fault = f"{type(exc).__name__}: {exc}"
        return engine.episode
    return engine.finalize(task)
