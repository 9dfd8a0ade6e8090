"""The nine loco-manipulation tasks: randomized scenes, object-frame expert
trajectory templates, and success predicates.

Each task ships as a JSON config holding its scene dimensions, randomization
box, success thresholds, and expert template (7 weighted control points plus
start/end toe directions, authored in the frame of the manipulated object).
Instantiation samples the root object's planar pose; satellites are placed
relative to it.  The scripted expert re-derives world-frame parameters from
the manipulated object's base pose, so a perturbed object simply gets a fresh
plan.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .control import ControllerConfig, TrackingController
from .geometry import Pose, Quat
from .curves import OrientationTrack, RationalBezier
from .quadruped import QuadrupedModel
from .trajectory import (
    FRAME_OBJECT,
    FRAME_WORLD,
    TrajectoryParams,
    express_params,
)
from .world import (
    Articulation,
    Box,
    Composite,
    Cylinder,
    Hemisphere,
    SceneObject,
    Sphere,
    World,
)

TASK_NAMES = (
    "press_button",
    "pull_handle",
    "push_door",
    "lift_basket",
    "open_dishwasher",
    "close_dishwasher",
    "pull_objects",
    "twist_valve",
    "shoot_ball",
)

_TEMPLATE_Z_RANGE = (0.01, 1.2)
_FLAG_TIE_EPS = 1e-9

_ROT_Z_TO_X = Quat.from_axis_angle((0.0, 1.0, 0.0), math.pi / 2.0)
_ROT_Z_TO_NEG_X = Quat.from_axis_angle((0.0, 1.0, 0.0), -math.pi / 2.0)


def _load_config(name: str) -> dict:
    path = resources.files("pedikit").joinpath(f"configs/tasks/{name}.json")
    return json.loads(path.read_text())


def _template_from_config(cfg: dict) -> tuple[RationalBezier, OrientationTrack, float]:
    t = cfg["template"]
    pts = np.asarray(t["points"], dtype=float)
    if np.any(pts[:, 2] < _TEMPLATE_Z_RANGE[0]) or np.any(pts[:, 2] > _TEMPLATE_Z_RANGE[1]):
        raise ValueError(f"{cfg['name']}: template z outside {_TEMPLATE_Z_RANGE}")
    curve = RationalBezier(pts, np.asarray(t["weights"], dtype=float))
    track = OrientationTrack(Quat.from_z_to(t["dir_start"]), Quat.from_z_to(t["dir_end"]))
    return curve, track, float(t["duration"])


def choose_flag(object_pose: Pose) -> int:
    """Nearest forelimb by lateral offset; exact center ties go front-right."""
    return 0 if object_pose.position[1] > _FLAG_TIE_EPS else 1


# --------------------------------------------------------------------------
# Scene builders (root pose is the sampled planar pose of the task's object)


def _build_press_button(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    r = dims["button_diameter"] / 2.0
    ped = tuple(dims["pedestal_size"])
    dome_z = ped[2]
    shape = Composite(
        (
            (Pose.identity(), Box(ped)),
            (Pose(np.array([0.0, 0.0, dome_z]), Quat.identity()), Hemisphere(r)),
        )
    )
    art = Articulation(
        kind="prismatic",
        grip=(0.0, 0.0, dome_z + r - 0.01),
        axis=(0.0, 0.0, -1.0),
        gain=cfg["gain"],
        lo=0.0,
        hi=0.06,
    )
    return [SceneObject("button", shape, root, art, cfg["interaction_radius"])]


def _build_pull_handle(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    h = dims["pivot_height"]
    wall = SceneObject(
        "wall",
        Box(tuple(dims["wall_size"])),
        root.compose(Pose.from_xyz_yaw(dims["wall_size"][0] / 2.0, 0.0, 0.0)),
    )
    lever_shape = Composite(
        (
            (
                Pose(np.array([0.0, 0.0, h]), _ROT_Z_TO_NEG_X),
                Cylinder(dims["lever_radius"], dims["lever_length"]),
            ),
        )
    )
    art = Articulation(
        kind="hinge",
        grip=(-(dims["lever_length"] - 0.03), 0.0, h),
        axis=(0.0, -1.0, 0.0),
        pivot=(0.0, 0.0, h),
        gain=cfg["gain"],
        lo=0.0,
        hi=1.2,
    )
    return [SceneObject("handle", lever_shape, root, art, cfg["interaction_radius"]), wall]


def _build_push_door(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    dx, dy, dz = dims["door_size"]
    door_shape = Composite(((Pose.from_xyz_yaw(0.0, dy / 2.0, 0.0), Box((dx, dy, dz))),))
    art = Articulation(
        kind="hinge",
        grip=(-dx / 2.0 - 0.01, 0.55, 0.45),
        axis=(0.0, 0.0, -1.0),
        pivot=(0.0, 0.0, 0.45),
        gain=cfg["gain"],
        lo=0.0,
        hi=2.0,
    )
    post = SceneObject(
        "post",
        Box(tuple(dims["post_size"])),
        root.compose(Pose.from_xyz_yaw(0.0, -0.08, 0.0)),
    )
    return [SceneObject("door", door_shape, root, art, cfg["interaction_radius"]), post]


def _build_lift_basket(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    art = Articulation(
        kind="free",
        grip=(0.0, 0.0, dims["basket_height"] + 0.02),
        gain=cfg["gain"],
        planar=False,
        friction_tau=1.0,
    )
    shape = Cylinder(dims["basket_radius"], dims["basket_height"])
    return [SceneObject("basket", shape, root, art, cfg["interaction_radius"])]


def _dishwasher_objects(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    bx, by, bz = dims["body_size"]
    dx, dy, dz = dims["door_size"]
    hz = dims["hinge_height"]
    body = SceneObject("body", Box((bx, by, bz)), root.compose(Pose.from_xyz_yaw(bx / 2.0 + 0.02, 0.0, 0.0)))
    door_shape = Composite(((Pose.from_xyz_yaw(-dx / 2.0, 0.0, hz), Box((dx, dy, dz))),))
    art = Articulation(
        kind="hinge",
        grip=(-dx - 0.01, 0.0, hz + dz - 0.02),
        axis=(0.0, -1.0, 0.0),
        pivot=(0.0, 0.0, hz),
        gain=cfg["gain"],
        lo=0.0,
        hi=1.5,
        initial=cfg.get("initial_angle", 0.0),
    )
    return [SceneObject("door", door_shape, root, art, cfg["interaction_radius"]), body]


def _build_pull_objects(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    table = SceneObject("table", Box(tuple(dims["table_size"])), root)
    ox, oy = dims["item_offset"]
    sx, sy, sz = dims["item_size"]
    item_pose = root.compose(Pose.from_xyz_yaw(ox, oy, dims["table_size"][2]))
    art = Articulation(
        kind="free",
        grip=(0.0, 0.0, sz + 0.01),
        gain=cfg["gain"],
        planar=True,
        friction_tau=0.6,
    )
    return [SceneObject("item", Box((sx, sy, sz)), item_pose, art, cfg["interaction_radius"]), table]


def _build_twist_valve(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    r = dims["wheel_diameter"] / 2.0
    h = dims["axis_height"]
    thick = dims["wheel_thickness"]
    knob_r = dims["knob_radius"]
    wheel_shape = Composite(
        (
            (Pose(np.array([0.06, 0.0, h]), _ROT_Z_TO_X), Cylinder(r, thick)),
            (Pose.from_xyz_yaw(0.04, 0.0, h + r - knob_r), Sphere(knob_r)),
        )
    )
    art = Articulation(
        kind="hinge",
        grip=(0.02, 0.0, h + r - knob_r),
        axis=(1.0, 0.0, 0.0),
        pivot=(0.0, 0.0, h),
        gain=cfg["gain"],
        lo=-3.0,
        hi=3.0,
    )
    wall = SceneObject(
        "wall",
        Box(tuple(dims["wall_size"])),
        root.compose(Pose.from_xyz_yaw(0.06 + thick + dims["wall_size"][0] / 2.0, 0.0, 0.0)),
    )
    return [SceneObject("valve", wheel_shape, root, art, cfg["interaction_radius"]), wall]


def _build_shoot_ball(cfg: dict, root: Pose) -> list[SceneObject]:
    dims = cfg["dimensions"]
    r = dims["ball_radius"]
    ball_shape = Composite(((Pose.from_xyz_yaw(0.0, 0.0, r), Sphere(r)),))
    art = Articulation(
        kind="free",
        grip=(0.0, 0.0, r),
        gain=cfg["gain"],
        planar=True,
        friction_tau=cfg.get("friction_tau", 3.0),
    )
    panel_x = dims["goal_region_x"][1] + 0.03
    panel = SceneObject(
        "goal",
        Box(tuple(dims["panel_size"])),
        root.compose(Pose.from_xyz_yaw(panel_x, 0.0, 0.0)),
    )
    return [SceneObject("ball", ball_shape, root, art, cfg["interaction_radius"]), panel]


_BUILDERS = {
    "press_button": _build_press_button,
    "pull_handle": _build_pull_handle,
    "push_door": _build_push_door,
    "lift_basket": _build_lift_basket,
    "open_dishwasher": _dishwasher_objects,
    "close_dishwasher": _dishwasher_objects,
    "pull_objects": _build_pull_objects,
    "twist_valve": _build_twist_valve,
    "shoot_ball": _build_shoot_ball,
}

_TEMPLATE_OBJECTS = {
    "press_button": "button",
    "pull_handle": "handle",
    "push_door": "door",
    "lift_basket": "basket",
    "open_dishwasher": "door",
    "close_dishwasher": "door",
    "pull_objects": "item",
    "twist_valve": "valve",
    "shoot_ball": "ball",
}


# --------------------------------------------------------------------------
# Success predicates (scalar layer kept separate so monotonicity is testable)


def hinge_opened(angle: float, threshold: float) -> bool:
    return angle >= threshold


def hinge_closed(angle: float, threshold: float) -> bool:
    return angle <= threshold


def pressed(depth: float, threshold: float) -> bool:
    return depth >= threshold


def _object_index(episode, oid: str) -> int:
    return episode.object_ids.index(oid)


def _success_press_button(cfg, episode) -> bool:
    j = _object_index(episode, "button")
    return pressed(float(episode.obj_log[:, j, 7].max()), cfg["success"]["press_depth"])


def _success_hinge_min(oid: str):
    def check(cfg, episode) -> bool:
        j = _object_index(episode, oid)
        return hinge_opened(float(np.abs(episode.obj_log[:, j, 7]).max()), cfg["success"]["min_angle"])

    return check


def _success_close_dishwasher(cfg, episode) -> bool:
    j = _object_index(episode, "door")
    return hinge_closed(float(episode.obj_log[-1, j, 7]), cfg["success"]["max_angle"])


def _success_lift_basket(cfg, episode) -> bool:
    j = _object_index(episode, "basket")
    height = episode.obj_log[:, j, 2]
    contact = episode.obj_log[:, j, 8] > 0.5
    held_high = contact & (height >= cfg["success"]["lift_height"])
    base_xy = episode.state_vecs[:, 0:2].astype(float)
    steps = np.linalg.norm(np.diff(base_xy, axis=0), axis=1)
    carried = float(np.sum(steps[held_high[1:]]))
    return carried >= cfg["success"]["carry_distance"]


def _success_pull_objects(cfg, episode) -> bool:
    jt = _object_index(episode, "table")
    ji = _object_index(episode, "item")
    table_pose = Pose.from_vec7(episode.obj_log[-1, jt, :7].astype(float))
    item_pos = episode.obj_log[-1, ji, :3].astype(float)
    rel = table_pose.invert().transform_point(item_pos)
    sx, sy, _ = cfg["dimensions"]["table_size"]
    return bool(abs(rel[0]) > sx / 2.0 or abs(rel[1]) > sy / 2.0)


def _success_shoot_ball(cfg, episode) -> bool:
    jb = _object_index(episode, "ball")
    jg = _object_index(episode, "goal")
    goal_pose = Pose.from_vec7(episode.obj_log[-1, jg, :7].astype(float))
    ball = episode.obj_log[-1, jb, :3].astype(float)
    rel = goal_pose.invert().transform_point(ball)
    lo, hi = cfg["dimensions"]["goal_region_x"]
    depth = hi + 0.03 - lo  # region measured back from the panel
    return bool(-depth <= rel[0] <= 0.0 and abs(rel[1]) <= cfg["dimensions"]["goal_half_width"])


_SUCCESS = {
    "press_button": _success_press_button,
    "pull_handle": _success_hinge_min("handle"),
    "push_door": _success_hinge_min("door"),
    "lift_basket": _success_lift_basket,
    "open_dishwasher": _success_hinge_min("door"),
    "close_dishwasher": _success_close_dishwasher,
    "pull_objects": _success_pull_objects,
    "twist_valve": _success_hinge_min("valve"),
    "shoot_ball": _success_shoot_ball,
}


# --------------------------------------------------------------------------
# Task spec and registry


@dataclass(frozen=True)
class TaskSpec:
    name: str
    config: dict
    template_object: str

    def sample_root_pose(self, seed) -> Pose:
        rng = np.random.default_rng((int(seed) & 0x7FFFFFFF, 0x7A5C))
        r = self.config["randomization"]
        x = rng.uniform(*r["x"])
        y = rng.uniform(*r["y"])
        yaw = rng.uniform(*r["yaw"])
        return Pose.from_xyz_yaw(x, y, 0.0, yaw)

    def build_scene(self, root: Pose) -> list[SceneObject]:
        return _BUILDERS[self.name](self.config, root)

    def instantiate(self, seed, model: QuadrupedModel | None = None) -> World:
        if model is None:
            model = QuadrupedModel.default()
        return World(model, self.build_scene(self.sample_root_pose(seed)))

    def controller_config(self, base: ControllerConfig | None = None) -> ControllerConfig:
        """Controller defaults with this task's overrides applied."""
        cfg = base or ControllerConfig()
        overrides = self.config.get("controller", {})
        return dataclasses.replace(cfg, **overrides) if overrides else cfg

    def make_controller(self, model: QuadrupedModel) -> TrackingController:
        return TrackingController(model, self.controller_config())

    def template_params(self) -> TrajectoryParams:
        curve, track, duration = _template_from_config(self.config)
        return TrajectoryParams(
            flag=1, curve=curve, orientation=track, duration=duration, frame=FRAME_OBJECT
        )

    def template_pose(self, object_pose: Pose) -> Pose:
        """Frame the expert template is anchored in.

        Rotationally symmetric objects (button, basket) use the object's
        position with the yaw that faces the robot start, so the approach
        always comes from the robot's side regardless of the sampled yaw.
        """
        if self.config.get("template_frame") == "facing_start":
            p = object_pose.position
            return Pose(p, Quat.from_yaw(math.atan2(p[1], p[0])))
        return object_pose

    def expert_params(self, object_pose: Pose) -> TrajectoryParams:
        """Object-frame template re-expressed into the world at this pose."""
        params = express_params(self.template_params(), self.template_pose(object_pose), FRAME_WORLD)
        flag = choose_flag(object_pose)
        if flag != params.flag:
            params = TrajectoryParams(
                flag=flag,
                curve=params.curve,
                orientation=params.orientation,
                duration=params.duration,
                frame=params.frame,
            )
        return params

    def success(self, episode) -> bool:
        if episode.fault is not None or episode.ticks == 0:
            raise ValueError(f"cannot judge an incomplete episode (fault={episode.fault!r})")
        return _SUCCESS[self.name](self.config, episode)


def _make_registry() -> dict[str, TaskSpec]:
    reg = {}
    for name in TASK_NAMES:
        cfg = _load_config(name)
        _template_from_config(cfg)  # validate eagerly at import
        reg[name] = TaskSpec(name=name, config=cfg, template_object=_TEMPLATE_OBJECTS[name])
    return reg


REGISTRY: dict[str, TaskSpec] = _make_registry()


def get_task(name: str) -> TaskSpec:
    if name not in REGISTRY:
        raise KeyError(f"unknown task {name!r}; valid tasks: {', '.join(TASK_NAMES)}")
    return REGISTRY[name]


def instantiate(task: TaskSpec | str, seed) -> tuple[World, dict[str, Pose]]:
    """Build a randomized scene; returns the world and the object base poses."""
    spec = get_task(task) if isinstance(task, str) else task
    world = spec.instantiate(seed)
    return world, {oid: obj.pose for oid, obj in world.objects.items()}


class ScriptedExpertPlanner:
    """Re-derives world-frame expert parameters from the manipulated object's
    base pose every planner tick, so perturbed objects get a fresh plan.

    Articulation state (a swinging door, a carried basket) lives outside the
    base pose, which keeps self-caused motion from restarting the plan.
    """

    def __init__(self, task: TaskSpec):
        self.task = task

    def plan(self, t_now, cloud, state, world: World) -> TrajectoryParams:
        pose = world.objects[self.task.template_object].pose
        return self.task.expert_params(pose)
