import math

import numpy as np
import pytest

from pedikit.geometry import Pose, Quat, quat_angle_between
from pedikit.quadruped import QuadrupedModel
from pedikit.tasks import (
    REGISTRY,
    TASK_NAMES,
    ScriptedExpertPlanner,
    choose_flag,
    get_task,
    hinge_closed,
    hinge_opened,
    instantiate,
    pressed,
)
from pedikit.trajectory import FRAME_WORLD
from pedikit.world import Composite, Cylinder, Hemisphere, HoldPlanner, run_episode


@pytest.fixture(scope="module")
def model():
    return QuadrupedModel.default()


class TestRegistry:
    def test_all_nine_present(self):
        assert set(REGISTRY) == set(TASK_NAMES)
        assert len(TASK_NAMES) == 9

    def test_unknown_task_lists_names(self):
        with pytest.raises(KeyError, match="press_button"):
            get_task("nope")

    def test_templates_are_object_frame(self):
        for name in TASK_NAMES:
            assert get_task(name).template_params().frame == "object"

    def test_template_z_within_generation_bounds(self):
        for name in TASK_NAMES:
            pts = get_task(name).template_params().curve.control_points
            assert np.all(pts[:, 2] >= 0.01) and np.all(pts[:, 2] <= 1.2)
            assert np.all(np.abs(pts[:, :2]) <= 2.0)
            w = get_task(name).template_params().curve.weights
            assert np.all(w >= 1.0) and np.all(w <= 2000.0)


class TestInstantiate:
    def test_button_is_10cm_hemisphere(self):
        world, _ = instantiate("press_button", seed=0)
        shape = world.objects["button"].shape
        assert isinstance(shape, Composite)
        domes = [prim for _, prim in shape.children if isinstance(prim, Hemisphere)]
        assert len(domes) == 1
        assert abs(2 * domes[0].radius - 0.10) < 1e-12

    def test_valve_dimensions(self):
        world, _ = instantiate("twist_valve", seed=3)
        shape = world.objects["valve"].shape
        wheels = [
            (pose, prim) for pose, prim in shape.children if isinstance(prim, Cylinder)
        ]
        assert len(wheels) == 1
        pose, wheel = wheels[0]
        assert abs(2 * wheel.radius - 0.40) < 1e-12
        assert abs(pose.position[2] - 0.60) < 1e-12  # axis height off the ground
        art = world.objects["valve"].articulation
        assert abs(art.pivot[2] - 0.60) < 1e-12

    def test_same_seed_identical_poses(self):
        for name in TASK_NAMES:
            _, poses_a = instantiate(name, seed=7)
            _, poses_b = instantiate(name, seed=7)
            for oid in poses_a:
                assert np.array_equal(poses_a[oid].as_vec7(), poses_b[oid].as_vec7())

    def test_seeds_vary_poses(self):
        _, a = instantiate("press_button", seed=0)
        _, b = instantiate("press_button", seed=1)
        assert not np.allclose(a["button"].position, b["button"].position)

    def test_randomization_box_respected(self):
        task = get_task("push_door")
        box = task.config["randomization"]
        for seed in range(50):
            pose = task.sample_root_pose(seed)
            assert box["x"][0] <= pose.position[0] <= box["x"][1]
            assert box["y"][0] <= pose.position[1] <= box["y"][1]


class TestExpertParams:
    def test_identity_pose_keeps_template(self):
        task = get_task("push_door")  # anchored to the object's own yaw
        template = task.template_params()
        out = task.expert_params(Pose.identity())
        assert out.frame == FRAME_WORLD
        assert np.allclose(out.curve.control_points, template.curve.control_points, atol=1e-12)
        assert np.array_equal(out.curve.weights, template.curve.weights)

    def test_yawed_object_rotates_points(self):
        task = get_task("push_door")
        template = task.template_params()
        pose = Pose.from_xyz_yaw(0.0, 0.0, 0.0, math.pi / 2)
        out = task.expert_params(pose)
        rot = pose.matrix()
        assert np.allclose(
            out.curve.control_points, template.curve.control_points @ rot.T, atol=1e-9
        )

    def test_flag_rule(self):
        assert choose_flag(Pose.from_xyz_yaw(1.0, 0.5, 0.0)) == 0  # left -> FL
        assert choose_flag(Pose.from_xyz_yaw(1.0, -0.5, 0.0)) == 1  # right -> FR
        assert choose_flag(Pose.from_xyz_yaw(1.0, 0.0, 0.0)) == 1  # tie -> FR

    def test_facing_start_places_approach_toward_origin(self):
        task = get_task("lift_basket")
        for yaw in (0.0, 1.5, math.pi):
            pose = Pose.from_xyz_yaw(1.0, 0.2, 0.0, yaw)
            out = task.expert_params(pose)
            # First control point must sit between the robot start and the
            # basket, whatever the sampled yaw.
            p0 = out.curve.control_points[0]
            assert np.linalg.norm(p0[:2]) < np.linalg.norm(pose.position[:2])

    def test_expert_replans_only_on_base_pose_change(self, model):
        task = get_task("press_button")
        world = task.instantiate(4)
        planner = ScriptedExpertPlanner(task)
        p1 = planner.plan(0.0, None, None, world)
        p2 = planner.plan(0.1, None, None, world)
        assert np.array_equal(p1.to_flat(), p2.to_flat())
        world.apply_perturbation("button", Pose.from_xyz_yaw(0.5, 0.0, 0.0))
        p3 = planner.plan(0.2, None, None, world)
        assert not np.array_equal(p1.to_flat(), p3.to_flat())


class TestSuccess:
    def test_scalar_predicates_monotone(self):
        for lo, hi in [(0.0, 0.3), (0.3, 0.9), (0.9, 2.0)]:
            assert hinge_opened(hi, 0.5) >= hinge_opened(lo, 0.5)
            assert hinge_closed(lo, 0.5) >= hinge_closed(hi, 0.5)
            assert pressed(hi, 0.5) >= pressed(lo, 0.5)

    def test_untouched_scene_fails_every_task(self, model):
        from pedikit.control import TrackingController

        for name in TASK_NAMES:
            task = get_task(name)
            ep = run_episode(task, HoldPlanner(), TrackingController(model), seed=2, duration=2.0)
            assert ep.fault is None, (name, ep.fault)
            assert task.success(ep) is False, name

    def test_incomplete_episode_rejected(self, model):
        task = get_task("press_button")

        class Boom:
            def plan(self, *a):
                raise RuntimeError("no plan")

        from pedikit.control import TrackingController

        ep = run_episode(task, Boom(), TrackingController(model), seed=0, duration=2.0)
        assert ep.fault is not None
        with pytest.raises(ValueError):
            task.success(ep)

    def test_press_button_end_to_end(self, model):
        task = get_task("press_button")
        ep = run_episode(task, ScriptedExpertPlanner(task), task.make_controller(model), seed=12)
        assert ep.success is True

    def test_lift_basket_with_perturbation(self, model):
        task = get_task("lift_basket")

        def shove(world, tick, t_now):
            if tick == 200:
                world.apply_perturbation("basket", Pose.from_xyz_yaw(1.5, 0.0, 0.0))

        ep = run_episode(
            task, ScriptedExpertPlanner(task), task.make_controller(model), seed=1, hooks=(shove,)
        )
        assert ep.success is True
