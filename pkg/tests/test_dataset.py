import hashlib

import numpy as np
import pytest

from pedikit.dataset import (
    ACTIONS_PER_RECORD,
    PARAMS_SIZE,
    STATE_SIZE,
    BadMagicError,
    ChecksumError,
    Dataset,
    TruncatedFileError,
    VersionMismatchError,
    collect,
    episode_seed,
    export_text,
    load,
    save,
    state_vector,
    tracking_report,
)
from pedikit.quadruped import QuadrupedModel, RobotState
from pedikit.tasks import get_task
from pedikit.world import HoldPlanner, run_episode


@pytest.fixture(scope="module")
def small_dataset():
    return collect("press_button", n_traj=2, workers=1, seed=11)


class TestStateVector:
    def test_layout_size(self):
        model = QuadrupedModel.default()
        v = state_vector(RobotState.at_rest(model), flag=1, tick=7)
        assert v.shape == (STATE_SIZE,)
        assert v.dtype == np.float32
        assert v[-2] == 1.0 and v[-1] == 7.0

    def test_gravity_scaled(self):
        model = QuadrupedModel.default()
        v = state_vector(RobotState.at_rest(model), flag=0, tick=0)
        g = v[41:44]
        assert abs(np.linalg.norm(g) - 9.81) < 1e-5

    def test_prev_action_summary(self):
        model = QuadrupedModel.default()
        s = RobotState.at_rest(model)
        v = state_vector(s, 0, 0)
        summary = v[37:41]
        prev = s.prev_action
        assert np.allclose(summary, [prev.mean(), prev.std(), prev.min(), prev.max()], atol=1e-6)


class TestCollect:
    def test_shapes_and_header(self, small_dataset):
        ds = small_dataset
        assert ds.clouds.shape == (2, 200, 768, 3)
        assert ds.states.shape == (2, 200, STATE_SIZE)
        assert ds.params.shape == (2, 200, PARAMS_SIZE)
        assert ds.actions.shape == (2, 200, ACTIONS_PER_RECORD)
        assert ds.header["task"] == "press_button"
        assert ds.header["planner_hz"] == 10 and ds.header["control_hz"] == 50
        assert len(ds.header["episode_seeds"]) == 2
        assert ds.header["layout"]["record"][0][0] == "cloud"

    def test_worker_invariance(self):
        a = collect("press_button", n_traj=3, workers=1, seed=5)
        b = collect("press_button", n_traj=3, workers=2, seed=5)
        assert a.body_digest() == b.body_digest()
        assert a.header["episode_seeds"] == b.header["episode_seeds"]

    def test_empty_dataset(self):
        ds = collect("press_button", n_traj=0, workers=1, seed=0)
        assert ds.n_trajectories == 0

    def test_params_stored_world_frame(self, small_dataset):
        frame_codes = small_dataset.params[:, :, -1]
        assert np.all(frame_codes == 1.0)

    def test_seed_map_deterministic(self):
        assert episode_seed(3, 17) == episode_seed(3, 17)
        assert episode_seed(3, 17) != episode_seed(3, 18)


class TestSaveLoad:
    def test_round_trip_bytes(self, small_dataset, tmp_path):
        p1 = tmp_path / "a.bin"
        p2 = tmp_path / "b.bin"
        save(small_dataset, p1)
        ds2 = load(p1)
        assert ds2.body_digest() == small_dataset.body_digest()
        save(ds2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_round_trip(self, tmp_path):
        ds = collect("press_button", n_traj=0, workers=1, seed=0)
        p = tmp_path / "empty.bin"
        save(ds, p)
        ds2 = load(p)
        assert ds2.n_trajectories == 0

    def test_corruption_names_record(self, small_dataset, tmp_path):
        p = tmp_path / "c.bin"
        save(small_dataset, p)
        raw = bytearray(p.read_bytes())
        # Flip one byte inside the second trajectory's payload.
        header_len = int(np.frombuffer(raw, dtype=np.uint32, count=1, offset=12)[0])
        rec_bytes = (768 * 3 + STATE_SIZE + PARAMS_SIZE + ACTIONS_PER_RECORD) * 4
        off = 16 + header_len + rec_bytes * 200 + rec_bytes * 3 + 100
        raw[off] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError) as err:
            load(p)
        assert err.value.trajectory == 1
        assert err.value.record == 3

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.bin"
        p.write_bytes(b"NOTMAGIC" + b"\0" * 64)
        with pytest.raises(BadMagicError):
            load(p)

    def test_version_mismatch(self, small_dataset, tmp_path):
        p = tmp_path / "v.bin"
        save(small_dataset, p)
        raw = bytearray(p.read_bytes())
        raw[8:12] = np.uint32(99).tobytes()
        p.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError):
            load(p)

    def test_truncation_detected(self, small_dataset, tmp_path):
        p = tmp_path / "t.bin"
        save(small_dataset, p)
        raw = p.read_bytes()
        p.write_bytes(raw[: len(raw) - 257])
        with pytest.raises(TruncatedFileError):
            load(p)

    def test_export_text(self, small_dataset, tmp_path):
        p = tmp_path / "dump.txt"
        export_text(small_dataset, p, max_records=5)
        lines = p.read_text().strip().splitlines()
        assert len(lines) == 6  # header + 5 records
        assert lines[1].startswith("0 0 ")


class TestStoredCloudAndParams:
    def test_cloud_points_on_surfaces(self):
        # Spot-check 1% of stored points against the objects' logged
        # effective poses at the matching planner tick (objects move when
        # articulated, so the t=0 scene is not enough).
        from pedikit.geometry import Pose
        from pedikit.tasks import ScriptedExpertPlanner

        model = QuadrupedModel.default()
        task = get_task("press_button")
        ep = run_episode(task, ScriptedExpertPlanner(task), task.make_controller(model), seed=11)
        shapes = {oid: obj.shape for oid, obj in task.instantiate(11).objects.items()}
        rng = np.random.default_rng(0)
        for plan_idx in rng.choice(ep.clouds.shape[0], size=20, replace=False):
            # Clouds observe the scene at tick start: the pose log entry of
            # the previous tick (the log records post-step poses).
            tick = max(0, plan_idx * 5 - 1)
            poses = [
                (Pose.from_vec7(ep.obj_log[tick, j, :7].astype(float)), shapes[oid])
                for j, oid in enumerate(ep.object_ids)
            ]
            for p in ep.clouds[plan_idx][:: 100]:
                d = min(
                    shape.surface_distance(pose.invert().transform_point(p.astype(float)))
                    for pose, shape in poses
                )
                assert d < 1e-5

    def test_params_round_trip_world_body_world(self, small_dataset):
        from pedikit.geometry import Pose, Quat
        from pedikit.trajectory import FRAME_BODY, FRAME_WORLD, TrajectoryParams, express_params

        rng = np.random.default_rng(1)
        flat = small_dataset.params[0, 50].astype(float)
        params = TrajectoryParams.from_flat(flat)
        for _ in range(20):
            base = Pose(rng.uniform(-1, 1, 3), Quat.from_yaw(rng.uniform(-3, 3)))
            body = express_params(params, base, FRAME_BODY)
            back = express_params(body, base, FRAME_WORLD)
            assert np.allclose(back.to_flat()[:-1], flat[:-1], atol=1e-6)


class TestTrackingReport:
    def test_null_planner_zero_error(self):
        model = QuadrupedModel.default()

        class _Task:
            name = "hold"

            def instantiate(self, seed):
                from pedikit.geometry import Pose
                from pedikit.world import SceneObject, Sphere, World

                return World(model, [SceneObject("s", Sphere(0.3), Pose.from_xyz_yaw(1.5, 0, 0))])

            def success(self, episode):
                return True

        from pedikit.control import TrackingController

        eps = [
            run_episode(_Task(), HoldPlanner(), TrackingController(model), seed=s, duration=4.0)
            for s in range(2)
        ]
        report = tracking_report(eps)
        assert float(report.pos_mean.max()) < 1e-9
        assert report.summary()["time_to_min_max"] == 0.0

    def test_report_shapes_and_table(self, small_dataset):
        model = QuadrupedModel.default()
        task = get_task("press_button")
        from pedikit.tasks import ScriptedExpertPlanner

        eps = [
            run_episode(task, ScriptedExpertPlanner(task), task.make_controller(model), seed=s)
            for s in range(2)
        ]
        report = tracking_report(eps)
        assert len(report.time) == 1000
        table = report.to_table()
        rows = table.strip().splitlines()
        assert rows[0].startswith("#")
        assert len(rows) == 1001
        s = report.summary()
        assert s["runs"] == 2
        assert s["reference_ori_floor"] == 0.4

    def test_requires_episodes(self):
        with pytest.raises(ValueError):
            tracking_report([])
