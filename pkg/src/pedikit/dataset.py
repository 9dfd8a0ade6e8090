"""Expert-demonstration datasets and tracking-error reports.

A dataset holds trajectories recorded at the 10 Hz planner cadence; each
record is a 768-point world-frame cloud, a 46-slot robot state vector, the
39-slot trajectory parameter record, and optionally the five 50 Hz actions
that followed.  The on-disk container is little-endian: magic, version, a
self-describing JSON header (layout table included, so consumers never guess
slot meanings), a float32 body, and a per-record CRC32 table.

Collection fans episodes out over a process pool; trajectories are kept in
seed order and failures are excluded and backfilled with fresh seeds, so the
output bytes never depend on the worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import zlib
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .control import ControllerConfig, RewardWeights, TrackingController
from .quadruped import QuadrupedModel, RobotState
from .world import CONTROL_DT, PLANNER_EVERY, POINT_CLOUD_SIZE, Episode, run_episode

MAGIC = b"PEDIDS01"
VERSION = 1
GRAVITY_SCALE = 9.81

STATE_LAYOUT = (
    ("base_position", 3),
    ("base_quaternion_wxyz", 4),
    ("base_linear_velocity_world", 3),
    ("base_angular_velocity_world", 3),
    ("joint_positions", 12),
    ("joint_velocities", 12),
    ("prev_action_summary_mean_std_min_max", 4),
    ("gravity_body_times_9.81", 3),
    ("manipulator_flag", 1),
    ("tick", 1),
)
STATE_SIZE = sum(n for _, n in STATE_LAYOUT)  # 46

PARAMS_SIZE = 39
ACTIONS_PER_RECORD = PLANNER_EVERY * 12  # five 50 Hz actions, flattened


class DatasetError(Exception):
    """Base for dataset container faults."""


class BadMagicError(DatasetError):
    pass


class VersionMismatchError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class ChecksumError(DatasetError):
    def __init__(self, trajectory: int, record: int):
        super().__init__(f"checksum mismatch in trajectory {trajectory}, record {record}")
        self.trajectory = trajectory
        self.record = record


def state_vector(state: RobotState, flag: int, tick: int) -> np.ndarray:
    """Serialize a robot state into the documented 46-slot float32 layout."""
    prev = state.prev_action
    summary = [float(prev.mean()), float(prev.std()), float(prev.min()), float(prev.max())]
    return np.concatenate(
        [
            state.base.position,
            state.base.orientation.as_array(),
            state.base_lin_vel,
            state.base_ang_vel,
            state.q,
            state.qd,
            summary,
            state.gravity_body * GRAVITY_SCALE,
            [float(flag), float(tick)],
        ]
    ).astype(np.float32)


def _reward_config_hash(weights: RewardWeights) -> str:
    return hashlib.sha256(repr(weights).encode()).hexdigest()[:16]


@dataclass
class Dataset:
    """In-memory dataset: header plus per-trajectory record arrays."""

    header: dict
    clouds: np.ndarray  # (n, R, 768, 3) float32
    states: np.ndarray  # (n, R, 46) float32
    params: np.ndarray  # (n, R, 39) float32
    actions: np.ndarray | None = None  # (n, R, 60) float32

    @property
    def n_trajectories(self) -> int:
        return self.clouds.shape[0]

    @property
    def records_per_trajectory(self) -> int:
        return self.clouds.shape[1]

    def record_bytes(self, traj: int, record: int) -> bytes:
        parts = [
            self.clouds[traj, record].tobytes(),
            self.states[traj, record].tobytes(),
            self.params[traj, record].tobytes(),
        ]
        if self.actions is not None:
            parts.append(self.actions[traj, record].tobytes())
        return b"".join(parts)

    def body_digest(self) -> str:
        h = hashlib.sha256()
        for t in range(self.n_trajectories):
            for r in range(self.records_per_trajectory):
                h.update(self.record_bytes(t, r))
        return h.hexdigest()


def _header_json(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode()


def save(dataset: Dataset, path: str | Path) -> None:
    """Write the container; ``save`` then ``load`` is byte-identity on the body."""
    path = Path(path)
    header = dict(dataset.header)
    header["n_trajectories"] = dataset.n_trajectories
    header["records_per_trajectory"] = dataset.records_per_trajectory
    header["has_actions"] = dataset.actions is not None
    hjson = _header_json(header)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(VERSION).tobytes())
        f.write(np.uint32(len(hjson)).tobytes())
        f.write(hjson)
        crcs = np.empty(dataset.n_trajectories * dataset.records_per_trajectory, dtype=np.uint32)
        i = 0
        for t in range(dataset.n_trajectories):
            for r in range(dataset.records_per_trajectory):
                blob = dataset.record_bytes(t, r)
                crcs[i] = zlib.crc32(blob)
                i += 1
                f.write(blob)
        f.write(crcs.tobytes())


def load(path: str | Path) -> Dataset:
    """Read and validate a container; corruption reports name the record."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8:
        raise TruncatedFileError(f"{path}: too short to hold a header")
    if raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:len(MAGIC)]!r}")
    off = len(MAGIC)
    version = int(np.frombuffer(raw, dtype=np.uint32, count=1, offset=off)[0])
    if version != VERSION:
        raise VersionMismatchError(f"{path}: container version {version}, expected {VERSION}")
    off += 4
    hlen = int(np.frombuffer(raw, dtype=np.uint32, count=1, offset=off)[0])
    off += 4
    if len(raw) < off + hlen:
        raise TruncatedFileError(f"{path}: truncated header")
    header = json.loads(raw[off : off + hlen].decode())
    off += hlen

    n = header["n_trajectories"]
    rec = header["records_per_trajectory"]
    has_actions = header["has_actions"]
    cloud_n = header.get("cloud_points", POINT_CLOUD_SIZE)
    rec_floats = cloud_n * 3 + STATE_SIZE + PARAMS_SIZE + (ACTIONS_PER_RECORD if has_actions else 0)
    body_bytes = n * rec * rec_floats * 4
    crc_bytes = n * rec * 4
    if len(raw) != off + body_bytes + crc_bytes:
        raise TruncatedFileError(
            f"{path}: expected {off + body_bytes + crc_bytes} bytes from header, found {len(raw)}"
        )

    crcs = np.frombuffer(raw, dtype=np.uint32, count=n * rec, offset=off + body_bytes)
    rec_bytes = rec_floats * 4
    for t in range(n):
        for r in range(rec):
            start = off + (t * rec + r) * rec_bytes
            if zlib.crc32(raw[start : start + rec_bytes]) != crcs[t * rec + r]:
                raise ChecksumError(t, r)

    body = np.frombuffer(raw, dtype=np.float32, count=n * rec * rec_floats, offset=off)
    body = body.reshape(n, rec, rec_floats)
    c = cloud_n * 3
    clouds = body[:, :, :c].reshape(n, rec, cloud_n, 3).copy()
    states = body[:, :, c : c + STATE_SIZE].copy()
    params = body[:, :, c + STATE_SIZE : c + STATE_SIZE + PARAMS_SIZE].copy()
    actions = body[:, :, c + STATE_SIZE + PARAMS_SIZE :].copy() if has_actions else None
    return Dataset(header=header, clouds=clouds, states=states, params=params, actions=actions)


# --------------------------------------------------------------------------
# Collection


def episode_seed(root_seed: int, index: int) -> int:
    return (int(root_seed) * 1_000_003 + index) % (2**31)


def _run_collection_episode(task_name: str, seed: int, duration: float) -> Episode:
    from .tasks import ScriptedExpertPlanner, get_task

    task = get_task(task_name)
    model = QuadrupedModel.default()
    return run_episode(task, ScriptedExpertPlanner(task), task.make_controller(model), seed, duration=duration)


def _collect_worker(args: tuple[str, int, int, float]) -> tuple[int, bool, str | None, tuple]:
    task_name, index, seed, duration = args
    ep = _run_collection_episode(task_name, seed, duration)
    ok = ep.fault is None and bool(ep.success)
    payload = (
        ep.clouds,
        ep.planner_states,
        ep.planner_params,
        ep.actions.reshape(ep.actions.shape[0], -1),
    )
    return index, ok, ep.fault, payload


def collect(
    task_name: str,
    n_traj: int = 100,
    records_per_traj: int = 200,
    workers: int = 1,
    seed: int = 0,
    include_actions: bool = True,
) -> Dataset:
    """Collect successful expert trajectories into a dataset.

    Failed or faulted episodes are excluded and backfilled with fresh seeds in
    index order, so output bytes depend only on (task, seed), never on the
    worker count.  The header lists the seeds used and the exclusions.
    """
    from .tasks import get_task

    task = get_task(task_name)
    duration = records_per_traj * PLANNER_EVERY * CONTROL_DT
    model = QuadrupedModel.default()

    kept: list[tuple] = []
    kept_seeds: list[int] = []
    excluded: list[dict] = []
    next_index = 0
    max_attempts = 4 * n_traj + 50
    t0 = time.monotonic()

    def consume(results) -> None:
        for index, ok, fault, payload in results:
            if len(kept) >= n_traj:
                return
            if ok:
                kept.append(payload)
                kept_seeds.append(episode_seed(seed, index))
            else:
                excluded.append(
                    {"index": index, "seed": episode_seed(seed, index), "reason": fault or "failed"}
                )

    if n_traj > 0:
        if workers <= 1:
            while len(kept) < n_traj and next_index < max_attempts:
                args = (task_name, next_index, episode_seed(seed, next_index), duration)
                consume([_collect_worker(args)])
                next_index += 1
        else:
            ctx = get_context("fork")
            with ctx.Pool(processes=workers) as pool:
                while len(kept) < n_traj and next_index < max_attempts:
                    batch = max(workers, n_traj - len(kept))
                    args = [
                        (task_name, i, episode_seed(seed, i), duration)
                        for i in range(next_index, next_index + batch)
                    ]
                    next_index += batch
                    consume(pool.map(_collect_worker, args))
        if len(kept) < n_traj:
            raise RuntimeError(
                f"collected only {len(kept)}/{n_traj} successful trajectories after "
                f"{next_index} episodes; recent exclusions: {excluded[-5:]}"
            )

    wall = time.monotonic() - t0
    rec = records_per_traj
    if kept:
        clouds = np.stack([p[0] for p in kept])
        states = np.stack([p[1] for p in kept])
        params = np.stack([p[2] for p in kept])
        actions = np.stack([p[3] for p in kept]) if include_actions else None
    else:
        clouds = np.zeros((0, rec, POINT_CLOUD_SIZE, 3), dtype=np.float32)
        states = np.zeros((0, rec, STATE_SIZE), dtype=np.float32)
        params = np.zeros((0, rec, PARAMS_SIZE), dtype=np.float32)
        actions = np.zeros((0, rec, ACTIONS_PER_RECORD), dtype=np.float32) if include_actions else None

    header = {
        "task": task.name,
        "seed": int(seed),
        "planner_hz": 10,
        "control_hz": 50,
        "cloud_points": POINT_CLOUD_SIZE,
        "model_config": model.config_hash(),
        "reward_config": _reward_config_hash(RewardWeights()),
        "provenance": "scripted_expert",
        "episode_seeds": kept_seeds,
        "excluded": excluded,
        "wall_time_s": round(wall, 3),
        "layout": {
            "record": [
                ["cloud", [POINT_CLOUD_SIZE, 3], "f4"],
                ["state", [STATE_SIZE], "f4"],
                ["params", [PARAMS_SIZE], "f4"],
            ]
            + ([["actions", [ACTIONS_PER_RECORD], "f4"]] if include_actions else []),
            "state_slots": [[name, n] for name, n in STATE_LAYOUT],
            "params_slots": "flag, 7x3 control points row-major, 7 weights, "
            "start quaternion wxyz, end quaternion wxyz, duration, frame code "
            "(0 object, 1 world, 2 body)",
            "notes": {
                "gravity_scale": GRAVITY_SCALE,
                "orientation_tracking": "dot of unit toe-direction vectors",
                "occlusion": "no occlusion culling in synthetic clouds",
                "actions": "five 50 Hz filtered joint targets per planner tick",
            },
        },
    }
    return Dataset(header=header, clouds=clouds, states=states, params=params, actions=actions)


def export_text(dataset: Dataset, path: str | Path, max_records: int | None = None) -> None:
    """Columnar text dump of states and params for external tooling."""
    path = Path(path)
    with open(path, "w") as f:
        f.write("# traj record " + " ".join(f"s{i}" for i in range(STATE_SIZE)))
        f.write(" " + " ".join(f"p{i}" for i in range(PARAMS_SIZE)) + "\n")
        count = 0
        for t in range(dataset.n_trajectories):
            for r in range(dataset.records_per_trajectory):
                if max_records is not None and count >= max_records:
                    return
                row = np.concatenate([dataset.states[t, r], dataset.params[t, r]])
                f.write(f"{t} {r} " + " ".join(f"{v:.6g}" for v in row) + "\n")
                count += 1


# --------------------------------------------------------------------------
# Tracking reports


TIME_TO_MIN_BAND = 0.005  # m; "reached the minimum" means within this band


@dataclass
class RunSummary:
    seed: int
    peak_error: float
    time_to_min: float
    steady_state_mean: float
    ori_floor: float


@dataclass
class TrackingReport:
    """Per-tick error aggregate plus per-run summaries (plot-ready)."""

    time: np.ndarray
    pos_mean: np.ndarray
    pos_std: np.ndarray
    ori_mean: np.ndarray
    ori_std: np.ndarray
    runs: list[RunSummary]
    reference_ori_floor: float = 0.4

    def summary(self) -> dict:
        return {
            "runs": len(self.runs),
            "peak_error_mean": float(np.mean([r.peak_error for r in self.runs])),
            "time_to_min_mean": float(np.mean([r.time_to_min for r in self.runs])),
            "time_to_min_max": float(np.max([r.time_to_min for r in self.runs])),
            "within_3s_fraction": float(np.mean([r.time_to_min <= 3.0 for r in self.runs])),
            "steady_state_mean": float(np.mean([r.steady_state_mean for r in self.runs])),
            "ori_floor_mean": float(np.mean([r.ori_floor for r in self.runs])),
            "reference_ori_floor": self.reference_ori_floor,
        }

    def to_table(self) -> str:
        lines = ["# time pos_mean pos_std ori_mean ori_std"]
        for i in range(len(self.time)):
            lines.append(
                f"{self.time[i]:.2f} {self.pos_mean[i]:.6f} {self.pos_std[i]:.6f} "
                f"{self.ori_mean[i]:.6f} {self.ori_std[i]:.6f}"
            )
        return "\n".join(lines) + "\n"


def tracking_report(episodes: list[Episode]) -> TrackingReport:
    """Aggregate flagged-toe tracking errors across episodes.

    ``time_to_min`` is the first time the position error enters a 5 mm band
    above its episode minimum; the steady-state mean covers the final quarter
    of each episode.  The orientation floor is reported next to the 0.4 rad
    reference, without any pass/fail meaning.
    """
    if not episodes:
        raise ValueError("tracking report needs at least one episode")
    ticks = min(ep.ticks for ep in episodes)
    pos = np.stack([ep.pos_err[:ticks] for ep in episodes]).astype(float)
    ori = np.stack([ep.ori_err[:ticks] for ep in episodes]).astype(float)
    runs = []
    for ep in episodes:
        e = ep.pos_err.astype(float)
        t_min = float(np.argmax(e <= e.min() + TIME_TO_MIN_BAND) * ep.dt)
        tail = e[int(0.75 * len(e)) :]
        runs.append(
            RunSummary(
                seed=ep.seed,
                peak_error=float(e.max()),
                time_to_min=t_min,
                steady_state_mean=float(tail.mean()),
                ori_floor=float(ep.ori_err.min()),
            )
        )
    dt = episodes[0].dt
    return TrackingReport(
        time=np.arange(ticks) * dt,
        pos_mean=pos.mean(axis=0),
        pos_std=pos.std(axis=0),
        ori_mean=ori.mean(axis=0),
        ori_std=ori.std(axis=0),
        runs=runs,
    )
