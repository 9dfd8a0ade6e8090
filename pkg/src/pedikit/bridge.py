"""Live teleoperation service over a persistent socket.

Wire protocol: length-prefixed UTF-8 text frames on a plain TCP connection.
Each frame is a 4-byte big-endian payload length followed by one JSON
object.  Every server frame carries the session id and the tick it
describes.  Message kinds:

* ``hello``   server -> client on connect: task, model config hash, rates,
              and the accepted parameter bounds.
* ``state``   server -> client at 10 Hz: tick, base pose, joints, toe poses,
              desired point/orientation, tracking errors, reward terms, the
              active parameter record, object poses, recording flag.
* ``set_params`` client -> server: partial parameter update (control point,
              weight, flag, orientations, duration, restart).  Values are
              validated server-side against the randomization table bounds;
              a violation names the bound and nothing reaches the simulator.
* ``record``  client -> server: start or stop writing a demonstration
              trajectory file.
* ``ack`` / ``error`` server -> client replies carrying the client's ``id``.

Mutations are funneled through a queue and applied between control ticks, so
simulator state is never observed mid-tick.  An update acknowledged at tick
``k`` is visible in the next streamed state frame.
"""

from __future__ import annotations

import json
import math
import socket
import struct
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curves import CURVE_POINTS, OrientationTrack, RationalBezier
from .geometry import Quat
from .quadruped import QuadrupedModel, leg_state, toe_orientation
from .trajectory import FRAME_WORLD, RandomizationRanges, TrajectoryParams
from .world import CONTROL_DT, PLANNER_EVERY, EpisodeEngine, World

STREAM_EVERY = PLANNER_EVERY  # state frames at the 10 Hz planner cadence
SESSION_SEGMENT_S = 60.0  # engine log horizon; sessions roll over seamlessly

_LEN = struct.Struct(">I")


def send_frame(sock: socket.socket, payload: dict) -> None:
    body = json.dumps(payload, separators=(",", ":")).encode()
    sock.sendall(_LEN.pack(len(body)) + body)


def recv_frame(sock: socket.socket) -> dict | None:
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    if length > 16 * 1024 * 1024:
        raise ValueError(f"frame length {length} exceeds limit")
    body = _recv_exact(sock, length)
    if body is None:
        return None
    return json.loads(body.decode())


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def validate_set_params(msg: dict, ranges: RandomizationRanges = RandomizationRanges()) -> str | None:
    """Check a set_params message against the randomization-table bounds.

    Returns an error string naming the violated bound, or None when valid.
    """
    point = msg.get("point")
    if point is not None:
        idx = point.get("index")
        if not isinstance(idx, int) or not 0 <= idx < CURVE_POINTS:
            return f"control point index must be in [0, {CURVE_POINTS - 1}]"
        value = point.get("value")
        if not isinstance(value, list) or len(value) != 3:
            return "control point value must be [x, y, z]"
        x, y, z = (float(v) for v in value)
        lo, hi = ranges.p_xy
        if not (lo <= x <= hi and lo <= y <= hi):
            return f"p_xy {x:.3g},{y:.3g} outside [{lo}, {hi}]"
        lo, hi = ranges.p_z
        if not lo <= z <= hi:
            return f"p_z {z:.3g} outside [{lo}, {hi}]"
    weight = msg.get("weight")
    if weight is not None:
        idx = weight.get("index")
        if not isinstance(idx, int) or not 0 <= idx < CURVE_POINTS:
            return f"weight index must be in [0, {CURVE_POINTS - 1}]"
        lo, hi = ranges.w
        w = float(weight.get("value"))
        if not lo <= w <= hi:
            return f"w {w:.3g} outside [{lo}, {hi}]"
    if "flag" in msg and msg["flag"] is not None:
        if msg["flag"] not in (0, 1):
            return "flag must be 0 (front-left) or 1 (front-right)"
    for key in ("q_start", "q_end"):
        if msg.get(key) is not None:
            q = msg[key]
            if not isinstance(q, list) or len(q) != 4:
                return f"{key} must be a wxyz quaternion"
            if math.sqrt(sum(float(v) ** 2 for v in q)) < 1e-6:
                return f"{key} must be a nonzero quaternion"
    if msg.get("duration") is not None:
        d = float(msg["duration"])
        if not 0.1 <= d <= 120.0:
            return "duration outside [0.1, 120.0] s"
    return None


def _hold_params(world: World, flag: int = 0, duration: float = 20.0) -> TrajectoryParams:
    ls = leg_state(world.model, world.q[3 * flag : 3 * flag + 3], flag)
    toe_w = world.base.transform_point(ls.toe)
    ori_w = world.base.orientation * toe_orientation(ls.direction)
    return TrajectoryParams(
        flag=flag,
        curve=RationalBezier(np.tile(toe_w, (CURVE_POINTS, 1)), np.ones(CURVE_POINTS)),
        orientation=OrientationTrack(ori_w, ori_w),
        duration=duration,
        frame=FRAME_WORLD,
    )


@dataclass
class BridgeConfig:
    host: str = "127.0.0.1"
    port: int = 0  # 0 picks an ephemeral port
    seed: int = 0
    realtime: bool = True
    record_dir: str | Path = "."


class TeleopSession:
    """Session logic without networking: one world, client-editable params.

    All mutation goes through :meth:`apply`, which the server calls between
    ticks only.
    """

    def __init__(self, task, cfg: BridgeConfig):
        self.task = task
        self.cfg = cfg
        self.session_id = uuid.uuid4().hex[:12]
        self.model = QuadrupedModel.default()
        self.world: World = task.instantiate(cfg.seed, model=self.model)
        self.controller = task.make_controller(self.model)
        self._segment_ticks = int(round(SESSION_SEGMENT_S / CONTROL_DT))
        self.engine = EpisodeEngine(task.name, self.world, self.controller, cfg.seed, SESSION_SEGMENT_S)
        self.engine.set_active_params(_hold_params(self.world))
        self.global_tick = 0
        self.recording = False
        self._rec_segments: list[tuple] = []
        self._rec_start_plan: int | None = None
        self.ranges = RandomizationRanges()

    # -- parameter editing --------------------------------------------------

    def apply(self, msg: dict) -> dict:
        """Apply one client message; returns the ack or error reply."""
        kind = msg.get("kind")
        mid = msg.get("id")
        if kind == "set_params":
            problem = validate_set_params(msg, self.ranges)
            if problem is not None:
                return self._error(mid, problem)
            self._apply_set_params(msg)
            return {"kind": "ack", "session": self.session_id, "tick": self.global_tick,
                    "id": mid, "applied_tick": self.global_tick}
        if kind == "record":
            action = msg.get("action")
            if action == "start":
                if self.recording:
                    return self._error(mid, "recording already started")
                self._start_recording()
                return {"kind": "ack", "session": self.session_id, "tick": self.global_tick, "id": mid}
            if action == "stop":
                if not self.recording:
                    return self._error(mid, "record stop without start")
                path, n = self._stop_recording()
                return {"kind": "ack", "session": self.session_id, "tick": self.global_tick,
                        "id": mid, "path": str(path), "records": n}
            return self._error(mid, f"unknown record action {action!r}")
        return self._error(mid, f"unknown message kind {kind!r}")

    def _error(self, mid, message: str) -> dict:
        return {"kind": "error", "session": self.session_id, "tick": self.global_tick,
                "id": mid, "message": message}

    def _apply_set_params(self, msg: dict) -> None:
        p = self.engine.active
        pts = p.curve.control_points.copy()
        w = p.curve.weights.copy()
        flag, duration = p.flag, p.duration
        q_start, q_end = p.orientation.q_start, p.orientation.q_end
        if msg.get("point") is not None:
            pts[msg["point"]["index"]] = [float(v) for v in msg["point"]["value"]]
        if msg.get("weight") is not None:
            w[msg["weight"]["index"]] = float(msg["weight"]["value"])
        if msg.get("flag") is not None:
            flag = int(msg["flag"])
        if msg.get("q_start") is not None:
            q_start = Quat.from_array([float(v) for v in msg["q_start"]])
        if msg.get("q_end") is not None:
            q_end = Quat.from_array([float(v) for v in msg["q_end"]])
        if msg.get("duration") is not None:
            duration = float(msg["duration"])
        restart = bool(msg.get("restart", False))
        if restart:
            # The trajectory restarts from wherever the toe is right now.
            ls = leg_state(self.model, self.world.q[3 * flag : 3 * flag + 3], flag)
            pts[0] = self.world.base.transform_point(ls.toe)
        params = TrajectoryParams(
            flag=flag,
            curve=RationalBezier(pts, w),
            orientation=OrientationTrack(q_start, q_end),
            duration=duration,
            frame=FRAME_WORLD,
        )
        self.engine.set_active_params(params, restart_clock=restart)

    # -- stepping and streaming ----------------------------------------------

    def tick(self) -> bool:
        """Advance one control tick; True when a state frame is due."""
        if self.engine.done:
            self._roll_segment()
        self.engine.tick(planner=None)
        self.global_tick += 1
        return self.global_tick % STREAM_EVERY == 0

    def _roll_segment(self) -> None:
        if self.recording:
            self._rec_segments.append(self._slice_recording())
            self._rec_start_plan = 0
        params, clock = self.engine.active, self.engine.clock
        offset = self.engine.episode.ticks * CONTROL_DT
        self.engine = EpisodeEngine(self.task.name, self.world, self.controller,
                                    self.cfg.seed + self.global_tick, SESSION_SEGMENT_S)
        self.engine.set_active_params(params)
        # Preserve phase continuity across the segment boundary.
        self.engine.clock = clock.__class__(clock.t_start - offset, clock.duration)

    def state_frame(self) -> dict:
        ep = self.engine.episode
        row = self.engine.tick_index - 1
        phase = self.engine.clock.phase(row * CONTROL_DT)
        # Desired pose in the world frame, straight from the active
        # parameters, so clients can check their own curve math against it.
        desired_w = self.engine.active.curve.point(phase)
        desired_q = self.engine.active.orientation.orientation(phase)
        reward = ep.reward_terms[row]
        objects = [
            {
                "id": oid,
                "pose": [round(float(v), 6) for v in ep.obj_log[row, j, :7]],
                "value": float(ep.obj_log[row, j, 7]),
                "contact": bool(ep.obj_log[row, j, 8] > 0.5),
            }
            for j, oid in enumerate(ep.object_ids)
        ]
        return {
            "kind": "state",
            "session": self.session_id,
            "tick": self.global_tick,
            "t": round(self.global_tick * CONTROL_DT, 4),
            "phase": phase,
            "base_pose": [float(v) for v in ep.state_vecs[row, 0:7]],
            "q": [float(v) for v in ep.state_vecs[row, 13:25]],
            "toe_poses": [[float(v) for v in ep.toe_poses[row, i]] for i in range(4)],
            "desired_point": [float(v) for v in desired_w],
            "desired_orientation": [float(v) for v in desired_q.as_array()],
            "pos_error": float(ep.pos_err[row]),
            "ori_error": float(ep.ori_err[row]),
            "reward_terms": {
                "total": float(reward[0]),
                "pos_xy": float(reward[1]),
                "pos_z": float(reward[2]),
                "ori": float(reward[3]),
                "ee_accel": float(reward[4]),
                "base_accel": float(reward[5]),
            },
            "params": [float(v) for v in self.engine.active_flat],
            "objects": objects,
            "recording": self.recording,
        }

    def hello_frame(self) -> dict:
        return {
            "kind": "hello",
            "session": self.session_id,
            "tick": self.global_tick,
            "task": self.task.name,
            "model_config_hash": self.model.config_hash(),
            "control_hz": 50,
            "stream_hz": 10,
            "protocol": 1,
            "bounds": {
                "p_xy": list(self.ranges.p_xy),
                "p_z": list(self.ranges.p_z),
                "w": list(self.ranges.w),
            },
        }

    # -- recording ------------------------------------------------------------

    def _start_recording(self) -> None:
        self.recording = True
        self._rec_segments = []
        # Records begin at the next planner boundary.
        self._rec_start_plan = self.engine.plan_index + 1

    def _completed_plans(self) -> int:
        return self.engine.tick_index // PLANNER_EVERY

    def _slice_recording(self) -> tuple:
        ep = self.engine.episode
        a, b = self._rec_start_plan, self._completed_plans()
        return (
            ep.clouds[a:b].copy(),
            ep.planner_states[a:b].copy(),
            ep.planner_params[a:b].copy(),
            ep.actions[a:b].reshape(max(0, b - a), -1).copy(),
        )

    def _stop_recording(self) -> tuple[Path, int]:
        from .dataset import Dataset, save

        self._rec_segments.append(self._slice_recording())
        self.recording = False
        clouds = np.concatenate([s[0] for s in self._rec_segments])
        states = np.concatenate([s[1] for s in self._rec_segments])
        params = np.concatenate([s[2] for s in self._rec_segments])
        actions = np.concatenate([s[3] for s in self._rec_segments])
        n = clouds.shape[0]
        from .control import RewardWeights

        header = {
            "task": self.task.name,
            "seed": int(self.cfg.seed),
            "planner_hz": 10,
            "control_hz": 50,
            "cloud_points": clouds.shape[1] if n else 768,
            "model_config": self.model.config_hash(),
            "provenance": "teleop",
            "session": self.session_id,
            "episode_seeds": [int(self.cfg.seed)],
            "excluded": [],
        }
        ds = Dataset(
            header=header,
            clouds=clouds[None] if n else np.zeros((0, 0, 768, 3), np.float32),
            states=states[None],
            params=params[None],
            actions=actions[None],
        )
        path = Path(self.cfg.record_dir) / f"teleop_{self.session_id}_{self.global_tick}.bin"
        save(ds, path)
        return path, n

    def run_scripted(self, transcript: dict[int, list[dict]], ticks: int) -> tuple:
        """Headless run: apply transcript messages at their ticks.

        Returns (episode-so-far, replies).  With an empty transcript this is
        tick-for-tick identical to ``run_episode`` with a hold planner.
        """
        replies = []
        for _ in range(ticks):
            for msg in transcript.get(self.global_tick, ()):
                replies.append(self.apply(msg))
            self.tick()
        return self.engine.episode, replies


class TeleopServer:
    """TCP server wrapping one TeleopSession.

    One simulation loop on its own thread; client reader threads enqueue
    messages that are applied between ticks; state frames broadcast at
    10 Hz.  A protocol error on one client disconnects that client only.
    """

    def __init__(self, task, cfg: BridgeConfig | None = None):
        self.cfg = cfg or BridgeConfig()
        self.session = TeleopSession(task, self.cfg)
        self._listener: socket.socket | None = None
        self._clients: dict[socket.socket, threading.Lock] = {}
        self._clients_lock = threading.Lock()
        self._inbox: list[tuple[socket.socket, dict]] = []
        self._inbox_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.address: tuple[str, int] | None = None

    def start(self) -> None:
        self._listener = socket.create_server((self.cfg.host, self.cfg.port))
        self._listener.settimeout(0.2)
        self.address = self._listener.getsockname()
        for fn in (self._accept_loop, self._sim_loop):
            t = threading.Thread(target=fn, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=5.0)
        with self._clients_lock:
            for sock in list(self._clients):
                sock.close()
            self._clients.clear()
        if self._listener is not None:
            self._listener.close()

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        finally:
            self.stop()

    # -- internals -----------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            lock = threading.Lock()
            with self._clients_lock:
                self._clients[sock] = lock
            try:
                with lock:
                    send_frame(sock, self.session.hello_frame())
            except OSError:
                self._drop(sock)
                continue
            t = threading.Thread(target=self._reader_loop, args=(sock,), daemon=True)
            t.start()
            self._threads.append(t)

    def _reader_loop(self, sock: socket.socket) -> None:
        try:
            while not self._stop.is_set():
                msg = recv_frame(sock)
                if msg is None:
                    break
                with self._inbox_lock:
                    self._inbox.append((sock, msg))
        except (OSError, ValueError, json.JSONDecodeError):
            pass
        self._drop(sock)

    def _drop(self, sock: socket.socket) -> None:
        with self._clients_lock:
            self._clients.pop(sock, None)
        try:
            sock.close()
        except OSError:
            pass

    def _send(self, sock: socket.socket, payload: dict) -> None:
        lock = self._clients.get(sock)
        if lock is None:
            return
        try:
            with lock:
                send_frame(sock, payload)
        except OSError:
            self._drop(sock)

    def _sim_loop(self) -> None:
        period = CONTROL_DT
        next_deadline = time.monotonic()
        while not self._stop.is_set():
            with self._inbox_lock:
                pending, self._inbox = self._inbox, []
            for sock, msg in pending:
                reply = self.session.apply(msg)
                self._send(sock, reply)
            stream_due = self.session.tick()
            if stream_due:
                frame = self.session.state_frame()
                with self._clients_lock:
                    targets = list(self._clients)
                for sock in targets:
                    self._send(sock, frame)
            if self.cfg.realtime:
                next_deadline += period
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_deadline = time.monotonic()
