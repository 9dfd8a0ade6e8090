"""Operator entry points.

Subcommands: ``eval-curve`` (tabulate a parameter file's curve and
orientations), ``collect`` (parallel expert demonstration datasets),
``eval-tracking`` (tracking-error report over fresh episodes), and ``serve``
(teleoperation bridge).

Configuration precedence for the shared numeric knobs is CLI ``--set`` over
environment variables (prefix ``PEDI_``) over ``--config`` file over
defaults.  Every subcommand takes ``--seed`` and is reproducible under it.
Exit codes: 0 success, 2 usage error, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import dataclasses
import difflib
import json
import os
import signal
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .control import ControllerConfig, RewardWeights
from .curves import OrientationTrack, PhaseClock, RationalBezier
from .geometry import Quat
from .quadruped import QuadrupedModel, read_kv_config
from .trajectory import FRAME_BODY, FRAMES, TrajectoryParams

ENV_PREFIX = "PEDI_"

_CONTROLLER_KEYS = {f"controller.{f.name}" for f in dataclasses.fields(ControllerConfig)}
_REWARD_KEYS = {f"reward.{f.name}" for f in dataclasses.fields(RewardWeights)}
KNOWN_KEYS = sorted(_CONTROLLER_KEYS | _REWARD_KEYS)


class UsageError(Exception):
    pass


def _suggest(key: str) -> str:
    close = difflib.get_close_matches(key, KNOWN_KEYS, n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return f"unknown config key {key!r}{hint}"


def resolve_overrides(config_path: str | None, set_args: list[str]) -> dict[str, float]:
    """Merge config file, environment, and --set overrides (in that order)."""
    merged: dict[str, float] = {}
    if config_path:
        for key, value in read_kv_config(config_path).items():
            if key not in KNOWN_KEYS:
                raise UsageError(_suggest(key))
            merged[key] = value
    for key in KNOWN_KEYS:
        env_name = ENV_PREFIX + key.replace(".", "_").upper()
        if env_name in os.environ:
            try:
                merged[key] = float(os.environ[env_name])
            except ValueError as exc:
                raise UsageError(f"{env_name} is not numeric: {os.environ[env_name]!r}") from exc
    for item in set_args or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise UsageError(_suggest(key))
        try:
            merged[key] = float(value)
        except ValueError as exc:
            raise UsageError(f"--set {key}: non-numeric value {value!r}") from exc
    return merged


def controller_config_from(overrides: dict[str, float]) -> ControllerConfig:
    kwargs = {k.split(".", 1)[1]: v for k, v in overrides.items() if k.startswith("controller.")}
    if "max_iters" in kwargs:
        kwargs["max_iters"] = int(kwargs["max_iters"])
    return dataclasses.replace(ControllerConfig(), **kwargs)


def _load_params_file(path: str) -> TrajectoryParams:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read params file: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    for field_name in ("points", "weights"):
        if field_name not in doc:
            raise UsageError(f"{path}: missing field {field_name!r}")
    try:
        return TrajectoryParams(
            flag=int(doc.get("flag", 0)),
            curve=RationalBezier(np.asarray(doc["points"], dtype=float), np.asarray(doc["weights"], dtype=float)),
            orientation=OrientationTrack(
                Quat.from_array(doc.get("q_start", [1, 0, 0, 0])),
                Quat.from_array(doc.get("q_end", [1, 0, 0, 0])),
            ),
            duration=float(doc.get("duration", 4.0)),
            frame=doc.get("frame", FRAME_BODY),
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _parse_t_list(spec: str) -> list[float]:
    if not spec.strip():
        return []
    try:
        values = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"--t expects comma-separated phases, got {spec!r}") from exc
    for t in values:
        if not 0.0 <= t <= 1.0:
            raise UsageError(f"phase {t} outside [0, 1]")
    return values


def _task_or_usage(name: str):
    from .tasks import TASK_NAMES, get_task

    try:
        return get_task(name)
    except KeyError:
        raise UsageError(f"unknown task {name!r}; valid tasks: {', '.join(TASK_NAMES)}") from None


def cmd_eval_curve(args) -> int:
    params = _load_params_file(args.params)
    ts = _parse_t_list(args.t)
    rows = []
    for t in ts:
        p = params.curve.point(t)
        q = params.orientation.orientation(t)
        row = {"t": t, "point": [float(v) for v in p], "orientation": [q.w, q.x, q.y, q.z]}
        if args.oracle:
            row["oracle_point"] = [float(v) for v in params.curve.point_casteljau(t)]
        rows.append(row)
    if args.json:
        print(json.dumps({"flag": params.flag, "frame": params.frame, "rows": rows}, indent=2))
        return 0
    header = "t x y z qw qx qy qz" + (" ox oy oz" if args.oracle else "")
    print(header)
    for row in rows:
        cells = [f"{row['t']:.4f}"]
        cells += [f"{v:.6f}" for v in row["point"]]
        cells += [f"{v:.6f}" for v in row["orientation"]]
        if args.oracle:
            cells += [f"{v:.6f}" for v in row["oracle_point"]]
        print(" ".join(cells))
    return 0


def cmd_collect(args) -> int:
    from .dataset import collect, save

    task = _task_or_usage(args.task)
    t0 = time.monotonic()
    ds = collect(
        task.name,
        n_traj=args.n,
        records_per_traj=args.records,
        workers=args.workers,
        seed=args.seed,
        include_actions=not args.no_actions,
    )
    wall = time.monotonic() - t0
    out = Path(args.out)
    save(ds, out)
    print(f"task: {ds.header['task']}")
    print(f"trajectories: {ds.n_trajectories} x {ds.records_per_trajectory} records")
    print(f"successes: {ds.n_trajectories}, excluded: {len(ds.header['excluded'])}")
    for row in ds.header["excluded"]:
        print(f"  excluded seed {row['seed']}: {row['reason']}")
    print(f"wall time: {wall:.1f} s")
    print(f"body sha256: {ds.body_digest()}")
    print(f"wrote {out} ({out.stat().st_size} bytes)")
    return 0


def cmd_eval_tracking(args) -> int:
    from .dataset import tracking_report
    from .tasks import ScriptedExpertPlanner
    from .world import run_episode

    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    task = _task_or_usage(args.task)
    overrides = resolve_overrides(args.config, args.set)
    cfg = task.controller_config(controller_config_from(overrides))
    model = QuadrupedModel.default()
    episodes = []
    for i in range(args.runs):
        from .control import TrackingController

        controller = TrackingController(model, cfg)
        episodes.append(run_episode(task, ScriptedExpertPlanner(task), controller, seed=args.seed + i))
    report = tracking_report(episodes)
    s = report.summary()
    print(f"task: {task.name}  runs: {s['runs']}")
    print(f"peak error mean: {s['peak_error_mean']:.4f} m")
    print(f"time to minimum: mean {s['time_to_min_mean']:.2f} s, max {s['time_to_min_max']:.2f} s, "
          f"within 3 s: {100 * s['within_3s_fraction']:.0f}%")
    print(f"steady-state mean position error: {s['steady_state_mean']:.4f} m")
    print(f"orientation error floor: {s['ori_floor_mean']:.3f} rad "
          f"(reference: {s['reference_ori_floor']} rad)")
    if args.out:
        Path(args.out).write_text(report.to_table())
        print(f"wrote {args.out}")
    else:
        print(report.to_table(), end="")
    return 0


def cmd_serve(args) -> int:
    from .bridge import BridgeConfig, TeleopServer

    task = _task_or_usage(args.task)
    cfg = BridgeConfig(host=args.host, port=args.port, seed=args.seed, realtime=True,
                       record_dir=args.record_dir)
    server = TeleopServer(task, cfg)
    try:
        server.start()
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 3
    host, port = server.address
    print(f"teleop bridge for {task.name!r} on {host}:{port} (session {server.session.session_id})")
    stop = {"flag": False}

    def handle(_sig, _frame):
        stop["flag"] = True

    signal.signal(signal.SIGINT, handle)
    signal.signal(signal.SIGTERM, handle)
    try:
        while not stop["flag"]:
            time.sleep(0.2)
    finally:
        server.stop()
        print("stopped")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pedi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pedi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-curve", help="tabulate a trajectory parameter file")
    p.add_argument("--params", required=True, help="JSON parameter file")
    p.add_argument("--t", default="", help="comma-separated phases in [0, 1]")
    p.add_argument("--oracle", action="store_true", help="add de Casteljau oracle columns")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval_curve)

    p = sub.add_parser("collect", help="collect expert demonstration trajectories")
    p.add_argument("--task", required=True)
    p.add_argument("--n", type=int, default=100, help="trajectories to keep")
    p.add_argument("--records", type=int, default=200, help="records per trajectory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="dataset.bin")
    p.add_argument("--no-actions", action="store_true", help="omit the action channel")
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("eval-tracking", help="tracking-error report over fresh episodes")
    p.add_argument("--task", required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the plot table here instead of stdout")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(fn=cmd_eval_tracking)

    p = sub.add_parser("serve", help="run the teleoperation bridge")
    p.add_argument("--task", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7777)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-dir", default=".")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 3
    except Exception as exc:  # noqa: BLE001 - runtime faults exit 3 by contract
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
