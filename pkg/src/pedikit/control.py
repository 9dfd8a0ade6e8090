"""The 50 Hz low-level layer: a damped-least-squares IK controller that
tracks manipulation commands with the flagged forelimb, a proportional base
pursuit that keeps the target inside that leg's comfortable workspace, the
action low-pass filter and joint PD law, and the tracking reward.

Position and orientation tracking are stacked into one weighted least-squares
problem with the orientation weight an order of magnitude below position:
a 3-DoF leg cannot do both, so position dominates and orientation is only
nudged.  Targets outside the reachable shell are projected onto its boundary
and flagged, never raised as errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, Quat
from .quadruped import (
    NUM_JOINTS,
    QuadrupedModel,
    RobotState,
    analytic_leg_ik,
    clamp_limits,
    leg_state,
)
from .trajectory import ManipulationCommand

_EYE3 = np.eye(3)


@dataclass(frozen=True)
class ControllerConfig:
    damping: float = 1e-3  # rad^2, DLS regularizer
    max_iters: int = 8  # IK iterations per control tick
    kp: float = 60.0
    kd: float = 2.0
    lowpass_alpha: float = 0.3
    pos_weight: float = 1.0
    ori_weight: float = 0.03
    control_period: float = 0.02  # the policy rate is fixed at 50 Hz
    step_limit: float = 0.35  # rad per IK iteration
    pos_tol: float = 1e-5  # early-exit position residual, m
    max_lin_vel: float = 0.6  # m/s base pursuit saturation
    max_yaw_rate: float = 1.0  # rad/s
    standoff_fraction: float = 0.7  # comfortable hip-to-target distance, x reach

    def __post_init__(self):
        if not 0.0 < self.lowpass_alpha <= 1.0:
            raise ValueError("lowpass_alpha must be in (0, 1]")
        if self.damping <= 0.0:
            raise ValueError("damping must be positive")
        if abs(self.control_period - 0.02) > 1e-12:
            raise ValueError("the control loop runs at 50 Hz; control_period is fixed at 0.02 s")


@dataclass(frozen=True)
class RewardWeights:
    """Tracking reward weights and scales.

    The z tracking scale is one fifth of the xy scale, which makes the reward
    five times more sensitive to vertical error and rewards lifting the leg.
    """

    pos_xy: float = 0.8
    pos_z: float = 0.8
    ori: float = 0.3
    ee_accel: float = -5.0
    base_accel: float = -5.0
    sigma_xy: float = 0.25
    sigma_z: float = 0.05
    sigma_theta: float = 0.25


@dataclass(frozen=True)
class IkResult:
    q: np.ndarray  # (12,) desired joint positions
    out_of_reach: bool
    pos_error: float  # residual to the (possibly projected) target, m
    target: np.ndarray  # body-frame point actually solved for


def project_to_workspace(model: QuadrupedModel, leg: int, point_body) -> tuple[np.ndarray, bool]:
    """Clamp a body-frame target into the leg's reachable shell.

    Returns the (possibly unchanged) target and whether clamping happened.
    """
    anchor = model.hip_anchor(leg)
    delta = np.asarray(point_body, dtype=float) - anchor
    dist = float(np.linalg.norm(delta))
    outer = 0.98 * model.reach
    inner = 0.05 * model.reach
    if dist > outer:
        return anchor + delta * (outer / dist), True
    if dist < inner:
        if dist < 1e-12:
            # Target at the anchor: push straight down to the inner shell.
            return anchor + np.array([0.0, 0.0, -inner]), True
        return anchor + delta * (inner / dist), True
    return np.asarray(point_body, dtype=float), False


def _dls_refine(
    model: QuadrupedModel,
    q_leg: np.ndarray,
    leg: int,
    target: np.ndarray,
    cfg: ControllerConfig,
    iters: int,
) -> tuple[np.ndarray, float]:
    """Position-only damped-least-squares iterations on one leg.

    Orientation is deliberately absent here: a 3-DoF leg cannot serve both,
    and any orientation term in the descent leaves a standing position
    residual that destabilizes branch selection.  Orientation preference is
    applied when choosing among position-equivalent solutions instead.
    """
    lo = model.joint_lower[3 * leg : 3 * leg + 3]
    hi = model.joint_upper[3 * leg : 3 * leg + 3]
    err = math.inf
    for _ in range(iters):
        ls = leg_state(model, q_leg, leg)
        e_pos = target - ls.toe
        err = float(np.linalg.norm(e_pos))
        if err < cfg.pos_tol:
            return q_leg, err
        j = ls.jac_pos
        lam = cfg.damping
        if abs(np.linalg.det(j)) < 1e-6:
            lam *= 10.0  # soften steps near kinematic singularities
        dq = j.T @ np.linalg.solve(j @ j.T + lam * _EYE3, e_pos)
        step = float(np.max(np.abs(dq)))
        if step > cfg.step_limit:
            dq *= cfg.step_limit / step
        q_leg = np.clip(q_leg + dq, lo, hi)
    return q_leg, float(np.linalg.norm(target - leg_state(model, q_leg, leg).toe))


def ik_tick(
    model: QuadrupedModel,
    state: RobotState,
    cmd: ManipulationCommand,
    cfg: ControllerConfig,
    q_init=None,
) -> IkResult:
    """One control tick of the IK oracle: desired joint positions for all legs.

    The flagged leg runs damped-least-squares iterations toward the commanded
    body-frame point with a weak orientation objective stacked on; when the
    warm start stalls far from the target, closed-form candidates reseed the
    refinement.  The other legs are commanded toward their stance posture,
    and the output always respects joint limits.

    ``q_init`` warm-starts the solve; pass the previous tick's commanded
    joints (as ``TrackingController`` does) so successive solutions stay on
    one elbow branch instead of flip-flopping through the straight-knee
    singularity.
    """
    leg = int(cmd.flag)
    target, clamped = project_to_workspace(model, leg, cmd.desired_point)
    dir_des = cmd.desired_orientation.rotate(np.array([0.0, 0.0, 1.0]))

    start = np.asarray(q_init if q_init is not None else state.q, dtype=float)
    lo = model.joint_lower[3 * leg : 3 * leg + 3]
    hi = model.joint_upper[3 * leg : 3 * leg + 3]

    def limit_margin(q):
        return float(np.min(np.minimum(q - lo, hi - q)))

    q_leg, err = _dls_refine(model, start[3 * leg : 3 * leg + 3].copy(), leg, target, cfg, cfg.max_iters)
    if err > 1e-4:
        # Warm start stalled (limits, singularity, or a far jump): reseed
        # from closed-form candidates.  Position decides; among
        # position-equivalent branches prefer orientation alignment plus
        # distance from the joint limits, which keeps the tracker off the
        # flexion wrap-around.
        def preference(q):
            ori = float(leg_state(model, q, leg).direction @ dir_des) * cfg.ori_weight
            return ori + min(0.3, limit_margin(q))

        best_pref = preference(q_leg)
        for seed in analytic_leg_ik(model, target, leg):
            q_alt, err_alt = _dls_refine(model, seed, leg, target, cfg, 4)
            pref_alt = preference(q_alt)
            if err_alt < err - 1e-6 or (err_alt < err + 1e-6 and pref_alt > best_pref):
                q_leg, err, best_pref = q_alt, err_alt, pref_alt

    q_out = model.q_stance.copy()
    q_out[3 * leg : 3 * leg + 3] = q_leg
    return IkResult(q=clamp_limits(model, q_out), out_of_reach=clamped, pos_error=err, target=target)


def gait_base_update(
    model: QuadrupedModel,
    state: RobotState,
    cmd: ManipulationCommand,
    max_lin: float = 0.6,
    max_yaw: float = 1.0,
    standoff_fraction: float = 0.7,
) -> np.ndarray:
    """Proportional base pursuit: ``[vx, vy, yaw_rate]`` in the body frame.

    Drives the base so the commanded point sits at a comfortable distance
    from the flagged hip and at that hip's bearing; saturates at the given
    limits and goes quiet once both are satisfied.
    """
    leg = int(cmd.flag)
    hip = model.hip_anchor(leg)
    delta = cmd.desired_point - hip
    dist = float(np.linalg.norm(delta))
    range_err = dist - standoff_fraction * model.reach

    v = np.zeros(2)
    yaw_rate = 0.0
    horiz = delta[:2]
    horiz_dist = float(np.linalg.norm(horiz))
    # Targets under the hip need no base motion; the leg handles them alone.
    if horiz_dist > 0.1:
        v = 2.0 * range_err * horiz / horiz_dist
        speed = float(np.linalg.norm(v))
        if speed > max_lin:
            v *= max_lin / speed
        # Yaw the hip's forward axis onto the target so the working leg
        # stays near its sagittal plane (small abduction).
        bearing = math.atan2(delta[1], delta[0])
        yaw_rate = max(-max_yaw, min(max_yaw, 1.5 * bearing))

    return np.array([v[0], v[1], yaw_rate])


def lowpass(prev, raw, alpha: float) -> np.ndarray:
    """First-order low-pass: convex blend of the previous output and raw input."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    return alpha * np.asarray(raw, dtype=float) + (1.0 - alpha) * np.asarray(prev, dtype=float)


def pd_torque(q_d, q, qd, kp: float, kd: float, limit: float = 40.0) -> np.ndarray:
    """Joint-level PD law with symmetric torque clamping."""
    tau = kp * (np.asarray(q_d, dtype=float) - np.asarray(q, dtype=float)) - kd * np.asarray(qd, dtype=float)
    return np.clip(tau, -limit, limit)


def _toe_and_direction(model: QuadrupedModel, state: RobotState, leg: int) -> tuple[np.ndarray, np.ndarray]:
    ls = leg_state(model, state.q[3 * leg : 3 * leg + 3], leg)
    return ls.toe, ls.direction


def compute_reward(
    model: QuadrupedModel,
    window: list[RobotState] | tuple[RobotState, ...],
    cmd: ManipulationCommand,
    weights: RewardWeights = RewardWeights(),
    dt: float = 0.02,
) -> tuple[float, dict[str, float]]:
    """Tracking reward over the last three states of a 50 Hz window.

    Terms: xy and z position tracking through exponentials of squared error,
    orientation tracking through the dot of the unit toe directions, and
    squared end-effector / base acceleration penalties from central second
    differences.  Perfect stationary tracking scores 0.8 + 0.8 + 0.3 = 1.9.
    """
    if len(window) < 3:
        raise ValueError("reward needs at least 3 consecutive states for accelerations")
    prev2, prev1, cur = window[-3], window[-2], window[-1]
    leg = int(cmd.flag)

    toe_body, direction = _toe_and_direction(model, cur, leg)
    e = toe_body - cmd.desired_point
    e_xy2 = float(e[0] * e[0] + e[1] * e[1])
    e_z2 = float(e[2] * e[2])
    dir_des = cmd.desired_orientation.rotate(np.array([0.0, 0.0, 1.0]))
    ori_dot = float(direction @ dir_des)

    def toe_world(s: RobotState) -> np.ndarray:
        ls = leg_state(model, s.q[3 * leg : 3 * leg + 3], leg)
        return s.base.transform_point(ls.toe)

    inv_dt2 = 1.0 / (dt * dt)
    acc_ee = (toe_world(cur) - 2.0 * toe_world(prev1) + toe_world(prev2)) * inv_dt2
    acc_base = (cur.base.position - 2.0 * prev1.base.position + prev2.base.position) * inv_dt2

    terms = {
        "pos_xy": weights.pos_xy * math.exp(-e_xy2 / weights.sigma_xy),
        "pos_z": weights.pos_z * math.exp(-e_z2 / weights.sigma_z),
        "ori": weights.ori * math.exp(-(1.0 - ori_dot) / weights.sigma_theta),
        "ee_accel": weights.ee_accel * float(acc_ee @ acc_ee),
        "base_accel": weights.base_accel * float(acc_base @ acc_base),
    }
    return sum(terms.values()), terms


@dataclass
class TrackingController:
    """Per-episode controller: IK plus filter memory plus base pursuit.

    Holds the low-pass filter state, so use one instance per episode;
    instances are independent and may run concurrently across episodes.
    """

    model: QuadrupedModel
    cfg: ControllerConfig = field(default_factory=ControllerConfig)
    _filtered: np.ndarray | None = None
    _last_ik: np.ndarray | None = None
    last_out_of_reach: bool = False

    def reset(self) -> None:
        self._filtered = None
        self._last_ik = None
        self.last_out_of_reach = False

    def tick(self, state: RobotState, cmd: ManipulationCommand) -> tuple[np.ndarray, np.ndarray]:
        """Return (filtered desired joint positions, base velocity command)."""
        res = ik_tick(self.model, state, cmd, self.cfg, q_init=self._last_ik)
        self._last_ik = res.q
        self.last_out_of_reach = res.out_of_reach
        if self._filtered is None:
            self._filtered = state.q.copy()
        self._filtered = lowpass(self._filtered, res.q, self.cfg.lowpass_alpha)
        base_cmd = gait_base_update(
            self.model,
            state,
            cmd,
            max_lin=self.cfg.max_lin_vel,
            max_yaw=self.cfg.max_yaw_rate,
            standoff_fraction=self.cfg.standoff_fraction,
        )
        return self._filtered, base_cmd
