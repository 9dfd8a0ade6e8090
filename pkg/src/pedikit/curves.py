"""Weighted (rational) Bezier position curves, quaternion interpolation, and
phase-time mapping.

A manipulation trajectory is a weighted Bezier curve in 3D plus a start/end
orientation pair interpolated along the same normalized phase.  High control
point weights pull the curve toward their point, which lets one family of
parameters express both smooth arcs and polyline-like strokes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Quat

CURVE_POINTS = 7  # fixed order-6 curve in trajectory parameters

# Orientation pairs closer than this fall back to normalized lerp.
SLERP_MIN_ANGLE = 1e-6


def _check_phase(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"phase must be in [0, 1], got {t}")
    return t


def _check_curve_arrays(points, weights) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
        raise ValueError(f"control points must be (n+1, 3) with n >= 1, got {pts.shape}")
    if w.shape != (pts.shape[0],):
        raise ValueError(f"need one weight per control point, got {w.shape} for {pts.shape[0]} points")
    if not np.all(w > 0.0):
        raise ValueError("all curve weights must be strictly positive")
    return pts, w


def bezier_point(points, weights, t: float) -> np.ndarray:
    """Evaluate a weighted Bezier curve of any order at phase ``t``.

    Computes sum_i C(n,i) t^i (1-t)^(n-i) w_i p_i over the matching scalar
    sum of weights.  Positive weights keep the result inside the convex hull
    of the control points, and scaling every weight by a common factor leaves
    the curve unchanged.
    """
    t = _check_phase(t)
    pts, w = _check_curve_arrays(points, weights)
    n = pts.shape[0] - 1
    basis = np.array([math.comb(n, i) * t**i * (1.0 - t) ** (n - i) for i in range(n + 1)])
    bw = basis * w
    return bw @ pts / bw.sum()


def bezier_point_casteljau(points, weights, t: float) -> np.ndarray:
    """Projective de Casteljau evaluation; differential-test twin of
    :func:`bezier_point`.

    Lifts each control point to 4D homogeneous coordinates (w*p, w), runs the
    plain de Casteljau recursion, and projects back.  Same contract as the
    closed-form evaluation; the two implementations stay independent so they
    can check each other.
    """
    t = _check_phase(t)
    pts, w = _check_curve_arrays(points, weights)
    h = np.empty((pts.shape[0], 4))
    h[:, :3] = pts * w[:, None]
    h[:, 3] = w
    while h.shape[0] > 1:
        h = (1.0 - t) * h[:-1] + t * h[1:]
    return h[0, :3] / h[0, 3]


@dataclass(frozen=True)
class RationalBezier:
    """Order-6 weighted Bezier curve: 7 control points with positive weights."""

    control_points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts, w = _check_curve_arrays(self.control_points, self.weights)
        if pts.shape[0] != CURVE_POINTS:
            raise ValueError(f"trajectory curves use exactly {CURVE_POINTS} control points, got {pts.shape[0]}")
        pts = pts.copy()
        w = w.copy()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "control_points", pts)
        object.__setattr__(self, "weights", w)

    def point(self, t: float) -> np.ndarray:
        return bezier_point(self.control_points, self.weights, t)

    def point_casteljau(self, t: float) -> np.ndarray:
        return bezier_point_casteljau(self.control_points, self.weights, t)


def slerp(q0: Quat, q1: Quat, t: float) -> Quat:
    """Spherical linear interpolation from ``q0`` to ``q1`` at phase ``t``.

    Follows the shorter arc (negating ``q1`` if the pair dots negative) and
    falls back to normalized linear interpolation when the subtended angle
    vanishes.  The result rotates at constant angular speed in ``t``.
    """
    t = _check_phase(t)
    a = q0.as_array()
    b = q1.as_array()
    dot = float(a @ b)
    if dot < 0.0:
        b = -b
        dot = -dot
    dot = min(1.0, dot)
    theta = math.acos(dot)
    if theta < SLERP_MIN_ANGLE:
        return Quat.from_array((1.0 - t) * a + t * b)
    s = math.sin(theta)
    return Quat.from_array((math.sin((1.0 - t) * theta) * a + math.sin(t * theta) * b) / s)


@dataclass(frozen=True)
class OrientationTrack:
    """Start/end orientation pair interpolated by slerp over the phase."""

    q_start: Quat
    q_end: Quat

    def orientation(self, t: float) -> Quat:
        return slerp(self.q_start, self.q_end, t)


@dataclass(frozen=True)
class PhaseClock:
    """Maps wall time onto normalized phase over a trajectory's time span."""

    t_start: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0.0:
            raise ValueError(f"duration must be positive, got {self.duration}")

    def phase(self, t_now: float) -> float:
        return min(1.0, max(0.0, (t_now - self.t_start) / self.duration))


def lookahead_points(curve: RationalBezier, clock: PhaseClock, t_now: float, dt: float, k: int) -> np.ndarray:
    """Curve points at the next ``k`` control ticks, clamped at the endpoint."""
    if dt <= 0.0:
        raise ValueError("lookahead dt must be positive")
    if k < 1:
        raise ValueError("lookahead count must be >= 1")
    return np.stack([curve.point(clock.phase(t_now + j * dt)) for j in range(1, k + 1)])
