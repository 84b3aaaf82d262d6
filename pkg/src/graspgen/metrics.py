"""Trajectory smoothness scoring in joint and Cartesian space.

Each channel is affinely normalized so it starts at 0 and ends at 1, then
scored by the L1 path length of the channel, of its first difference and of
its second difference. A straight-line (constant-velocity) channel
telescopes to exactly 1.0 in position and 0 in the difference metrics, so
1.00 / floor / floor is the reference point for a perfectly smooth path.

Conventions that the source text leaves open are fixed here and labeled in
every emitted table: scores are per-channel means (not sums), difference
metrics are reported as log base 10 with a 1e-12 floor, and a channel whose
first and last samples coincide cannot be normalized, so it is excluded and
the report flagged degenerate rather than silently zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .formats import Trajectory
from .kinematics import fk_actuator, pose_to_actuator

LOG_FLOOR = 1e-12

# Stamped into tables so readers know which open conventions this build uses.
SCORING_POLICY = {"aggregation": "per_channel_mean", "log_base": 10, "log_floor": LOG_FLOOR}


@dataclass
class SmoothnessReport:
    """Six scores for one trajectory: pos / vel_log10 / acc_log10 in joint
    space and again on flattened FK keypoint coordinates.

    excluded_* list channels dropped because q_last == q_first made the 0..1
    normalization undefined; degenerate is True when anything was dropped.
    Scores are NaN only when every channel of a space was dropped.
    """

    trajectory_id: str
    frames: int
    joint_pos: float
    joint_vel_log10: float
    joint_acc_log10: float
    cart_pos: float
    cart_vel_log10: float
    cart_acc_log10: float
    excluded_joint: tuple = ()
    excluded_cart: tuple = ()

    @property
    def degenerate(self):
        return bool(self.excluded_joint) or bool(self.excluded_cart)

    def as_dict(self):
        return {
            "trajectory_id": self.trajectory_id,
            "frames": self.frames,
            "joint": {
                "pos": self.joint_pos,
                "vel_log10": self.joint_vel_log10,
                "acc_log10": self.joint_acc_log10,
            },
            "cartesian": {
                "pos": self.cart_pos,
                "vel_log10": self.cart_vel_log10,
                "acc_log10": self.cart_acc_log10,
            },
            "excluded_joint": list(self.excluded_joint),
            "excluded_cart": list(self.excluded_cart),
            "degenerate": self.degenerate,
        }


def channel_smoothness(frames):
    """Score a (T, C) array of raw channels.

    Returns (pos, vel_log10, acc_log10, excluded) where excluded holds the
    indices of channels with q_last == q_first. Scores average over the
    remaining channels; all three are NaN when no channel survives.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2:
        raise ValidationError(f"expected (T, C) frames, got {frames.shape}")
    if frames.shape[0] < 4:
        raise ValidationError("need at least 4 frames to score acceleration")
    span = frames[-1] - frames[0]
    live = span != 0.0
    excluded = tuple(int(i) for i in np.flatnonzero(~live))
    if not live.any():
        return float("nan"), float("nan"), float("nan"), excluded
    x = (frames[:, live] - frames[0, live]) / span[live]
    v = np.diff(x, axis=0)
    pos = float(np.abs(v).sum(axis=0).mean())
    vel = float(np.abs(np.diff(v, axis=0)).sum(axis=0).mean())
    acc = float(np.abs(np.diff(v, n=2, axis=0)).sum(axis=0).mean())
    vel_log = float(np.log10(max(vel, LOG_FLOOR)))
    acc_log = float(np.log10(max(acc, LOG_FLOOR)))
    return pos, vel_log, acc_log, excluded


def _actuator_frames(model, trajectory):
    if isinstance(trajectory, Trajectory):
        frames = trajectory.frames
        layout = trajectory.layout
    else:
        frames = np.asarray(trajectory, dtype=float)
        layout = "actuator"
    if layout == "pose":
        frames = np.stack([pose_to_actuator(f) for f in frames])
    elif layout != "actuator":
        raise ValidationError(f"unknown trajectory layout {layout!r}")
    if frames.ndim != 2 or frames.shape[1] != model.limits_lower.shape[0]:
        raise ValidationError(
            f"frames {frames.shape} do not match the model's {model.limits_lower.shape[0]} actuators"
        )
    return frames


def smoothness(trajectory, model, trajectory_id=None):
    """Full report for one trajectory: joint channels are the actuator
    coordinates, Cartesian channels the flattened FK keypoint coordinates."""
    frames = _actuator_frames(model, trajectory)
    if trajectory_id is None:
        trajectory_id = ""
        if isinstance(trajectory, Trajectory):
            trajectory_id = str(trajectory.meta.get("id", ""))
    jp, jv, ja, jex = channel_smoothness(frames)
    kp = np.stack([fk_actuator(model, q).reshape(-1) for q in frames])
    cp, cv, ca, cex = channel_smoothness(kp)
    return SmoothnessReport(
        trajectory_id=str(trajectory_id),
        frames=int(frames.shape[0]),
        joint_pos=jp,
        joint_vel_log10=jv,
        joint_acc_log10=ja,
        cart_pos=cp,
        cart_vel_log10=cv,
        cart_acc_log10=ca,
        excluded_joint=jex,
        excluded_cart=cex,
    )


def linear_resample(start, end, n_frames):
    """The straight-line reference trajectory between two configurations."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    w = np.linspace(0.0, 1.0, n_frames)[:, None]
    return start[None, :] * (1.0 - w) + end[None, :] * w


def resample_polyline(path, n_frames):
    """Walk a waypoint path at constant joint-space speed and sample
    n_frames evenly; direction changes at waypoints survive as kinks."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[0] < 1:
        raise ValidationError(f"path must be (M, J) with M >= 1, got {path.shape}")
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0.0:
        return np.repeat(path[:1], n_frames, axis=0)
    grid = np.linspace(0.0, s[-1], n_frames)
    out = np.empty((n_frames, path.shape[1]))
    for j in range(path.shape[1]):
        out[:, j] = np.interp(grid, s, path[:, j])
    return out


def _mean_cell(reports, getter):
    vals = np.array([getter(r) for r in reports], dtype=float)
    vals = vals[np.isfinite(vals)]
    return float(vals.mean()) if vals.size else float("nan")


def compare_methods(reports_by_method, costs_by_method=None):
    """Aggregate per-trajectory reports into the comparison table.

    reports_by_method: dict name -> SmoothnessReport or list of them.
    costs_by_method: optional dict name -> {"env_steps": int, "successes": int};
    the cost column is log10(steps / successes), rendered "-" at zero successes.

    Cells are means over each method's trajectories; every cell records how
    many trajectories (and how many degenerate ones) went into it.
    """
    if len(reports_by_method) < 2:
        raise ValidationError("comparison needs at least 2 methods")
    methods = {}
    for name, reports in reports_by_method.items():
        if isinstance(reports, SmoothnessReport):
            reports = [reports]
        if not reports:
            raise ValidationError(f"method {name!r} has no trajectories to aggregate")
        cell = {
            "joint": {
                "pos": _mean_cell(reports, lambda r: r.joint_pos),
                "vel_log10": _mean_cell(reports, lambda r: r.joint_vel_log10),
                "acc_log10": _mean_cell(reports, lambda r: r.joint_acc_log10),
            },
            "cartesian": {
                "pos": _mean_cell(reports, lambda r: r.cart_pos),
                "vel_log10": _mean_cell(reports, lambda r: r.cart_vel_log10),
                "acc_log10": _mean_cell(reports, lambda r: r.cart_acc_log10),
            },
            "trajectories": len(reports),
            "degenerate": sum(1 for r in reports if r.degenerate),
        }
        if costs_by_method and name in costs_by_method:
            c = costs_by_method[name]
            steps, succ = int(c["env_steps"]), int(c["successes"])
            cell["env_steps"] = steps
            cell["successes"] = succ
            cell["cost_log10"] = float(np.log10(steps / succ)) if succ > 0 and steps > 0 else "-"
        methods[name] = cell
    return {"policy": dict(SCORING_POLICY), "methods": methods}
