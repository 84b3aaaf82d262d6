"""Grasp evaluation: contact/opposition success proxy, kinematic lift,
and cost accounting.

A trajectory "succeeds" when, at its final frame, at least `min_contacts`
fingertips sit within `contact_threshold` of the object surface and some
pair of contact normals opposes by at least `opposition_deg`. Successful
grasps then pay for a kinematic lift: hand and object translate up together
and the contacts are re-verified at the top. Every executed frame (and every
lift frame) is one environment step on the meter.

This proxy replaces a physical simulator on purpose; it is named and
versioned below so numbers from different runs stay comparable, and it is
never a claim about physical success rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .formats import Trajectory
from .kinematics import fk_actuator

PROXY_POLICY = {"name": "contact-opposition-kinematic-lift", "version": 1}


@dataclass
class CostMeter:
    """Counters are monotone; nothing in this module ever decrements."""

    env_steps: int = 0
    collision_checks: int = 0
    successes: int = 0


@dataclass
class LiftTask:
    cloud: np.ndarray  # (N, 3) object surface points, object frame
    pose: np.ndarray = None  # (4, 4) rigid transform into world, default identity
    contact_threshold: float = 0.005
    min_contacts: int = 3
    opposition_deg: float = 120.0
    lift_height: float = 0.04
    lift_frames: int = 10
    normals_k: int = 16

    def __post_init__(self):
        self.cloud = np.asarray(self.cloud, dtype=float)
        if self.cloud.ndim != 2 or self.cloud.shape[1] != 3 or self.cloud.shape[0] == 0:
            raise ValidationError(f"cloud must be nonempty (N, 3), got {self.cloud.shape}")
        if self.lift_height <= 0.0:
            raise ValidationError("lift_height must be positive")
        if self.pose is None:
            self.pose = np.eye(4)
        self.pose = np.asarray(self.pose, dtype=float)
        if self.pose.shape != (4, 4):
            raise ValidationError(f"pose must be a 4x4 rigid transform, got {self.pose.shape}")
        self._world = None
        self._normals = None

    @property
    def world_cloud(self):
        if self._world is None:
            R, t = self.pose[:3, :3], self.pose[:3, 3]
            self._world = self.cloud @ R.T + t
        return self._world

    @property
    def normals(self):
        if self._normals is None:
            self._normals = estimate_normals(self.world_cloud, k=self.normals_k)
        return self._normals


def estimate_normals(cloud, k=16):
    """Surface normals by local PCA over the k nearest neighbors, oriented
    away from the cloud centroid.

    A neighborhood that does not span a plane (collinear or duplicated
    points, rank < 2) gets an all-NaN row as the invalid marker; consumers
    skip those.
    """
    cloud = np.asarray(cloud, dtype=float)
    N = cloud.shape[0]
    k = min(k, N - 1)
    if k < 2:
        raise ValidationError("too few points for normal estimation")
    tree = cKDTree(cloud)
    _, idx = tree.query(cloud, k=k + 1)
    nb = cloud[idx[:, 1:]]  # (N, k, 3), self excluded
    nb = nb - nb.mean(axis=1, keepdims=True)
    # smallest right-singular vector of each neighborhood = plane normal
    _, sv, vt = np.linalg.svd(nb, full_matrices=False)
    normals = vt[:, -1, :]
    outward = cloud - cloud.mean(axis=0)
    flip = np.sum(normals * outward, axis=1) < 0.0
    normals[flip] = -normals[flip]
    # rank test: the second singular value carries the in-plane spread
    invalid = sv[:, 1] <= 1e-9 * np.maximum(sv[:, 0], 1e-30)
    normals[invalid] = np.nan
    return normals


@dataclass
class EvalResult:
    success: bool
    contacts: int
    opposition_deg: float
    lifted: bool
    tip_distances: np.ndarray  # (n_tips,) to the nearest surface point
    frames_executed: int

    def as_dict(self):
        return {
            "success": bool(self.success),
            "contacts": int(self.contacts),
            "opposition_deg": float(self.opposition_deg),
            "lifted": bool(self.lifted),
            "tip_distances": [float(d) for d in self.tip_distances],
            "frames_executed": int(self.frames_executed),
        }


def _contact_state(hand, q_act, cloud, normals, task):
    tips = fk_actuator(hand, q_act)[list(hand.fingertip_indices)]
    d2 = ((tips[:, None, :] - cloud[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    dist = np.sqrt(d2[np.arange(tips.shape[0]), nearest])
    touching = dist <= task.contact_threshold
    opp = 0.0
    if touching.sum() >= 2:
        ns = normals[nearest[touching]]
        ns = ns[~np.isnan(ns).any(axis=1)]  # drop invalid-normal contacts
        if ns.shape[0] >= 2:
            cosines = np.clip(ns @ ns.T, -1.0, 1.0)
            iu = np.triu_indices(ns.shape[0], k=1)
            opp = float(np.degrees(np.arccos(cosines[iu])).max())
    return dist, touching, opp


def evaluate(hand, trajectory, task, meter=None):
    """Execute one actuator trajectory kinematically and score the grasp."""
    frames = trajectory.frames if isinstance(trajectory, Trajectory) else np.asarray(trajectory, float)
    if frames.ndim != 2 or frames.shape[1] != hand.dof:
        raise ValidationError(f"trajectory must be (T, {hand.dof}), got {frames.shape}")
    T = frames.shape[0]
    if meter is not None:
        meter.env_steps += T
    cloud = task.world_cloud
    normals = task.normals
    dist, touching, opp = _contact_state(hand, frames[-1], cloud, normals, task)
    contacts = int(touching.sum())
    grasped = contacts >= task.min_contacts and opp >= task.opposition_deg
    lifted = False
    if grasped:
        # rigid co-move assumption: hand and object rise together, contacts
        # re-checked at the top against the shifted surface
        q_top = frames[-1].copy()
        dz = np.array([0.0, 0.0, task.lift_height])
        q_top[:3] += dz
        _, touch_top, opp_top = _contact_state(hand, q_top, cloud + dz, normals, task)
        lifted = int(touch_top.sum()) >= task.min_contacts and opp_top >= task.opposition_deg
        if meter is not None:
            meter.env_steps += task.lift_frames
    success = grasped and lifted
    if success and meter is not None:
        meter.successes += 1
    return EvalResult(
        success=success,
        contacts=contacts,
        opposition_deg=opp,
        lifted=lifted,
        tip_distances=dist,
        frames_executed=T + (task.lift_frames if grasped else 0),
    )


def batch_filter(hand, trajectories, task, meter=None):
    """Evaluate a batch and keep the winners.

    Returns (successful trajectories in input order, report). The report
    carries per-trajectory verdicts and the aggregate cost column:
    log10(env_steps / successes), "-" when nothing succeeded.
    """
    if not len(trajectories):
        raise ValidationError("batch_filter needs at least one trajectory")
    meter = meter if meter is not None else CostMeter()
    results = [evaluate(hand, tr, task, meter) for tr in trajectories]
    kept = [tr for tr, r in zip(trajectories, results) if r.success]
    n_success = sum(r.success for r in results)
    cost = cost_of_success(meter.env_steps, n_success)
    report = {
        "policy": dict(PROXY_POLICY),
        "attempts": len(results),
        "successes": n_success,
        "env_steps": meter.env_steps,
        "collision_checks": meter.collision_checks,
        "cost_of_success": format_cost(cost),
        "trajectories": [r.as_dict() for r in results],
    }
    return kept, report


def cost_of_success(env_steps, successes):
    """log10(environment steps per success); inf when nothing succeeded."""
    if successes <= 0:
        return float("inf")
    return float(np.log10(env_steps / successes))


def format_cost(value):
    """Render for reports; the infinity marker is a plain dash."""
    return "-" if np.isinf(value) else float(value)
