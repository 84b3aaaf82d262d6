"""Baseline trajectory generators: a bidirectional joint-space RRT with
shortcut smoothing, and a receding-horizon cross-entropy controller (CEM-MPC).

Both write the shared trajectory container so their outputs flow through the
same metrics and evaluation as generated grasps, and both account their work
on a cost meter (collision predicate calls for the RRT, simulated steps for
the MPC). Fixed seeds make either planner bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import forward_dynamics_batch, inertia_scaled_gains, plain_pd
from .errors import PlanningFailure, RolloutDiverged, ValidationError
from .formats import Trajectory
from .harness import CostMeter
from .kinematics import fk_actuator

# How the default CEM rollout cost scores a candidate: squared joint distance
# to the goal configuration along the horizon, plus a terminal fingertip
# proximity term when an object cloud is supplied.
CEM_COST_POLICY = {"name": "goal-distance-terminal-contact", "version": 1}


@dataclass
class RrtConfig:
    max_nodes: int = 10000
    step_size: float = 0.01  # max-norm length of one tree extension
    goal_bias: float = 0.5
    seed: int = 0
    shortcut_attempts: int = 100
    # candidate motions are collision-checked at this fraction of step_size,
    # so thin obstacles narrower than one extension still register
    check_fraction: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.goal_bias < 1.0:
            raise ValidationError("goal_bias must lie strictly between 0 and 1")
        if self.step_size <= 0.0:
            raise ValidationError("step_size must be positive")
        if self.max_nodes < 2:
            raise ValidationError("max_nodes must be at least 2")
        if self.shortcut_attempts < 0:
            raise ValidationError("shortcut_attempts cannot be negative")
        if not 0.0 < self.check_fraction <= 1.0:
            raise ValidationError("check_fraction must lie in (0, 1]")


@dataclass
class CemConfig:
    popsize: int = 100
    horizon: int = 5  # actions per candidate sequence
    elites: int = 10
    iterations: int = 2
    seed: int = 0
    steps: int = 40  # receding-horizon control steps executed
    init_std: float = 0.2
    min_std: float = 1e-4

    def __post_init__(self):
        if self.popsize < 1:
            raise ValidationError("popsize must be at least 1")
        if self.elites < 1 or self.elites > self.popsize:
            raise ValidationError("elites must lie in [1, popsize]")
        if self.horizon < 1:
            raise ValidationError("horizon must be at least 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be at least 1")
        if self.steps < 1:
            raise ValidationError("steps must be at least 1")
        if self.init_std < 0.0:
            raise ValidationError("init_std cannot be negative")
        if self.min_std <= 0.0:
            raise ValidationError("min_std must be positive")


# ------------------------------------------------------------ collision


def collision_sphere_check(model, config, cloud, radii):
    """True iff any keypoint sphere touches any cloud point (distance <= radius)."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    kp = fk_actuator(model, config)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (kp.shape[0],))
    if cloud.shape[0] == 0:
        return False
    d2 = ((kp[:, None, :] - cloud[None, :, :]) ** 2).sum(axis=2)
    return bool((d2 <= radii[:, None] ** 2).any())


def make_sphere_collision(model, cloud, radii):
    """Fast predicate with the same semantics as collision_sphere_check;
    the cloud goes into a kd-tree once, queries are nearest-neighbor."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (model.n_keypoints,)).copy()
    if cloud.shape[0] == 0:
        return lambda config: False
    tree = cKDTree(cloud)

    def predicate(config):
        d, _ = tree.query(fk_actuator(model, config))
        return bool((d <= radii).any())

    return predicate


# ------------------------------------------------------------------ RRT


def _meter(meter):
    return meter if meter is not None else CostMeter()


def _motion_free(a, b, free, resolution):
    """Sample the segment a->b at `resolution` max-norm spacing (endpoint
    included, start assumed already checked)."""
    span = np.abs(b - a).max()
    k = max(1, int(np.ceil(span / resolution)))
    for i in range(1, k + 1):
        if not free(a + (b - a) * (i / k)):
            return False
    return True


class _Arena:
    """Both trees share one node store; labels tell them apart."""

    def __init__(self, max_nodes, dof):
        self.nodes = np.empty((max_nodes, dof))
        self.parents = np.full(max_nodes, -1, dtype=int)
        self.labels = np.empty(max_nodes, dtype=int)
        self.n = 0
        self.extensions = 0

    def add_root(self, q, label):
        self.nodes[self.n] = q
        self.labels[self.n] = label
        self.n += 1

    def nearest(self, label, target):
        idx = np.where(self.labels[: self.n] == label)[0]
        gaps = np.abs(self.nodes[idx] - target).max(axis=1)
        return int(idx[np.argmin(gaps)])

    def walk(self, idx, target, free, eps, resolution, greedy):
        """Extend from nodes[idx] toward target in eps-sized hops. greedy
        walks until blocked or arrival, otherwise a single hop. Returns
        (last_index, reached)."""
        q = self.nodes[idx]
        parent = idx
        label = self.labels[idx]
        while True:
            delta = target - q
            span = np.abs(delta).max()
            if span == 0.0:
                return parent, True
            if span <= eps:
                q_new = target.copy()
                final = True
            else:
                q_new = q + delta * (eps / span)
                final = False
            if self.n >= self.nodes.shape[0] or not _motion_free(q, q_new, free, resolution):
                return parent, False
            self.nodes[self.n] = q_new
            self.parents[self.n] = parent
            self.labels[self.n] = label
            parent = self.n
            self.n += 1
            self.extensions += 1
            q = q_new
            if final:
                return parent, True
            if not greedy:
                return parent, False

    def branch(self, idx):
        out = []
        while idx >= 0:
            out.append(self.nodes[idx])
            idx = self.parents[idx]
        return out


def rrt_plan(model, start, goal, collision, cfg=None, meter=None):
    """Collision-free joint path from start to goal as a uniform-time
    trajectory.

    Two trees grow from start and goal. Each round the active tree extends
    toward the opposite root with probability goal_bias (greedily, hop after
    hop until blocked) and otherwise takes a single hop toward a uniform
    sample inside the joint limits; the passive tree then greedily walks
    toward the newest node and the trees join when it arrives. The joined
    path gets shortcut_attempts seeded splice trials, stays step_size-dense,
    and is stamped with uniform times on [0, 1].

    Every collision predicate call increments meter.collision_checks.
    Raises PlanningFailure (carrying the meter) when max_nodes is exhausted.
    """
    cfg = cfg or RrtConfig()
    meter = _meter(meter)
    start = np.asarray(start, dtype=float).copy()
    goal = np.asarray(goal, dtype=float).copy()
    lower, upper = model.limits_lower, model.limits_upper
    if start.shape != (model.dof,) or goal.shape != (model.dof,):
        raise ValidationError(f"start and goal must have shape ({model.dof},)")
    if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
        raise ValidationError("sampling needs finite joint limits")
    for name, q in (("start", start), ("goal", goal)):
        if (q < lower).any() or (q > upper).any():
            raise ValidationError(f"{name} configuration violates joint limits")
    rng = np.random.default_rng(cfg.seed)

    def free(q):
        meter.collision_checks += 1
        return not collision(q)

    for name, q in (("start", start), ("goal", goal)):
        if not free(q):
            raise PlanningFailure(f"{name} configuration is in collision", meter=meter)

    eps = cfg.step_size
    resolution = eps * cfg.check_fraction
    arena = _Arena(cfg.max_nodes, model.dof)
    arena.add_root(start, 0)
    if np.abs(goal - start).max() == 0.0:
        return _to_trajectory([start], cfg, arena, meter)
    arena.add_root(goal, 1)
    roots = (start, goal)

    join = None
    active = 0
    while arena.n < cfg.max_nodes and join is None:
        passive = 1 - active
        biased = rng.uniform() < cfg.goal_bias
        target = roots[passive] if biased else rng.uniform(lower, upper)
        near = arena.nearest(active, target)
        last, _ = arena.walk(near, target, free, eps, resolution, greedy=biased)
        if arena.n >= cfg.max_nodes:
            break
        onear = arena.nearest(passive, arena.nodes[last])
        olast, joined = arena.walk(onear, arena.nodes[last], free, eps, resolution, greedy=True)
        if joined:
            join = (last, olast) if active == 0 else (olast, last)
        active = passive

    if join is None:
        raise PlanningFailure(
            f"no path within {arena.n} nodes ({meter.collision_checks} collision checks)",
            meter=meter,
        )
    side_start, side_goal = join
    path = arena.branch(side_start)[::-1] + arena.branch(side_goal)[1:]
    raw = len(path)
    path = shortcut_path(path, free, eps, cfg.shortcut_attempts, rng, resolution)
    return _to_trajectory(path, cfg, arena, meter, raw_waypoints=raw)


def shortcut_path(path, free, eps, attempts, rng, resolution=None):
    """Seeded smoothing: pick two waypoints, splice a straight segment when
    it checks out, re-sampled at eps density so the output stays as dense as
    the tree path. The rng makes the attempt sequence reproducible."""
    resolution = eps if resolution is None else resolution
    path = [np.asarray(p, dtype=float) for p in path]
    for _ in range(attempts):
        if len(path) < 3:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if _motion_free(path[i], path[j], free, resolution):
            span = np.abs(path[j] - path[i]).max()
            k = max(1, int(np.ceil(span / eps)))
            mid = [path[i] + (path[j] - path[i]) * (s / k) for s in range(1, k)]
            path = path[: i + 1] + mid + path[j:]
    return path


def _to_trajectory(path, cfg, arena, meter, raw_waypoints=None):
    frames = np.asarray(path, dtype=float)
    times = np.linspace(0.0, 1.0, frames.shape[0]) if frames.shape[0] > 1 else np.zeros(1)
    meta = {
        "planner": "rrt",
        "seed": cfg.seed,
        "nodes": arena.n,
        "extensions": arena.extensions,
        "collision_checks": meter.collision_checks,
        "raw_waypoints": raw_waypoints if raw_waypoints is not None else frames.shape[0],
    }
    return Trajectory(frames=frames, times=times, layout="actuator", meta=meta)


# -------------------------------------------------------------- CEM-MPC


@dataclass
class MpcDynamics:
    """Plant adapter for cem_mpc_plan: actions are joint position targets
    tracked by a PD loop through semi-implicit Euler substeps. Gains default
    to the inertia-scaled profile. Needs a fixed-base model."""

    model: object
    gains: object = None
    dt: float = 0.004
    frame_skip: int = 5
    mass_scale: float = 1.0

    def __post_init__(self):
        if self.gains is None:
            # tighter loop than the tracking benchmark default: the sampler
            # needs targets to register within a few control steps
            self.gains = inertia_scaled_gains(self.model, omega=30.0, mass_scale=self.mass_scale)

    @property
    def dof(self):
        return self.model.dof

    @property
    def step_time(self):
        return self.dt * self.frame_skip

    def step_batch(self, q, qd, actions, meter=None):
        """Advance B states one control step; meters B env steps per substep."""
        q = np.array(q, dtype=float, ndmin=2)
        qd = np.array(qd, dtype=float, ndmin=2)
        target = np.clip(actions, self.model.limits_lower, self.model.limits_upper)
        target = np.array(target, dtype=float, ndmin=2)
        for _ in range(self.frame_skip):
            tau = plain_pd(self.gains, q, qd, target)
            qdd = forward_dynamics_batch(self.model, q, qd, tau, mass_scale=self.mass_scale)
            qd = qd + self.dt * qdd
            q = q + self.dt * qd
            if meter is not None:
                meter.env_steps += q.shape[0]
        return q, qd


@dataclass
class DoubleIntegrator:
    """Minimal test plant: decoupled unit masses, actions are accelerations."""

    dof: int = 1
    dt: float = 0.1
    frame_skip: int = 1

    @property
    def step_time(self):
        return self.dt * self.frame_skip

    def step_batch(self, q, qd, actions, meter=None):
        q = np.array(q, dtype=float, ndmin=2)
        qd = np.array(qd, dtype=float, ndmin=2)
        actions = np.array(actions, dtype=float, ndmin=2)
        for _ in range(self.frame_skip):
            qd = qd + self.dt * actions
            q = q + self.dt * qd
            if meter is not None:
                meter.env_steps += q.shape[0]
        return q, qd


def make_grasp_cost(model, goal, cloud=None, contact_weight=50.0):
    """Default rollout cost (see CEM_COST_POLICY): sum of squared joint
    distances to the goal over the horizon, plus terminal squared fingertip
    distance to the cloud when one is given."""
    goal = np.asarray(goal, dtype=float)
    tree = None
    cloud = None if cloud is None else np.asarray(cloud, dtype=float).reshape(-1, 3)
    if cloud is not None and cloud.shape[0]:
        tree = cKDTree(cloud)
    tips = None if model is None else np.asarray(model.fingertip_indices, dtype=int)

    def cost(qs, qds, actions):
        c = float(((qs - goal) ** 2).sum())
        if tree is not None:
            kp = fk_actuator(model, qs[-1])[tips]
            d, _ = tree.query(kp)
            c += contact_weight * float((d**2).sum())
        return c

    return cost


def cem_refit(actions, costs, elites):
    """Elite selection and Gaussian refit. Stable sort, so cost ties resolve
    by candidate index and the result is deterministic. Returns
    (mean, std, elite_indices); std is the population std of the elites."""
    costs = np.asarray(costs, dtype=float)
    order = np.argsort(costs, kind="stable")[:elites]
    elite = actions[order]
    return elite.mean(axis=0), elite.std(axis=0), order


def cem_mpc_plan(dynamics, cost_fn, start, goal, cfg=None, meter=None, blowup=1e6):
    """Receding-horizon CEM control toward a goal configuration.

    Each control step runs cfg.iterations rounds of: sample action sequences
    of length cfg.horizon around the current Gaussian, roll every candidate
    through the plant, refit mean/std on the cfg.elites best. Elites survive
    into the next round's population (their rollouts are not re-simulated),
    which makes the recorded per-iteration elite mean cost non-increasing
    within a control step. The first action of the final mean is applied to
    the real state, the plan shifts one step, and the loop repeats.

    start is either a configuration (rest velocity) or a (q, qd) pair.
    cost_fn(qs, qds, actions) -> scalar scores one rollout; see
    make_grasp_cost for the default policy. Every simulated substep
    increments meter.env_steps. Candidates whose rollout leaves the blowup
    bound get infinite cost; if the applied step itself diverges the planner
    raises RolloutDiverged.
    """
    cfg = cfg or CemConfig()
    meter = _meter(meter)
    if isinstance(start, (tuple, list)) and len(start) == 2:
        q, qd = (np.asarray(a, dtype=float).copy() for a in start)
    else:
        q = np.asarray(start, dtype=float).copy()
        qd = np.zeros_like(q)
    goal = np.asarray(goal, dtype=float)
    dof = dynamics.dof
    if q.shape != (dof,) or goal.shape != (dof,):
        raise ValidationError(f"start and goal must have shape ({dof},)")
    rng = np.random.default_rng(cfg.seed)

    def rollout_batch(actions):
        """actions (B, T, dof) -> costs (B,). Dead rollouts cost inf."""
        B = actions.shape[0]
        Q = np.repeat(q[None], B, axis=0)
        Qd = np.repeat(qd[None], B, axis=0)
        qs = np.empty((B, cfg.horizon, dof))
        qds = np.empty((B, cfg.horizon, dof))
        dead = np.zeros(B, dtype=bool)
        with np.errstate(all="ignore"):
            for t in range(cfg.horizon):
                Q, Qd = dynamics.step_batch(Q, Qd, actions[:, t], meter)
                bad = ~np.isfinite(Q).all(axis=1) | ~np.isfinite(Qd).all(axis=1)
                bad |= np.abs(np.where(np.isfinite(Q), Q, 0.0)).max(axis=1) > blowup
                bad |= np.abs(np.where(np.isfinite(Qd), Qd, 0.0)).max(axis=1) > blowup
                dead |= bad
                Q[dead] = 0.0
                Qd[dead] = 0.0
                qs[:, t] = Q
                qds[:, t] = Qd
        costs = np.empty(B)
        for b in range(B):
            costs[b] = np.inf if dead[b] else float(cost_fn(qs[b], qds[b], actions[b]))
        return costs

    mean = np.repeat(q[None], cfg.horizon, axis=0)
    frames = [q.copy()]
    elite_history = []
    for step in range(cfg.steps):
        std = np.full((cfg.horizon, dof), float(cfg.init_std))
        carried_actions = None
        carried_costs = None
        recorded = []
        for _ in range(cfg.iterations):
            fresh = cfg.popsize if carried_actions is None else cfg.popsize - cfg.elites
            noise = rng.standard_normal((fresh, cfg.horizon, dof))
            candidates = mean[None] + std[None] * noise
            costs = rollout_batch(candidates) if fresh else np.empty(0)
            if carried_actions is not None:
                candidates = np.concatenate([candidates, carried_actions], axis=0)
                costs = np.concatenate([costs, carried_costs])
            mean, new_std, order = cem_refit(candidates, costs, cfg.elites)
            std = np.maximum(new_std, cfg.min_std)
            carried_actions = candidates[order]
            carried_costs = costs[order]
            # inf-aware mean: the elite multiset only ever improves, so this
            # sequence is non-increasing by construction
            recorded.append(float(np.mean(carried_costs)))
        elite_history.append(recorded)
        q2, qd2 = dynamics.step_batch(q[None], qd[None], mean[0][None], meter)
        q, qd = q2[0], qd2[0]
        if not (np.isfinite(q).all() and np.isfinite(qd).all()) or np.abs(q).max() > blowup or np.abs(qd).max() > blowup:
            raise RolloutDiverged(f"control step {step} left the blowup bound {blowup:g}")
        frames.append(q.copy())
        mean = np.concatenate([mean[1:], mean[-1:]], axis=0)

    frames = np.asarray(frames)
    times = np.arange(frames.shape[0]) * float(getattr(dynamics, "step_time", 1.0))
    meta = {
        "planner": "cem",
        "seed": cfg.seed,
        "policy": dict(CEM_COST_POLICY),
        "elite_mean_costs": elite_history,
        "env_steps": meter.env_steps,
        "goal_distance": float(np.abs(q - goal).max()),
    }
    return Trajectory(frames=frames, times=times, layout="actuator", meta=meta, executed=True)
