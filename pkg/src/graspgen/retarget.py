"""Keypoint retargeting: fit actuator configurations to keypoint targets.

Each frame solves

    min_q  ||keypoints(q) - targets||^2
           + lambda_smooth * ||keypoints(q) - keypoints(q_prev)||^2

subject to box limits. The smoothness term lives in keypoint space, so it
penalizes hands that teleport in the workspace, not merely in joint space.
Default solver is damped Gauss-Newton with projection onto the limits and
an Armijo backtracking line search; a projected-gradient solver is kept as
a slower cross-check. Frames after the first warm-start from the previous
solution so the output trajectory stays temporally coherent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, SolverDivergence, ValidationError
from .formats import Trajectory
from .kinematics import fk_actuator, fk_jacobian_actuator
from .rotations import matrix_to_axis_angle

SOLVERS = ("gauss_newton", "projected_gradient")


@dataclass
class RetargetConfig:
    lambda_smooth: float = 1e-2  # weight of the keypoint-velocity penalty
    max_iters: int = 200
    # stop when the best line-search step would gain less than this; the
    # non-step is rejected, so a converged frame is a fixed point of the
    # solver and constant inputs give bitwise-constant outputs
    tol: float = 1e-14
    solver: str = "gauss_newton"
    damping: float = 1e-2  # initial ridge; x10 after a stalled line search, x0.25 after a step
    armijo_c: float = 1e-4
    max_halvings: int = 30

    def __post_init__(self):
        if self.lambda_smooth < 0.0:
            raise ValidationError("lambda_smooth must be nonnegative")
        if self.tol <= 0.0 or self.max_iters < 1:
            raise ValidationError("tol must be positive and max_iters >= 1")
        if self.solver not in SOLVERS:
            raise ValidationError(f"solver must be one of {SOLVERS}, got {self.solver!r}")


@dataclass
class RetargetInfo:
    iterations: int = 0
    cost: float = float("inf")
    converged: bool = False
    stalls: int = 0
    cost_history: list = field(default_factory=list)


@dataclass
class HumanTrajectory:
    """Observed keypoint tracks to imitate: (T, K, 3) over a time grid."""

    keypoints: np.ndarray
    times: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.keypoints.ndim != 3 or self.keypoints.shape[2] != 3:
            raise DimensionMismatch("keypoints", "(T, K, 3)", self.keypoints.shape)
        if self.times.shape != (self.keypoints.shape[0],):
            raise DimensionMismatch("times", (self.keypoints.shape[0],), self.times.shape)
        if np.isnan(self.keypoints).any():
            raise ValidationError("keypoint frames contain NaN; fix the capture before retargeting")
        if self.times.size > 1 and not (np.diff(self.times) > 0).all():
            raise ValidationError("timestamps must be strictly increasing")


def _objective(model, q, targets, kp_prev, lam):
    """Returns (objective, combined residual r with the smooth block scaled
    by sqrt(lam), gradient-carrier r_p + lam*r_s). objective = sum of squares,
    matching the written form of the cost."""
    kp = fk_actuator(model, q)
    r_p = (kp - targets).ravel()
    r_s = (kp - kp_prev).ravel()
    cost = float(r_p @ r_p) + lam * float(r_s @ r_s)
    return cost, r_p + lam * r_s


def root_alignment(model, targets):
    """Candidate start with the root pose read off the palm markers.

    Keypoints rigidly attached to the root link determine the root transform
    in closed form (orthogonal Procrustes on marker offsets vs targets);
    fingers start at their limit midpoints. Gauss-Newton from the midpoint
    alone stalls when the observed palm is rotated nearly 180 degrees away,
    so aligning the wrist first is what makes arbitrary approach directions
    retargetable. Falls back to the plain midpoint when the model has fewer
    than three root markers.
    """
    q = model.midpoint_pose()
    if not model.has_free_root:
        return q
    rows = [i for i, kp in enumerate(model.keypoints) if kp.link == 0]
    if len(rows) < 3:
        return q
    local = np.stack([model.keypoints[i].offset for i in rows])
    world = np.asarray(targets, dtype=float)[rows]
    cl = local.mean(axis=0)
    cw = world.mean(axis=0)
    H = (local - cl).T @ (world - cw)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    q[:3] = cw - R @ cl
    q[3:6] = matrix_to_axis_angle(R)
    return model.clip_actuator(q)


def retarget_frame(model, targets, q_prev, config=None):
    """Fit one frame against targets with q_prev as the smoothness anchor.

    The iterate starts from whichever of {q_prev, wrist-aligned guess} has
    the lower objective, so the result never ends up worse than q_prev.
    Returns (q, RetargetInfo); raises SolverDivergence when two successive
    line searches stall.
    """
    cfg = config or RetargetConfig()
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (model.n_keypoints, 3):
        raise DimensionMismatch("targets", (model.n_keypoints, 3), targets.shape)
    lam = float(cfg.lambda_smooth)
    q_prev = model.clip_actuator(np.asarray(q_prev, dtype=float).copy())
    kp_prev = fk_actuator(model, q_prev)

    q = q_prev
    cost, r = _objective(model, q, targets, kp_prev, lam)
    q_alt = root_alignment(model, targets)
    if not np.array_equal(q_alt, q):
        cost_alt, r_alt = _objective(model, q_alt, targets, kp_prev, lam)
        if cost_alt < cost:
            q, cost, r = q_alt, cost_alt, r_alt

    info = RetargetInfo()
    info.cost_history.append(cost)
    ridge = cfg.damping
    stalled_last = False
    for it in range(cfg.max_iters):
        info.iterations = it + 1
        J = fk_jacobian_actuator(model, q)  # (3K, dof)
        g = 2.0 * (J.T @ r)  # gradient of the sum-of-squares objective
        if cfg.solver == "gauss_newton":
            H = (1.0 + lam) * (J.T @ J) + ridge * np.eye(model.dof)
            try:
                step = np.linalg.solve(H, -0.5 * g)
            except np.linalg.LinAlgError:
                raise SolverDivergence("normal equations are singular", last_iterate=q)
        else:
            step = -g / max(1.0, float(np.abs(g).max()))  # scale-capped descent
        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            q_new = model.clip_actuator(q + alpha * step)
            move = q_new - q
            new_cost, new_r = _objective(model, q_new, targets, kp_prev, lam)
            if new_cost <= cost + cfg.armijo_c * float(g @ move):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            info.stalls += 1
            if stalled_last:
                raise SolverDivergence(
                    f"line search stalled twice at cost {cost:.3e}",
                    last_iterate=q,
                    history=info.cost_history,
                )
            stalled_last = True
            ridge *= 10.0
            continue
        stalled_last = False
        ridge = max(0.25 * ridge, 1e-10)
        if cost - new_cost <= cfg.tol:
            info.converged = True
            break
        q, cost, r = q_new, new_cost, new_r
        info.cost_history.append(cost)
    info.cost = cost
    return q, info


def retarget_trajectory(model, human, config=None):
    """Retarget every frame sequentially.

    Frame 0 starts from the limit midpoint and carries no temporal penalty
    (it has no predecessor; the smoothness term pairs q_t with q_{t-1}).
    That way a position-stationary frame 0 anchors the rest: on constant
    keypoint input every later frame starts at, and is anchored at, a
    stationary point and stays there bitwise. Frame t>0 uses the frame t-1
    solution as anchor and warm start. Returns (Trajectory, [RetargetInfo]).
    """
    cfg = config or RetargetConfig()
    if human.keypoints.shape[1] != model.n_keypoints:
        raise DimensionMismatch(
            "keypoints", (human.keypoints.shape[0], model.n_keypoints, 3), human.keypoints.shape
        )
    T = human.keypoints.shape[0]
    frames = np.empty((T, model.dof))
    infos = []
    q_prev = model.midpoint_pose()
    for t in range(T):
        frame_cfg = cfg if t > 0 else replace(cfg, lambda_smooth=0.0)
        try:
            q_prev, info = retarget_frame(model, human.keypoints[t], q_prev, frame_cfg)
        except SolverDivergence as err:
            raise SolverDivergence(
                f"frame {t}: {err.args[0]}", last_iterate=err.last_iterate, history=err.history
            ) from err
        frames[t] = q_prev
        infos.append(info)
    meta = {"source_id": human.source_id} if human.source_id else {}
    return Trajectory(frames=frames, times=human.times.copy(), layout="actuator", meta=meta), infos
