"""Rigid-body dynamics and the tracking controllers.

recursive Newton-Euler in link-local frames for fixed-base trees/forests of
1-DoF joints; the free-root hand is handled by re-rooting its fingers onto a
prescribed palm pose (finger_subtree). Mass matrix columns come from unit
accelerations, forward dynamics from a symmetric solve, and the simulator is
semi-implicit Euler with a zero-order-hold on the control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import RolloutDiverged, ValidationError
from .formats import Trajectory
from .kinematics import (
    FREE_ROOT,
    HandModel,
    Joint,
    Keypoint,
    LinkInertia,
    PRISMATIC,
    REVOLUTE,
    axis_angle_to_matrix,
)


def _require_dynamic(model):
    if model.has_free_root:
        raise ValidationError("dynamics needs a fixed-base model (see finger_subtree)")
    if not model.inertias:
        raise ValidationError(f"model '{model.name}' has no inertia data")


def finger_subtree(model, base_pos=None, base_aa=None):
    """Fixed-base copy of a free-root hand with the palm clamped at a pose.

    Joints that hung off the palm become world-rooted; the palm link itself
    (and its keypoints) disappears. Limits keep their finger entries.
    """
    if not model.has_free_root:
        raise ValidationError("model has no free root to clamp")
    Rb = axis_angle_to_matrix(np.zeros(3) if base_aa is None else np.asarray(base_aa, float))
    pb = np.zeros(3) if base_pos is None else np.asarray(base_pos, float)
    joints = []
    for j in model.joints[1:]:
        if j.parent == 0:
            joints.append(
                Joint(
                    name=j.name,
                    jtype=j.jtype,
                    parent=-1,
                    offset_rot=Rb @ j.offset_rot,
                    offset_pos=pb + Rb @ j.offset_pos,
                    axis=j.axis,
                )
            )
        else:
            joints.append(
                Joint(
                    name=j.name,
                    jtype=j.jtype,
                    parent=j.parent - 1,
                    offset_rot=j.offset_rot,
                    offset_pos=j.offset_pos,
                    axis=j.axis,
                )
            )
    keypoints = tuple(
        Keypoint(link=k.link - 1, offset=k.offset, fingertip=k.fingertip)
        for k in model.keypoints
        if k.link > 0
    )
    inertias = tuple(model.inertias[1:]) if model.inertias else ()
    return HandModel(
        name=f"{model.name}_fixed",
        joints=tuple(joints),
        limits_lower=model.limits_lower[6:].copy(),
        limits_upper=model.limits_upper[6:].copy(),
        keypoints=keypoints,
        inertias=inertias,
        gravity=model.gravity,
    )


def _joint_kinematics(model, q):
    """Per-joint parent-relative rotation R_pi (B,n,3,3) and offset p_pi (B,n,3)."""
    B = q.shape[0]
    n = model.n_links
    Rp = np.empty((B, n, 3, 3))
    pp = np.empty((B, n, 3))
    for i, j in enumerate(model.joints):
        if j.jtype == REVOLUTE:
            Rax = axis_angle_to_matrix(j.axis[None, :] * q[:, i, None])
            Rp[:, i] = np.einsum("ij,bjk->bik", j.offset_rot, Rax)
            pp[:, i] = j.offset_pos
        else:  # prismatic
            Rp[:, i] = j.offset_rot
            pp[:, i] = j.offset_pos[None, :] + (j.offset_rot @ j.axis)[None, :] * q[:, i, None]
    return Rp, pp


def rnea(model, q, qd, qdd, gravity=None, mass_scale=1.0):
    """Inverse dynamics for a fixed-base model: torques (B, dof) or (dof,).

    gravity=None uses the model's field; pass zeros to isolate inertial terms.
    """
    _require_dynamic(model)
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = q[None] if single else q
    qd2 = np.asarray(qd, dtype=float)
    qdd2 = np.asarray(qdd, dtype=float)
    qd2 = qd2[None] if qd2.ndim == 1 else qd2
    qdd2 = qdd2[None] if qdd2.ndim == 1 else qdd2
    B, n = q2.shape
    if n != model.dof:
        raise ValidationError(f"expected {model.dof} joint values, got {n}")
    g = model.gravity if gravity is None else np.asarray(gravity, dtype=float)

    Rp, pp = _joint_kinematics(model, q2)
    w = np.empty((B, n, 3))  # angular velocity, link frame
    dw = np.empty((B, n, 3))  # angular acceleration
    a = np.empty((B, n, 3))  # linear acceleration of the frame origin (minus gravity)
    f = np.empty((B, n, 3))  # net force on the link, link frame
    t = np.empty((B, n, 3))  # net moment about the link origin

    a_base = np.broadcast_to(-g, (B, 3))
    zero3 = np.zeros((B, 3))
    for i, j in enumerate(model.joints):
        Ri = Rp[:, i]
        if j.parent >= 0:
            wp, dwp, ap = w[:, j.parent], dw[:, j.parent], a[:, j.parent]
        else:
            wp, dwp, ap = zero3, zero3, a_base
        # parent-frame acceleration of this joint's origin, then into link frame
        acc_origin = ap + np.cross(dwp, pp[:, i]) + np.cross(wp, np.cross(wp, pp[:, i]))
        RiT = np.swapaxes(Ri, 1, 2)
        w_in = np.einsum("bij,bj->bi", RiT, wp)
        dw_in = np.einsum("bij,bj->bi", RiT, dwp)
        a_in = np.einsum("bij,bj->bi", RiT, acc_origin)
        s = j.axis
        if j.jtype == REVOLUTE:
            w[:, i] = w_in + s[None, :] * qd2[:, i, None]
            dw[:, i] = dw_in + s[None, :] * qdd2[:, i, None] + np.cross(w_in, s[None, :] * qd2[:, i, None])
            a[:, i] = a_in
        else:
            w[:, i] = w_in
            dw[:, i] = dw_in
            a[:, i] = (
                a_in
                + s[None, :] * qdd2[:, i, None]
                + 2.0 * np.cross(w[:, i], s[None, :] * qd2[:, i, None])
            )
        li = model.inertias[i]
        m = li.mass * mass_scale
        c = li.com
        Ic = li.inertia * mass_scale
        acc_com = a[:, i] + np.cross(dw[:, i], c[None, :]) + np.cross(w[:, i], np.cross(w[:, i], c[None, :]))
        f[:, i] = m * acc_com
        Iw = np.einsum("ij,bj->bi", Ic, w[:, i])
        t[:, i] = np.einsum("ij,bj->bi", Ic, dw[:, i]) + np.cross(w[:, i], Iw) + np.cross(c[None, :], f[:, i])

    tau = np.empty((B, n))
    F = f.copy()
    N = t.copy()
    for i in range(n - 1, -1, -1):
        j = model.joints[i]
        if j.jtype == REVOLUTE:
            tau[:, i] = N[:, i] @ j.axis
        else:
            tau[:, i] = F[:, i] @ j.axis
        if j.parent >= 0:
            Fp = np.einsum("bij,bj->bi", Rp[:, i], F[:, i])
            Np = np.einsum("bij,bj->bi", Rp[:, i], N[:, i])
            F[:, j.parent] += Fp
            N[:, j.parent] += Np + np.cross(pp[:, i], Fp)
    return tau[0] if single else tau


def mass_matrix(model, q, mass_scale=1.0):
    """M(q) from unit-acceleration columns, (dof, dof) symmetric positive definite."""
    q = np.asarray(q, dtype=float)
    n = model.dof
    cols = rnea(
        model,
        np.broadcast_to(q, (n, n)).copy(),
        np.zeros((n, n)),
        np.eye(n),
        gravity=np.zeros(3),
        mass_scale=mass_scale,
    )
    return 0.5 * (cols + cols.T)


def bias_forces(model, q, qd, mass_scale=1.0):
    """Coriolis, centrifugal and gravity torques at zero acceleration."""
    return rnea(model, q, qd, np.zeros_like(np.asarray(q, float)), mass_scale=mass_scale)


def forward_dynamics(model, q, qd, tau, mass_scale=1.0):
    """qdd = M(q)^-1 (tau - bias)."""
    M = mass_matrix(model, q, mass_scale=mass_scale)
    b = bias_forces(model, q, qd, mass_scale=mass_scale)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValidationError("mass matrix is not positive definite")
    y = np.linalg.solve(L, np.asarray(tau, float) - b)
    return np.linalg.solve(L.T, y)


def forward_dynamics_batch(model, q, qd, tau, mass_scale=1.0):
    """qdd (B, dof) for B independent states; two rnea calls total.

    Mass matrices for every row come from one rnea call over B*dof
    unit-acceleration configs, bias terms from a second batched call,
    then a batched Cholesky solve.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    tau = np.asarray(tau, dtype=float)
    B, n = q.shape
    cols = rnea(
        model,
        np.repeat(q, n, axis=0),
        np.zeros((B * n, n)),
        np.tile(np.eye(n), (B, 1)),
        gravity=np.zeros(3),
        mass_scale=mass_scale,
    ).reshape(B, n, n)
    M = 0.5 * (cols + np.swapaxes(cols, 1, 2))
    b = rnea(model, q, qd, np.zeros_like(q), mass_scale=mass_scale)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValidationError("mass matrix is not positive definite")
    y = np.linalg.solve(L, (tau - b)[..., None])
    return np.linalg.solve(np.swapaxes(L, 1, 2), y)[..., 0]


# ------------------------------------------------------------- controllers


@dataclass
class PdGains:
    """Per-DoF diagonal gains; scalars broadcast. kv defaults to critical
    damping 2*sqrt(kp)."""

    kp: float | np.ndarray = 50.0
    kv: float | np.ndarray | None = None

    def resolved(self):
        kp = np.asarray(self.kp, dtype=float)
        kv = 2.0 * np.sqrt(kp) if self.kv is None else np.asarray(self.kv, dtype=float)
        if np.any(kp <= 0.0) or np.any(kv <= 0.0):
            raise ValidationError("PD gains must be strictly positive")
        return kp, kv


def inertia_scaled_gains(model, omega=10.0, zeta=1.0, mass_scale=1.0):
    """Uniform diagonal gains scaled by the softest inertia mode:
    kp = omega^2 lambda_min(M), kv = 2 zeta omega lambda_min(M) at the
    limit midpoint.

    Under the frame_skip control hold the discrete velocity loop needs
    kv * hold / m_eff < 2 in every inertia eigenmode; scaling by the
    smallest eigenvalue pins the worst ratio at 2*zeta*omega*hold (0.4 at
    the defaults) regardless of how strongly the joints couple, so one
    policy is hold-stable on both heavy arms and featherweight fingers.
    Stiff modes end up soft-tracked, which is the point of the comparison:
    feedback alone lags there, feedforward does not.
    """
    q_mid = 0.5 * (model.limits_lower + model.limits_upper)
    lam = float(np.linalg.eigvalsh(mass_matrix(model, q_mid, mass_scale=mass_scale))[0])
    kp = omega**2 * lam * np.ones(model.dof)
    return PdGains(kp=kp, kv=2.0 * zeta * omega * lam * np.ones(model.dof))


@dataclass
class ReferenceTrajectory:
    """Smooth tracking target built from waypoints with a clamped cubic spline."""

    spline: CubicSpline
    duration: float

    @classmethod
    def from_waypoints(cls, times, waypoints):
        times = np.asarray(times, dtype=float)
        waypoints = np.asarray(waypoints, dtype=float)
        sp = CubicSpline(times, waypoints, bc_type="clamped")
        return cls(spline=sp, duration=float(times[-1]))

    def __call__(self, t):
        t = np.clip(t, 0.0, self.duration)
        return self.spline(t), self.spline(t, 1), self.spline(t, 2)


def trajectory_reference(model, trajectory):
    """Tracking target from a stored trajectory: cubic-spline differentiation
    supplies the velocity/acceleration targets that sampled paths lack."""
    frames = trajectory.frames
    if trajectory.layout == "pose":
        from .kinematics import pose_to_actuator

        frames = np.stack([pose_to_actuator(model, f) for f in frames])
    return ReferenceTrajectory.from_waypoints(trajectory.times, frames)


def plain_pd(gains, q, qd, q_d):
    """tau = -Kp (q - q_d) - Kv qdot. No model knowledge."""
    kp, kv = gains.resolved()
    return -kp * (np.asarray(q, float) - np.asarray(q_d, float)) - kv * np.asarray(qd, float)


def augmented_pd(model, gains, q, qd, target, mass_scale=1.0):
    """Inverse-dynamics feedforward plus PD feedback on the tracking error:
    tau = rnea(q, qd, qdd_d) - Kp (q - q_d) - Kv (qd - qd_d).
    target is the (q_d, qd_d, qdd_d) triple."""
    q_d, qd_d, qdd_d = target
    kp, kv = gains.resolved()
    ff = rnea(model, q, qd, qdd_d, mass_scale=mass_scale)
    return ff - kp * (np.asarray(q, float) - np.asarray(q_d, float)) - kv * (
        np.asarray(qd, float) - np.asarray(qd_d, float)
    )


def plain_pd_controller(reference, gains=None):
    g = gains or PdGains()

    def control(t, q, qd):
        q_d, _, _ = reference(t)
        return plain_pd(g, q, qd, q_d)

    return control


def augmented_pd_controller(model, reference, gains=None, mass_scale=1.0):
    g = gains or PdGains()

    def control(t, q, qd):
        return augmented_pd(model, g, q, qd, reference(t), mass_scale=mass_scale)

    return control


@dataclass
class RolloutResult:
    times: np.ndarray  # (F,) control-frame times
    positions: np.ndarray  # (F, dof) state after each control frame
    velocities: np.ndarray  # (F, dof)
    torques: np.ndarray  # (F, dof)
    errors: np.ndarray = None  # (F, dof) q - q_d when a reference was given

    def to_trajectory(self, meta=None):
        """Executed state history in the shared trajectory container."""
        return Trajectory(
            frames=self.positions,
            times=self.times,
            layout="actuator",
            meta=meta or {},
            executed=True,
        )


def rollout(
    model,
    q0,
    qd0,
    controller,
    frames,
    dt=0.004,
    frame_skip=5,
    mass_scale=1.0,
    blowup=1e6,
    reference=None,
):
    """Semi-implicit Euler with the control held for frame_skip substeps.
    Passing the reference records the per-frame tracking error alongside
    q, qdot and tau."""
    q = np.asarray(q0, dtype=float).copy()
    qd = np.asarray(qd0, dtype=float).copy()
    F = int(frames)
    out_t = np.empty(F)
    out_q = np.empty((F, model.dof))
    out_qd = np.empty((F, model.dof))
    out_tau = np.empty((F, model.dof))
    out_err = np.empty((F, model.dof)) if reference is not None else None
    for k in range(F):
        t = k * dt * frame_skip
        tau = np.asarray(controller(t, q, qd), dtype=float)
        for _ in range(frame_skip):
            qdd = forward_dynamics(model, q, qd, tau, mass_scale=mass_scale)
            qd = qd + dt * qdd
            q = q + dt * qd
        if not np.all(np.isfinite(q)) or np.abs(q).max() > blowup or np.abs(qd).max() > blowup:
            raise RolloutDiverged(
                f"state blew up at frame {k}", history=out_q[: k + 1]
            )
        out_t[k] = t + dt * frame_skip
        out_q[k] = q
        out_qd[k] = qd
        out_tau[k] = tau
        if reference is not None:
            out_err[k] = q - reference(out_t[k])[0]
    return RolloutResult(out_t, out_q, out_qd, out_tau, out_err)


def tracking_rmse(result, reference):
    """Root-mean-square position error of a rollout against its reference."""
    err = []
    for t, q in zip(result.times, result.positions):
        q_d, _, _ = reference(t)
        err.append(q - q_d)
    err = np.asarray(err)
    return float(np.sqrt(np.mean(err**2)))


def tracking_benchmark(
    model,
    speeds=(0.25, 0.5, 1.0),
    mass_scales=(1.0, 2.0, 3.0),
    gains=None,
    duration=1.0,
    amplitude=0.5,
    dt=0.004,
    frame_skip=5,
):
    """Track a smooth multi-joint reference under a speed x mass grid and
    score plain vs augmented PD per cell.

    Both controllers share one gain set; by default inertia-scaled gains so
    the same policy is stable on heavy arms and featherweight fingers. The
    augmented controller's feedforward uses the cell's (exact) mass scale;
    the grid probes how much model knowledge buys at each speed and load.
    Returns a list of cell dicts; a diverged rollout scores inf.
    """
    _require_dynamic(model)
    g = gains or inertia_scaled_gains(model)
    cells = []
    q0 = 0.5 * (model.limits_lower + model.limits_upper)
    phases = np.cos(0.7 * np.arange(model.dof))
    for speed in speeds:
        T = duration / speed
        wp_times = np.linspace(0.0, T, 9)
        wave = np.sin(np.pi * wp_times / T)[:, None] * phases[None, :]
        waypoints = q0[None, :] + amplitude * wave
        ref = ReferenceTrajectory.from_waypoints(wp_times, waypoints)
        frames = int(np.ceil(T / (dt * frame_skip)))

        def run(controller, ms):
            try:
                res = rollout(
                    model, q0, np.zeros(model.dof), controller,
                    frames, dt=dt, frame_skip=frame_skip, mass_scale=ms,
                )
            except RolloutDiverged:
                return float("inf")
            return tracking_rmse(res, ref)

        for ms in mass_scales:
            cells.append(
                {
                    "speed": speed,
                    "mass_scale": ms,
                    "rmse_plain": run(plain_pd_controller(ref, g), ms),
                    "rmse_augmented": run(
                        augmented_pd_controller(model, ref, g, mass_scale=ms), ms
                    ),
                }
            )
    return cells
