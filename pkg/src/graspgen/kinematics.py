"""Kinematic hand model: joints, configurations, forward kinematics, Jacobians.

A model is a tree of joints. Link i is the child link of joint i; the root
link's joint may be a 6-DoF "free_root" (3 translations + a rotation) so one
FK path serves the whole hand. Two flat configuration layouts exist:

  * pose form: [translation(3), rot6d(6), angles(n1dof)]   width dof + 3
  * actuator form: [translation(3), axis_angle(3), angles]  width dof

For models without a free root both forms coincide with the plain angle
vector. All operations are pure; HandModel is immutable after construction
and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .rotations import (
    axis_angle_to_matrix,
    axis_angle_right_jacobian,
    axis_angle_to_rot6d,
    matrix_to_axis_angle,
    matrix_to_rot6d,
    rot6d_jacobian,
    rot6d_to_matrix,
    skew_matrix,
)

FREE_ROOT = "free_root"
REVOLUTE = "revolute"
PRISMATIC = "prismatic"


def _frozen(a, shape=None):
    a = np.array(a, dtype=float)
    if shape is not None and a.shape != shape:
        raise ValidationError(f"expected shape {shape}, got {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    jtype: str
    parent: int  # parent link index, -1 for the world
    offset_rot: np.ndarray  # (3,3) fixed rotation into the joint frame
    offset_pos: np.ndarray  # (3,) joint origin in the parent link frame
    axis: np.ndarray  # (3,) unit axis in the joint frame (ignored for free_root)

    @property
    def dof(self):
        return 6 if self.jtype == FREE_ROOT else 1


@dataclass(frozen=True, eq=False)
class Keypoint:
    link: int
    offset: np.ndarray  # (3,) in the link frame
    fingertip: bool = False


@dataclass(frozen=True, eq=False)
class LinkInertia:
    mass: float
    com: np.ndarray  # (3,) in the link frame
    inertia: np.ndarray  # (3,3) about the COM, link frame


@dataclass(frozen=True, eq=False)
class HandModel:
    name: str
    joints: tuple[Joint, ...]
    limits_lower: np.ndarray  # (dof,) actuator-form bounds
    limits_upper: np.ndarray
    keypoints: tuple[Keypoint, ...]
    inertias: tuple[LinkInertia, ...] = ()
    gravity: np.ndarray = field(default_factory=lambda: _frozen([0.0, 0.0, -9.81]))

    def __post_init__(self):
        validate_structure(self)

    @property
    def dof(self):
        return sum(j.dof for j in self.joints)

    @property
    def has_free_root(self):
        return self.joints[0].jtype == FREE_ROOT

    @property
    def pose_dim(self):
        return self.dof + (3 if self.has_free_root else 0)

    @property
    def n_links(self):
        return len(self.joints)

    @property
    def n_keypoints(self):
        return len(self.keypoints)

    @property
    def fingertip_indices(self):
        return tuple(i for i, k in enumerate(self.keypoints) if k.fingertip)

    def midpoint_pose(self):
        """Actuator-form midpoint of the joint limits (retargeting prior)."""
        return 0.5 * (self.limits_lower + self.limits_upper)

    def clip_actuator(self, q):
        return np.clip(q, self.limits_lower, self.limits_upper)

    def within_limits(self, q, atol=1e-9):
        q = np.asarray(q, dtype=float)
        return bool(
            np.all(q >= self.limits_lower - atol) and np.all(q <= self.limits_upper + atol)
        )


def validate_structure(model):
    """Tree shape, axis normalization and limit ordering. Raised on any model."""
    joints = model.joints
    if not joints:
        raise ValidationError("model has no joints")
    if joints[0].parent != -1:
        raise ValidationError("first joint must attach to the world (parent -1)")
    for i, j in enumerate(joints):
        if j.jtype not in (FREE_ROOT, REVOLUTE, PRISMATIC):
            raise ValidationError(f"joint '{j.name}': unknown type {j.jtype!r}")
        if j.jtype == FREE_ROOT and i != 0:
            raise ValidationError("free_root is only allowed as the first joint")
        if i > 0 and not (-1 <= j.parent < i):
            raise ValidationError(
                f"joint '{j.name}': parent {j.parent} breaks topological order"
            )
        if j.jtype != FREE_ROOT:
            n = np.linalg.norm(j.axis)
            if abs(n - 1.0) > 1e-6:
                raise ValidationError(f"joint '{j.name}': axis is not unit length")
    dof = sum(j.dof for j in joints)
    if model.limits_lower.shape != (dof,) or model.limits_upper.shape != (dof,):
        raise ValidationError(
            f"limits must be ({dof},), got {model.limits_lower.shape} / {model.limits_upper.shape}"
        )
    if np.any(model.limits_lower > model.limits_upper):
        raise ValidationError("limits_lower exceeds limits_upper somewhere")
    n_links = len(joints)
    for k in model.keypoints:
        if not (0 <= k.link < n_links):
            raise ValidationError(f"keypoint attached to missing link {k.link}")
    if model.inertias and len(model.inertias) != n_links:
        raise ValidationError("inertias must cover every link or be absent")


def validate_full_hand(model):
    """The extra invariants a loadable *hand* model must satisfy."""
    if model.dof != 22:
        raise ValidationError(f"hand model must have 22 DoF, got {model.dof}")
    if not model.has_free_root:
        raise ValidationError("hand model must start with a free_root joint")
    if model.n_keypoints != 15:
        raise ValidationError(f"hand model needs exactly 15 keypoints, got {model.n_keypoints}")
    if len(model.fingertip_indices) < 4:
        raise ValidationError("hand model needs at least 4 fingertip keypoints")


@dataclass
class JointConfig:
    """One hand pose: root translation + 6D root rotation + per-joint angles.

    as_pose()/as_actuator() give the two flat layouts; the actuator layout
    encodes the root rotation as an axis-angle 3-vector.
    """

    root_translation: np.ndarray
    root_rotation: np.ndarray  # rot6d
    angles: np.ndarray

    @classmethod
    def from_pose(cls, q, model=None):
        q = np.asarray(q, dtype=float)
        if model is not None and q.shape != (model.pose_dim,):
            raise DimensionMismatch("pose vector", (model.pose_dim,), q.shape)
        return cls(q[:3].copy(), q[3:9].copy(), q[9:].copy())

    @classmethod
    def from_actuator(cls, q, model=None):
        q = np.asarray(q, dtype=float)
        if model is not None and q.shape != (model.dof,):
            raise DimensionMismatch("actuator vector", (model.dof,), q.shape)
        return cls(q[:3].copy(), axis_angle_to_rot6d(q[3:6]), q[6:].copy())

    def as_pose(self):
        return np.concatenate([self.root_translation, self.root_rotation, self.angles])

    def as_actuator(self):
        aa = matrix_to_axis_angle(rot6d_to_matrix(self.root_rotation))
        return np.concatenate([self.root_translation, aa, self.angles])


def pose_to_actuator(q_pose):
    q_pose = np.asarray(q_pose, dtype=float)
    single = q_pose.ndim == 1
    if single:
        q_pose = q_pose[None]
    aa = matrix_to_axis_angle(rot6d_to_matrix(q_pose[:, 3:9]))
    out = np.concatenate([q_pose[:, :3], aa, q_pose[:, 9:]], axis=1)
    return out[0] if single else out


def actuator_to_pose(q_act):
    q_act = np.asarray(q_act, dtype=float)
    single = q_act.ndim == 1
    if single:
        q_act = q_act[None]
    r6 = matrix_to_rot6d(axis_angle_to_matrix(q_act[:, 3:6]))
    out = np.concatenate([q_act[:, :3], r6, q_act[:, 6:]], axis=1)
    return out[0] if single else out


class OpCounter:
    """Counts joint-frame compositions so tests can assert FK cost scaling."""

    def __init__(self):
        self.composes = 0


def _as_batch(model, q, width, what):
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    if single:
        q = q[None]
    if q.ndim != 2 or q.shape[1] != width:
        raise DimensionMismatch(what, (width,), q.shape[1:] or q.shape)
    return q, single


def link_frames(model, q_pose, counter=None):
    """World rotation (B, L, 3, 3) and origin (B, L, 3) of every link."""
    q, _ = _as_batch(model, q_pose, model.pose_dim, "pose vector")
    B = q.shape[0]
    L = model.n_links
    R = np.empty((B, L, 3, 3))
    p = np.empty((B, L, 3))
    col = 0
    for i, j in enumerate(model.joints):
        if j.jtype == FREE_ROOT:
            t = q[:, col : col + 3]
            R_j = rot6d_to_matrix(q[:, col + 3 : col + 9])
            R[:, i] = np.einsum("ij,bjk->bik", j.offset_rot, R_j)
            p[:, i] = j.offset_pos[None, :] + t
            col += 9
        else:
            if j.parent >= 0:
                Rp = R[:, j.parent]
                pp = p[:, j.parent]
            else:
                Rp = np.broadcast_to(np.eye(3), (B, 3, 3))
                pp = np.zeros((B, 3))
            qi = q[:, col]
            if j.jtype == REVOLUTE:
                R_axis = axis_angle_to_matrix(j.axis[None, :] * qi[:, None])
                R[:, i] = np.einsum("bij,jk,bkl->bil", Rp, j.offset_rot, R_axis)
                p[:, i] = pp + np.einsum("bij,j->bi", Rp, j.offset_pos)
            else:  # prismatic
                R[:, i] = np.einsum("bij,jk->bik", Rp, j.offset_rot)
                slide = j.offset_pos[None, :] + np.einsum(
                    "ij,j,b->bi", j.offset_rot, j.axis, qi
                )
                p[:, i] = pp + np.einsum("bij,bj->bi", Rp, slide)
            col += 1
    if counter is not None:
        counter.composes += B * L
    return R, p


def fk(model, q_pose, counter=None):
    """Keypoint world coordinates, (15, 3) for a single pose or (B, 15, 3).

    Deterministic; the same path serves every DoF layout (actuator callers
    go through actuator_to_pose first).
    """
    q, single = _as_batch(model, q_pose, model.pose_dim, "pose vector")
    R, p = link_frames(model, q, counter=counter)
    K = model.n_keypoints
    out = np.empty((q.shape[0], K, 3))
    for k, kp in enumerate(model.keypoints):
        out[:, k] = p[:, kp.link] + np.einsum("bij,j->bi", R[:, kp.link], kp.offset)
    return out[0] if single else out


def fk_actuator(model, q_act, counter=None):
    """FK from the actuator layout; exact alias of fk on the converted pose."""
    q, single = _as_batch(model, q_act, model.dof, "actuator vector")
    if not model.has_free_root:
        return fk(model, q[0] if single else q, counter=counter)
    pose = actuator_to_pose(q)
    return fk(model, pose[0] if single else pose, counter=counter)


def _chain_mask(model):
    """(n_keypoints, n_joints) bool: joint j moves keypoint k."""
    L = model.n_links
    anc = np.zeros((L, L), dtype=bool)
    for i, j in enumerate(model.joints):
        if j.parent >= 0:
            anc[i] = anc[j.parent]
        anc[i, i] = True
    mask = np.zeros((model.n_keypoints, L), dtype=bool)
    for k, kp in enumerate(model.keypoints):
        mask[k] = anc[kp.link]
    return mask


def _finger_jacobian_blocks(model, q_pose, R, p, kps):
    """Geometric Jacobian columns for the 1-DoF joints, (B, 3K, n1dof)."""
    B, K = kps.shape[0], kps.shape[1]
    one_dof = [i for i, j in enumerate(model.joints) if j.jtype != FREE_ROOT]
    J = np.zeros((B, 3 * K, len(one_dof)))
    mask = _chain_mask(model)
    for c, i in enumerate(one_dof):
        j = model.joints[i]
        axis_world = np.einsum(
            "bij,j->bi", R[:, j.parent] if j.parent >= 0 else np.broadcast_to(np.eye(3), (B, 3, 3)),
            j.offset_rot @ j.axis,
        )
        if j.jtype == REVOLUTE:
            origin = (
                p[:, j.parent] + np.einsum("bij,j->bi", R[:, j.parent], j.offset_pos)
                if j.parent >= 0
                else np.broadcast_to(j.offset_pos, (B, 3))
            )
            for k in range(K):
                if mask[k, i]:
                    J[:, 3 * k : 3 * k + 3, c] = np.cross(axis_world, kps[:, k] - origin)
        else:
            for k in range(K):
                if mask[k, i]:
                    J[:, 3 * k : 3 * k + 3, c] = axis_world
    return J


def fk_jacobian(model, q_pose):
    """d(keypoints)/d(pose form): (3K, pose_dim), batched as (B, 3K, pose_dim)."""
    q, single = _as_batch(model, q_pose, model.pose_dim, "pose vector")
    B = q.shape[0]
    K = model.n_keypoints
    R, p = link_frames(model, q)
    kps = np.empty((B, K, 3))
    for k, kp in enumerate(model.keypoints):
        kps[:, k] = p[:, kp.link] + np.einsum("bij,j->bi", R[:, kp.link], kp.offset)

    J = np.zeros((B, 3 * K, model.pose_dim))
    if model.has_free_root:
        root = model.joints[0]
        t = q[:, :3] + root.offset_pos[None, :]
        R_root = R[:, 0]
        # keypoint position: p = t + R_root x_local
        x_local = np.einsum("bji,bkj->bki", R_root, kps - t[:, None, :])
        dR = rot6d_jacobian(q[:, 3:9])  # (B, 3, 3, 6), of the raw rot6d
        dR = np.einsum("ij,bjkc->bikc", root.offset_rot, dR)
        for k in range(K):
            J[:, 3 * k : 3 * k + 3, 0:3] = np.eye(3)[None]
            J[:, 3 * k : 3 * k + 3, 3:9] = np.einsum("bijc,bj->bic", dR, x_local[:, k])
        J[:, :, 9:] = _finger_jacobian_blocks(model, q, R, p, kps)
    else:
        J[:, :, :] = _finger_jacobian_blocks(model, q, R, p, kps)
    return J[0] if single else J


def fk_jacobian_actuator(model, q_act):
    """d(keypoints)/d(actuator form): (3K, dof), batched as (B, 3K, dof)."""
    q, single = _as_batch(model, q_act, model.dof, "actuator vector")
    if not model.has_free_root:
        out = fk_jacobian(model, q)
        return out[0] if single else out
    B = q.shape[0]
    K = model.n_keypoints
    pose = actuator_to_pose(q)
    R, p = link_frames(model, pose)
    kps = np.empty((B, K, 3))
    for k, kp in enumerate(model.keypoints):
        kps[:, k] = p[:, kp.link] + np.einsum("bij,j->bi", R[:, kp.link], kp.offset)

    J = np.zeros((B, 3 * K, model.dof))
    root = model.joints[0]
    t = q[:, :3] + root.offset_pos[None, :]
    R_root = R[:, 0]
    x_local = np.einsum("bji,bkj->bki", R_root, kps - t[:, None, :])
    # p = t + R(v) x_local  =>  dp/dv = -R [x_local]x J_r(v)
    Jr = axis_angle_right_jacobian(q[:, 3:6])
    for k in range(K):
        J[:, 3 * k : 3 * k + 3, 0:3] = np.eye(3)[None]
        block = -np.einsum(
            "bij,bjk,bkl->bil", R_root, skew_matrix(x_local[:, k]), Jr
        )
        J[:, 3 * k : 3 * k + 3, 3:6] = block
    J[:, :, 6:] = _finger_jacobian_blocks(model, pose, R, p, kps)
    return J[0] if single else J
