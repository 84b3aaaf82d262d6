"""Rotation representations and their derivatives.

Conventions:
  * rot6d: 6-vector (a1, a2), orthonormalized by Gram-Schmidt with a1 as the
    anchor column. Columns 1..3 of the resulting matrix are (b1, b2, b1 x b2).
  * axis-angle: 3-vector v with angle ||v|| about v/||v|| (rotation vector).

All functions accept a single item or a leading batch axis and are pure.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateRotation

# below this sine-of-angle between the rot6d columns we refuse to orthonormalize
_PARALLEL_TOL = 1e-8
# switch to Taylor series for trig ratios below this angle
_SMALL_ANGLE = 1e-7


def _check_batched(r, width, name):
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    if single:
        r = r[None]
    if r.ndim != 2 or r.shape[1] != width:
        raise DegenerateRotation(f"{name} must have width {width}, got shape {r.shape}")
    return r, single


def rot6d_to_matrix(r):
    """Gram-Schmidt a 6-vector (or batch) into a proper rotation matrix."""
    r, single = _check_batched(r, 6, "rot6d")
    a1, a2 = r[:, :3], r[:, 3:]
    n1 = np.linalg.norm(a1, axis=1)
    if np.any(n1 < 1e-12):
        raise DegenerateRotation("rot6d first column has (near) zero norm")
    b1 = a1 / n1[:, None]
    proj = np.sum(b1 * a2, axis=1)
    u2 = a2 - proj[:, None] * b1
    n2 = np.linalg.norm(u2, axis=1)
    na2 = np.linalg.norm(a2, axis=1)
    # sin(angle between columns) = ||u2|| / ||a2||
    if np.any(na2 < 1e-12) or np.any(n2 < _PARALLEL_TOL * na2):
        raise DegenerateRotation("rot6d columns are (near) parallel")
    b2 = u2 / n2[:, None]
    b3 = np.cross(b1, b2)
    R = np.stack([b1, b2, b3], axis=2)
    return R[0] if single else R


def matrix_to_rot6d(R):
    """First two columns of a rotation matrix, flattened to a 6-vector."""
    R = np.asarray(R, dtype=float)
    single = R.ndim == 2
    if single:
        R = R[None]
    out = np.concatenate([R[:, :, 0], R[:, :, 1]], axis=1)
    return out[0] if single else out


def rot6d_jacobian(r):
    """d(rotation matrix)/d(rot6d): (3, 3, 6) per item, batched as (B, 3, 3, 6).

    Chain rule through the Gram-Schmidt construction of rot6d_to_matrix.
    """
    r, single = _check_batched(r, 6, "rot6d")
    B = r.shape[0]
    a1, a2 = r[:, :3], r[:, 3:]
    n1 = np.linalg.norm(a1, axis=1)
    if np.any(n1 < 1e-12):
        raise DegenerateRotation("rot6d first column has (near) zero norm")
    b1 = a1 / n1[:, None]
    proj = np.sum(b1 * a2, axis=1)
    u2 = a2 - proj[:, None] * b1
    n2 = np.linalg.norm(u2, axis=1)
    na2 = np.linalg.norm(a2, axis=1)
    if np.any(na2 < 1e-12) or np.any(n2 < _PARALLEL_TOL * na2):
        raise DegenerateRotation("rot6d columns are (near) parallel")
    b2 = u2 / n2[:, None]
    b3 = np.cross(b1, b2)

    eye = np.broadcast_to(np.eye(3), (B, 3, 3))
    # d(x/||x||)/dx = (I - b b^T) / ||x||
    D1 = (eye - b1[:, :, None] * b1[:, None, :]) / n1[:, None, None]
    D2 = (eye - b2[:, :, None] * b2[:, None, :]) / n2[:, None, None]

    db1 = np.zeros((B, 3, 6))
    db1[:, :, :3] = D1
    # u2 = a2 - (b1.a2) b1; d(b1.a2)/da1 = D1 a2 (D1 symmetric)
    dproj_da1 = np.einsum("bij,bj->bi", D1, a2)
    du2 = np.zeros((B, 3, 6))
    du2[:, :, :3] = -(b1[:, :, None] * dproj_da1[:, None, :] + proj[:, None, None] * D1)
    du2[:, :, 3:] = eye - b1[:, :, None] * b1[:, None, :]
    db2 = np.einsum("bij,bjk->bik", D2, du2)

    def skew(v):
        S = np.zeros((B, 3, 3))
        S[:, 0, 1], S[:, 0, 2] = -v[:, 2], v[:, 1]
        S[:, 1, 0], S[:, 1, 2] = v[:, 2], -v[:, 0]
        S[:, 2, 0], S[:, 2, 1] = -v[:, 1], v[:, 0]
        return S

    # b3 = b1 x b2 => db3 = -[b2]x db1 + [b1]x db2
    db3 = -np.einsum("bij,bjk->bik", skew(b2), db1) + np.einsum(
        "bij,bjk->bik", skew(b1), db2
    )
    J = np.stack([db1, db2, db3], axis=2)  # (B, 3, col, 6)
    return J[0] if single else J


def skew_matrix(v):
    """Cross-product matrix [v]x for a 3-vector or batch."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    if single:
        v = v[None]
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1], S[..., 0, 2] = -v[..., 2], v[..., 1]
    S[..., 1, 0], S[..., 1, 2] = v[..., 2], -v[..., 0]
    S[..., 2, 0], S[..., 2, 1] = -v[..., 1], v[..., 0]
    return S[0] if single else S


def axis_angle_to_matrix(v):
    """Rodrigues formula for a rotation vector or batch of them."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    if single:
        v = v[None]
    theta = np.linalg.norm(v, axis=1)
    S = skew_matrix(v)
    # sin(t)/t and (1-cos(t))/t^2 with series fallbacks near zero
    small = theta < _SMALL_ANGLE
    t2 = theta * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.where(small, 1.0 - t2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        c2 = np.where(
            small, 0.5 - t2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, t2)
        )
    R = (
        np.broadcast_to(np.eye(3), S.shape)
        + c1[:, None, None] * S
        + c2[:, None, None] * np.einsum("bij,bjk->bik", S, S)
    )
    return R[0] if single else R


def matrix_to_axis_angle(R):
    """Log map of a rotation matrix or batch, to a rotation vector in [0, pi]."""
    R = np.asarray(R, dtype=float)
    single = R.ndim == 2
    if single:
        R = R[None]
    tr = np.trace(R, axis1=1, axis2=2)
    cos_t = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    # antisymmetric part gives axis * sin(theta)
    w = 0.5 * np.stack(
        [R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]],
        axis=1,
    )
    out = np.zeros_like(w)
    small = theta < _SMALL_ANGLE
    near_pi = theta > np.pi - 1e-5
    mid = ~small & ~near_pi
    if np.any(mid):
        out[mid] = w[mid] * (theta[mid] / np.sin(theta[mid]))[:, None]
    if np.any(small):
        # w approx axis * theta already; correct to first order
        out[small] = w[small] * (1.0 + theta[small] ** 2 / 6.0)[:, None]
    if np.any(near_pi):
        # axis from the symmetric part: R + I = 2(axis axis^T cos^2 + ...) near pi
        idx = np.nonzero(near_pi)[0]
        for i in idx:
            A = (R[i] + np.eye(3)) / 2.0
            d = np.diagonal(A).copy()
            k = int(np.argmax(d))
            axis = A[:, k] / np.sqrt(max(d[k], 1e-16))
            axis = axis / np.linalg.norm(axis)
            # fix sign with the antisymmetric part when it is not fully degenerate
            if np.dot(axis, w[i]) < 0:
                axis = -axis
            out[i] = axis * theta[i]
    return out[0] if single else out


def axis_angle_right_jacobian(v):
    """Right Jacobian J_r of SO(3): R(v + d) ~ R(v) Exp(J_r(v) d)."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    if single:
        v = v[None]
    theta = np.linalg.norm(v, axis=1)
    S = skew_matrix(v)
    small = theta < _SMALL_ANGLE
    t2 = theta * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, t2))
        c2 = np.where(
            small,
            1.0 / 6.0 - t2 / 120.0,
            (theta - np.sin(theta)) / np.where(small, 1.0, t2 * theta),
        )
    J = (
        np.broadcast_to(np.eye(3), S.shape)
        - c1[:, None, None] * S
        + c2[:, None, None] * np.einsum("bij,bjk->bik", S, S)
    )
    return J[0] if single else J


def axis_angle_to_rot6d(v):
    """Rotation vector -> 6D representation (through the matrix form)."""
    return matrix_to_rot6d(axis_angle_to_matrix(v))


def rot6d_to_axis_angle(r):
    """6D representation -> rotation vector (through the matrix form)."""
    return matrix_to_axis_angle(rot6d_to_matrix(r))
