"""Synthetic grasp demonstrations on primitive objects.

Each demo places a sphere, box or cylinder at a sampled spot in front of
the claw, approaches it from a sampled yaw angle, and closes each finger
until its tip sits a small gap off the surface (or at its closest approach
when the geometry cannot reach the gap). Twenty frames run on the reversed
time grid 1 -> 0 with smoothstep profiles, so the finished grasp is the
t=0 frame. Object clouds are 2000 area-weighted surface samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpec, ValidationError
from .formats import Demonstration, Trajectory
from .harness import LiftTask
from .kinematics import fk_actuator


@dataclass
class Sphere:
    center: np.ndarray
    radius: float

    def sdf(self, p):
        p = np.asarray(p, dtype=float)
        return np.linalg.norm(p - self.center, axis=-1) - self.radius

    def sample_surface(self, n, rng):
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.center + self.radius * v

    @property
    def vertical_halfspan(self):
        return self.radius


@dataclass
class Box:
    """Axis-aligned in its own frame, rotated by `yaw` about world z."""

    center: np.ndarray
    half_extents: np.ndarray  # (3,)
    yaw: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_extents = np.asarray(self.half_extents, dtype=float)

    def _to_local(self, p):
        R = _yaw_matrix(self.yaw)
        return (np.asarray(p, dtype=float) - self.center) @ R  # = R^T rows

    def sdf(self, p):
        q = np.abs(self._to_local(p)) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def sample_surface(self, n, rng):
        h = self.half_extents
        # face areas: +-x, +-y, +-z pairs
        areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        u = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        for f in range(6):
            m = face == f
            axis = f // 2
            sign = 1.0 if f % 2 == 0 else -1.0
            others = [a for a in range(3) if a != axis]
            pts[m, axis] = sign * h[axis]
            pts[m, others[0]] = u[m, 0] * h[others[0]]
            pts[m, others[1]] = u[m, 1] * h[others[1]]
        return self.center + pts @ _yaw_matrix(self.yaw).T

    @property
    def vertical_halfspan(self):
        return float(self.half_extents[2])


@dataclass
class Cylinder:
    """Capped cylinder lying across the grasp: its axis is horizontal,
    rotated by `yaw` about world z (yaw 0 puts the axis along world y)."""

    center: np.ndarray
    radius: float
    half_length: float
    yaw: float = 0.0

    def _to_local(self, p):
        R = _yaw_matrix(self.yaw)
        return (np.asarray(p, dtype=float) - self.center) @ R

    def sdf(self, p):
        rel = self._to_local(p)
        d_rad = np.hypot(rel[..., 0], rel[..., 2]) - self.radius
        d_ax = np.abs(rel[..., 1]) - self.half_length
        d = np.stack([d_rad, d_ax], axis=-1)
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(np.max(d, axis=-1), 0.0)
        return outside + inside

    def sample_surface(self, n, rng):
        lateral = 2.0 * np.pi * self.radius * 2.0 * self.half_length
        caps = 2.0 * np.pi * self.radius**2
        on_cap = rng.uniform(size=n) < caps / (lateral + caps)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        pts = np.empty((n, 3))
        lat = ~on_cap
        pts[lat, 0] = self.radius * np.cos(phi[lat])
        pts[lat, 2] = self.radius * np.sin(phi[lat])
        pts[lat, 1] = rng.uniform(-self.half_length, self.half_length, size=int(lat.sum()))
        rr = self.radius * np.sqrt(rng.uniform(0.0, 1.0, size=int(on_cap.sum())))
        pts[on_cap, 0] = rr * np.cos(phi[on_cap])
        pts[on_cap, 2] = rr * np.sin(phi[on_cap])
        pts[on_cap, 1] = np.where(rng.uniform(size=int(on_cap.sum())) < 0.5, -1.0, 1.0) * self.half_length
        return self.center + pts @ _yaw_matrix(self.yaw).T

    @property
    def vertical_halfspan(self):
        return self.radius


def sample_mesh_points(primitive, n=2000, seed=0):
    """Area-weighted surface cloud of a primitive, deterministic per seed."""
    if n < 1:
        raise ValidationError("need at least one surface point")
    return primitive.sample_surface(n, np.random.default_rng(seed))


def _yaw_matrix(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


@dataclass
class SyntheticDemoSpec:
    n_demos: int = 8
    n_points: int = 2000  # area-weighted surface samples per object
    frames: int = 20
    noise: float = 0.0  # joint-space jitter std on interior frames
    seed: int = 0
    shapes: tuple = ("sphere", "box")
    sphere_radius: tuple = (0.026, 0.031)
    box_half_extents: tuple = ((0.024, 0.034), (0.024, 0.034), (0.022, 0.028))
    cylinder_radius: tuple = (0.024, 0.030)
    cylinder_half_length: float = 0.04
    # object center along the palm axis; the fingertip arcs descend around
    # x ~ 0.10, so centering there puts contacts on top/bottom, opposed
    center_forward: tuple = (0.100, 0.107)
    contact_gap: float = 0.0025  # tip-to-surface distance aimed for at t=0
    approach_distance: float = 0.10
    approach_rise: float = 0.03
    open_angle: float = 0.05
    yaw_jitter: float = 0.25

    def __post_init__(self):
        if self.frames < 4:
            raise ValidationError("demo trajectories need at least 4 frames")
        if self.noise < 0.0:
            raise ValidationError("noise level must be nonnegative")


@dataclass
class SyntheticScene:
    demo: Demonstration
    shape: object  # Sphere, Box or Cylinder, in world coordinates
    closure: np.ndarray  # (n_fingers,) final curl angles

    def task(self, n_points=4096, seed=0, **kwargs):
        """Dense, reproducible evaluation cloud; the demo cloud stays the
        sparse training view."""
        return LiftTask(cloud=sample_mesh_points(self.shape, n_points, seed), **kwargs)


def _finger_groups(hand):
    """Finger joint column groups (actuator layout) paired with tip keypoints."""
    groups = []
    tips = hand.fingertip_indices
    n_fingers = len(tips)
    per = (hand.dof - 6) // n_fingers
    for f in range(n_fingers):
        cols = 6 + per * f + np.arange(per)
        groups.append((cols, tips[f]))
    return groups


def _tip_distance(hand, base_q, cols, tip, theta, shape):
    q = base_q.copy()
    q[cols] = theta
    return float(shape.sdf(fk_actuator(hand, q)[tip]))


def claw_aperture(hand, base_q):
    """Vertical spread of the fingertips at the open pose: the largest
    object height the claw can accept."""
    base = base_q.copy()
    tips_z = fk_actuator(hand, base)[list(hand.fingertip_indices), 2]
    return float(tips_z.max() - tips_z.min())


def solve_closure(hand, base_q, shape, gap, n_scan=160):
    """Per-finger uniform curl angles: bisect to `gap` off the surface, or
    settle at the closest approach when the gap is unreachable."""
    lo_all = hand.limits_lower
    hi_all = hand.limits_upper
    angles = []
    for cols, tip in _finger_groups(hand):
        lo = float(lo_all[cols].max())
        hi = float(hi_all[cols].min())
        grid = np.linspace(lo, hi, n_scan)
        dists = np.array([_tip_distance(hand, base_q, cols, tip, th, shape) for th in grid])
        k = int(np.argmin(dists))
        if dists[k] > gap:
            angles.append(grid[k])
            continue
        # distance falls below gap somewhere before the minimum; bisect there
        a, b = lo, grid[k]
        for _ in range(60):
            mid = 0.5 * (a + b)
            if _tip_distance(hand, base_q, cols, tip, mid, shape) > gap:
                a = mid
            else:
                b = mid
        angles.append(0.5 * (a + b))
    return np.asarray(angles)


def _make_shape(kind, spec, psi, rng):
    if kind == "sphere":
        return Sphere(center=np.zeros(3), radius=float(rng.uniform(*spec.sphere_radius)))
    if kind == "box":
        h = np.array([float(rng.uniform(*pair)) for pair in spec.box_half_extents])
        return Box(center=np.zeros(3), half_extents=h, yaw=psi)
    if kind == "cylinder":
        return Cylinder(
            center=np.zeros(3),
            radius=float(rng.uniform(*spec.cylinder_radius)),
            half_length=spec.cylinder_half_length,
            yaw=psi,  # axis across the claw, whatever the approach
        )
    raise ValidationError(f"unknown shape kind {kind!r}")


def synthesize_scene(hand, rng, spec=None, yaw=None, shape_kind=None):
    """One scripted grasp; returns a SyntheticScene."""
    spec = spec or SyntheticDemoSpec()
    kind = shape_kind or spec.shapes[rng.integers(len(spec.shapes))]
    psi = float(rng.uniform(-np.pi, np.pi)) if yaw is None else float(yaw)
    R = _yaw_matrix(psi)
    shape = _make_shape(kind, spec, psi, rng)
    cx = float(rng.uniform(*spec.center_forward))

    # final root pose: palm axis through the object center
    t_final = -R @ np.array([cx, 0.0, 0.0])
    aa = np.array([0.0, 0.0, psi])
    base_q = np.zeros(hand.dof)
    base_q[:3] = t_final
    base_q[3:6] = aa
    base_q[6:] = spec.open_angle

    aperture = claw_aperture(hand, base_q)
    if 2.0 * shape.vertical_halfspan >= aperture:
        raise InfeasibleSpec(
            f"object height {2.0 * shape.vertical_halfspan:.3f} m does not fit "
            f"the claw aperture {aperture:.3f} m"
        )

    closure = solve_closure(hand, base_q, shape, spec.contact_gap)

    t_start = t_final + R @ np.array([-spec.approach_distance, 0.0, spec.approach_rise])
    T = spec.frames
    times = np.linspace(1.0, 0.0, T)
    frames = np.empty((T, hand.dof))
    groups = _finger_groups(hand)
    for i, t in enumerate(times):
        u = _smoothstep(1.0 - t)
        q = base_q.copy()
        q[:3] = t_start + u * (t_final - t_start)
        # fingers trail the approach so they wrap once the palm is close
        uf = _smoothstep(np.clip((1.0 - t - 0.3) / 0.7, 0.0, 1.0))
        for (cols, _), th in zip(groups, closure):
            q[cols] = spec.open_angle + uf * (th - spec.open_angle)
        frames[i] = q
    if spec.noise > 0.0:
        # endpoints stay exact: the grasp frame carries the contact guarantee
        frames[1:-1] += rng.normal(0.0, spec.noise, size=frames[1:-1].shape)
        frames[1:-1] = np.clip(frames[1:-1], hand.limits_lower, hand.limits_upper)
    cloud = shape.sample_surface(spec.n_points, rng)

    tips = fk_actuator(hand, frames[-1])[list(hand.fingertip_indices)]
    d = np.sqrt(((tips[:, None, :] - cloud[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
    if (d <= 0.005).sum() < 3:
        raise InfeasibleSpec(
            f"final grasp reaches only {(d <= 0.005).sum()} fingertip contacts "
            f"within 5 mm (tip distances {np.round(d, 4).tolist()})"
        )

    name = f"{kind}_yaw{psi:+.2f}"
    demo = Demonstration(name=name, cloud=cloud, trajectory=Trajectory(frames, times))
    return SyntheticScene(demo=demo, shape=shape, closure=closure)


def generate_synthetic_demos(hand, spec=None, count=None, rng=None):
    """Evenly spread approach yaws over the circle; returns [SyntheticScene].

    count overrides spec.n_demos; count=0 is a valid no-op. Shapes alternate
    through spec.shapes so every kind appears.
    """
    spec = spec or SyntheticDemoSpec()
    n = spec.n_demos if count is None else int(count)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    scenes = []
    for d in range(n):
        yaw = -np.pi + (2.0 * np.pi * d) / n + float(rng.uniform(-spec.yaw_jitter, spec.yaw_jitter))
        yaw = (yaw + np.pi) % (2.0 * np.pi) - np.pi
        kind = spec.shapes[d % len(spec.shapes)]
        scenes.append(synthesize_scene(hand, rng, spec, yaw=yaw, shape_kind=kind))
    return scenes


def collision_checker(hand, shape, margin=0.001):
    """Configuration -> bool; true when any keypoint dips inside the margin
    shell around the object."""

    def in_collision(q_act):
        kps = fk_actuator(hand, q_act)
        return bool(np.min(shape.sdf(kps)) < margin)

    return in_collision
