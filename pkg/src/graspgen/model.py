"""Conditional grasp-trajectory model.

A point-cloud encoder and a hand-trajectory encoder feed a latent Gaussian;
the decoder maps (object feature, latent, time) to one hand pose, so a whole
trajectory is read out by sweeping the scalar time input over a grid. Time
runs backward from 1 to 0: t=0 is the finished grasp, which is also where
the contact penalty applies.

decode() evaluates the grid one time value per pass, so the pose for a given
t is bit-identical however dense the surrounding grid is.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import TrainingAborted, ValidationError
from .formats import Trajectory, rng_from_meta, rng_state_to_meta, save_checkpoint
from .kinematics import actuator_to_pose, fk, pose_to_actuator
from .nn import (
    AdamState,
    adam_state_arrays,
    adam_state_from_arrays,
    adam_step,
    mlp_apply,
    mlp_init,
    mlp_widths,
    pointnet_encode,
    zero_grads,
)


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 256
    point_feature_dim: int = 1024
    hand_feature_dim: int = 64
    frames_per_demo: int = 20
    actuator_dim: int = 22
    pose_dim: int = 25
    point_widths: tuple = (3, 64, 128, 1024)
    hand_widths: tuple = (22, 256, 256, 64)
    trunk_widths: tuple = (2304, 256, 256)
    decoder_widths: tuple = (1281, 512, 256, 25)
    logvar_limit: float = 20.0

    def __post_init__(self):
        if self.point_widths[-1] != self.point_feature_dim:
            raise ValidationError("point encoder output must match point_feature_dim")
        if self.hand_widths[0] != self.actuator_dim or self.hand_widths[-1] != self.hand_feature_dim:
            raise ValidationError("hand encoder widths must run actuator_dim -> hand_feature_dim")
        want = self.point_feature_dim + self.frames_per_demo * self.hand_feature_dim
        if self.trunk_widths[0] != want:
            raise ValidationError(f"trunk input must be {want}, got {self.trunk_widths[0]}")
        want_dec = self.point_feature_dim + self.latent_dim + 1
        if self.decoder_widths[0] != want_dec:
            raise ValidationError(f"decoder input must be {want_dec}, got {self.decoder_widths[0]}")
        if self.decoder_widths[-1] != self.pose_dim:
            raise ValidationError("decoder output must match pose_dim")


@dataclass
class LossWeights:
    pose: float = 1.0
    keypoint: float = 10.0
    kl: float = 1e-3
    contact: float = 50.0

    def __post_init__(self):
        if min(self.pose, self.keypoint, self.kl, self.contact) < 0.0:
            raise ValidationError("loss weights cannot be negative")


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 32
    lr: float = 5e-4
    lr_halflife: int = 500  # lr is halved every this many epochs
    frames_per_demo: int = 20  # demos of any length are resampled to this
    points_per_cloud: int = 2000  # larger clouds are subsampled to this
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 0  # 0 = only on demand
    log_every: int = 100

    def __post_init__(self):
        if self.frames_per_demo < 2:
            raise ValidationError("frames_per_demo must be at least 2")
        if self.points_per_cloud < 1:
            raise ValidationError("points_per_cloud must be at least 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")


def init_params(rng, config=None):
    cfg = config or ModelConfig()
    params = {}
    mlp_init(rng, cfg.point_widths, "point", params)
    mlp_init(rng, cfg.hand_widths, "hand", params)
    mlp_init(rng, cfg.trunk_widths, "trunk", params)
    mlp_init(rng, (cfg.trunk_widths[-1], cfg.latent_dim), "mu", params)
    mlp_init(rng, (cfg.trunk_widths[-1], cfg.latent_dim), "logvar", params)
    mlp_init(rng, cfg.decoder_widths, "decoder", params)
    return params


def architecture(params):
    """Layer widths read back from the stored weight shapes."""
    return {
        "point_encoder": mlp_widths(params, "point"),
        "hand_encoder": mlp_widths(params, "hand"),
        "trunk": mlp_widths(params, "trunk"),
        "mean_head": mlp_widths(params, "mu"),
        "logvar_head": mlp_widths(params, "logvar"),
        "decoder": mlp_widths(params, "decoder"),
    }


def count_parameters(params):
    return int(sum(p.data.size for p in params.values()))


def encode_points(params, clouds):
    """(B, N, 3) object clouds -> (B, F) pooled features."""
    return pointnet_encode(params, "point", ad.as_tensor(clouds))


def encode(params, cfg, point_feat, frames):
    """Posterior over the latent given the object and a demo trajectory.

    frames: (B, T, actuator_dim). Returns (mu, logvar) with logvar clamped
    to +-logvar_limit.
    """
    frames = ad.as_tensor(frames)
    B, T, A = frames.shape
    x = ad.reshape(frames, (B * T, A))
    x = mlp_apply(params, "hand", x, final_relu=True)
    x = ad.reshape(x, (B, T * x.shape[-1]))
    x = ad.concat([point_feat, x], axis=1)
    x = mlp_apply(params, "trunk", x, final_relu=True)
    mu = mlp_apply(params, "mu", x)
    logvar = ad.clip(mlp_apply(params, "logvar", x), -cfg.logvar_limit, cfg.logvar_limit)
    return mu, logvar


def reparameterize(mu, logvar, eps):
    """z = mu + exp(logvar / 2) * eps with eps supplied by the caller."""
    return mu + ad.mul(ad.exp(ad.mul(logvar, 0.5)), ad.as_tensor(eps))


def kl_divergence(mu, logvar):
    """Mean over the batch of KL(N(mu, diag exp(logvar)) || N(0, I))."""
    term = ad.square(mu) + ad.exp(logvar) - logvar + (-1.0)
    per_item = ad.sum_along(ad.mul(term, 0.5), axis=1)
    return ad.mean_all(per_item)


def decode(params, cfg, point_feat, z, times):
    """Poses over a time grid: (B, len(times), pose_dim).

    One pass per time value; the result for a given t never depends on the
    rest of the grid.
    """
    point_feat = ad.as_tensor(point_feat)
    z = ad.as_tensor(z)
    B = z.shape[0]
    times = np.asarray(times, dtype=float)
    cols = []
    for t in times:
        t_col = Tensor(np.full((B, 1), float(t)))
        x = ad.concat([point_feat, z, t_col], axis=1)
        y = mlp_apply(params, "decoder", x)
        cols.append(ad.expand_dims(y, 1))
    return ad.concat(cols, axis=1) if len(cols) > 1 else cols[0]


def decode_derivatives(params, cfg, point_feat, z, times):
    """Pose and its time derivative on the grid, both (B, Tg, pose_dim).

    Forward-mode pass on plain arrays: only the scalar time input varies, so
    the tangent is one column pushed through the decoder stack.
    """
    pf = point_feat.data if isinstance(point_feat, Tensor) else np.asarray(point_feat, float)
    zz = z.data if isinstance(z, Tensor) else np.asarray(z, float)
    B = zz.shape[0]
    times = np.asarray(times, dtype=float)
    n = 0
    while f"decoder.W{n}" in params:
        n += 1
    poses = np.empty((B, times.size, cfg.pose_dim))
    vels = np.empty((B, times.size, cfg.pose_dim))
    for k, t in enumerate(times):
        x = np.concatenate([pf, zz, np.full((B, 1), float(t))], axis=1)
        dx = np.zeros_like(x)
        dx[:, -1] = 1.0
        for i in range(n):
            W = params[f"decoder.W{i}"].data
            b = params[f"decoder.b{i}"].data
            x = x @ W + b
            dx = dx @ W
            if i < n - 1:
                mask = x > 0.0
                x = x * mask
                dx = dx * mask
        poses[:, k] = x
        vels[:, k] = dx
    return poses, vels


def _resample_frames(frames, times, n):
    """Per-channel linear resample onto n evenly spaced progress points.
    Stored frame order is kept: first frame stays the start of motion."""
    t = np.asarray(times, dtype=float)
    p0 = np.linspace(0.0, 1.0, frames.shape[0])
    if t.shape == (frames.shape[0],) and frames.shape[0] > 1:
        span = t[-1] - t[0]
        if span != 0.0:
            cand = (t - t[0]) / span
            if np.all(np.diff(cand) > 0):
                p0 = cand
    p = np.linspace(0.0, 1.0, n)
    return np.stack([np.interp(p, p0, frames[:, c]) for c in range(frames.shape[1])], axis=1)


@dataclass
class TrainingSet:
    """Demo data unpacked to arrays on the canonical reversed-time grid:
    T frames at times 1 -> 0; frame 0 is the approach, the last frame the
    finished grasp."""

    clouds: np.ndarray  # (D, N, 3)
    frames_act: np.ndarray  # (D, T, actuator_dim)
    frames_pose: np.ndarray  # (D, T, pose_dim)
    gt_keypoints: np.ndarray  # (D, T, K, 3)
    times: np.ndarray  # (T,) strictly decreasing 1 -> 0

    @classmethod
    def from_demos(cls, hand, demos, cfg, points_per_cloud=None, seed=0):
        """Demos of any length land on the canonical grid by linear
        resampling; clouds larger than points_per_cloud are subsampled
        reproducibly from `seed`."""
        if not demos:
            raise ValidationError("no demonstrations given")
        T = cfg.frames_per_demo
        rng = np.random.default_rng(seed)
        clouds, acts = [], []
        for d in demos:
            tr = d.trajectory
            if tr is None:
                raise ValidationError(f"demo '{d.name}' has no trajectory; retarget it first")
            frames = tr.frames
            if tr.layout == "pose":
                frames = pose_to_actuator(frames)
            if frames.ndim != 2 or frames.shape[1] != cfg.actuator_dim:
                raise ValidationError(
                    f"demo '{d.name}': expected {cfg.actuator_dim}-wide actuator frames, got {frames.shape}"
                )
            if frames.shape[0] < 2:
                raise ValidationError(f"demo '{d.name}' needs at least 2 frames")
            if frames.shape[0] != T:
                frames = _resample_frames(frames, tr.times, T)
            cloud = np.asarray(d.cloud, dtype=float)
            n_points = cloud.shape[0] if points_per_cloud is None else int(points_per_cloud)
            if cloud.shape[0] < n_points:
                raise ValidationError(
                    f"demo '{d.name}': cloud has {cloud.shape[0]} points, need {n_points}"
                )
            if cloud.shape[0] > n_points:
                cloud = cloud[rng.choice(cloud.shape[0], size=n_points, replace=False)]
            clouds.append(cloud)
            acts.append(frames)
        if len({c.shape for c in clouds}) != 1:
            raise ValidationError("all demo clouds must share one size; set points_per_cloud")
        clouds = np.stack(clouds)
        acts = np.stack(acts)
        D = acts.shape[0]
        poses = actuator_to_pose(acts.reshape(D * T, -1)).reshape(D, T, cfg.pose_dim)
        kps = fk(hand, poses.reshape(D * T, -1)).reshape(D, T, hand.n_keypoints, 3)
        return cls(clouds, acts, poses, kps, np.linspace(1.0, 0.0, T))

    def __len__(self):
        return self.clouds.shape[0]


def loss_terms(params, cfg, hand, data, index, eps, weights):
    """Build the training loss graph for one batch (rows `index` of `data`).

    Returns (total Tensor, parts dict of floats).
    """
    clouds = data.clouds[index]
    frames_act = data.frames_act[index]
    gt_pose = data.frames_pose[index]
    gt_kps = data.gt_keypoints[index]
    B, T = frames_act.shape[0], frames_act.shape[1]

    point_feat = encode_points(params, clouds)
    mu, logvar = encode(params, cfg, point_feat, frames_act)
    z = reparameterize(mu, logvar, eps)
    pred = decode(params, cfg, point_feat, z, data.times)  # (B, T, pose_dim)

    # reconstruction terms are element-mean squared errors (stock MSE
    # reduction); KL and contact keep their per-sample sums below
    err = ad.sub(pred, Tensor(gt_pose))
    l_pose = ad.mean_all(ad.square(err))

    pred_flat = ad.reshape(pred, (B * T, cfg.pose_dim))
    kps = ad.fk_op(hand, pred_flat)  # (B*T, K, 3)
    kerr = ad.sub(kps, Tensor(gt_kps.reshape(B * T, -1, 3)))
    l_key = ad.mean_all(ad.square(kerr))

    l_kl = kl_divergence(mu, logvar)

    tips = list(hand.fingertip_indices)
    final = ad.fk_op(hand, pred[:, T - 1, :])  # poses at t = 0
    tip_pts = ad.take(final, (slice(None), tips, slice(None)))  # (B, 4, 3)
    diff = ad.sub(ad.expand_dims(tip_pts, 2), Tensor(clouds[:, None, :, :]))
    d2 = ad.sum_along(ad.square(diff), axis=3)  # (B, tips, N)
    l_contact = ad.mean_all(ad.sum_along(ad.min_along(d2, axis=2), axis=1))

    # components with a zero weight stay out of the graph entirely, so they
    # contribute nothing to gradients but are still reported below
    pieces = [
        ad.mul(term, w)
        for term, w in (
            (l_pose, weights.pose),
            (l_key, weights.keypoint),
            (l_kl, weights.kl),
            (l_contact, weights.contact),
        )
        if w != 0.0
    ]
    total = pieces[0] if pieces else ad.mul(l_pose, 0.0)
    for piece in pieces[1:]:
        total = total + piece
    parts = {
        "pose": l_pose.item(),
        "keypoint": l_key.item(),
        "kl": l_kl.item(),
        "contact": l_contact.item(),
        "total": total.item(),
    }
    return total, parts


def learning_rate(cfg, epoch):
    return cfg.lr * 0.5 ** (epoch // cfg.lr_halflife)


@dataclass
class TrainResult:
    params: dict
    history: list
    adam: AdamState
    epochs_run: int


def train(
    hand,
    demos,
    model_cfg=None,
    train_cfg=None,
    rng=None,
    params=None,
    adam=None,
    start_epoch=0,
    checkpoint_path=None,
):
    """Fit the model. Deterministic given (rng state, params, adam, start_epoch);
    a run resumed from a checkpoint continues bit-for-bit."""
    cfg = model_cfg or ModelConfig()
    tcfg = train_cfg or TrainConfig()
    if tcfg.frames_per_demo != cfg.frames_per_demo:
        raise ValidationError(
            f"frames_per_demo mismatch: training says {tcfg.frames_per_demo}, model says {cfg.frames_per_demo}"
        )
    rng = rng or np.random.default_rng(tcfg.seed)
    data = (
        demos
        if isinstance(demos, TrainingSet)
        else TrainingSet.from_demos(
            hand, demos, cfg, points_per_cloud=tcfg.points_per_cloud, seed=tcfg.seed
        )
    )
    if params is None:
        params = init_params(rng, cfg)
    if adam is None:
        adam = AdamState()
    history = []
    D = len(data)
    try:
        for epoch in range(start_epoch, tcfg.epochs):
            lr = learning_rate(tcfg, epoch)
            order = rng.permutation(D)
            sums = {}
            nb = 0
            for lo in range(0, D, tcfg.batch_size):
                idx = order[lo : lo + tcfg.batch_size]
                eps = rng.standard_normal((idx.size, cfg.latent_dim))
                zero_grads(params)
                total, parts = loss_terms(params, cfg, hand, data, idx, eps, tcfg.weights)
                if not np.isfinite(parts["total"]):
                    # params have not been stepped on this batch yet, so they
                    # are the last finite state: keep them reachable on disk.
                    if checkpoint_path:
                        save_model(checkpoint_path, params, cfg, adam=adam, epoch=epoch, rng=rng)
                    raise TrainingAborted(
                        f"loss became non-finite at epoch {epoch}",
                        history=history,
                        checkpoint_path=checkpoint_path,
                    )
                total.backward()
                adam_step(params, adam, lr)
                nb += 1
                for k, v in parts.items():
                    sums[k] = sums.get(k, 0.0) + v
            record = {k: v / nb for k, v in sums.items()}
            record["epoch"] = epoch
            record["lr"] = lr
            history.append(record)
            if checkpoint_path and tcfg.checkpoint_every and (epoch + 1) % tcfg.checkpoint_every == 0:
                save_model(checkpoint_path, params, cfg, adam=adam, epoch=epoch + 1, rng=rng)
    except KeyboardInterrupt:
        raise TrainingAborted("interrupted", checkpoint_path=checkpoint_path, history=history)
    return TrainResult(params=params, history=history, adam=adam, epochs_run=tcfg.epochs - start_epoch)


def save_model(path, params, cfg, adam=None, epoch=None, rng=None):
    arrays = {f"param.{k}": p.data for k, p in params.items()}
    if adam is not None:
        arrays.update(adam_state_arrays(adam))
    meta = {
        "kind": "grasp_model",
        "config": {
            "latent_dim": cfg.latent_dim,
            "point_feature_dim": cfg.point_feature_dim,
            "hand_feature_dim": cfg.hand_feature_dim,
            "frames_per_demo": cfg.frames_per_demo,
            "actuator_dim": cfg.actuator_dim,
            "pose_dim": cfg.pose_dim,
            "point_widths": list(cfg.point_widths),
            "hand_widths": list(cfg.hand_widths),
            "trunk_widths": list(cfg.trunk_widths),
            "decoder_widths": list(cfg.decoder_widths),
            "logvar_limit": cfg.logvar_limit,
        },
        "adam_t": adam.t if adam is not None else 0,
        "epoch": epoch,
    }
    if rng is not None:
        meta["rng_state"] = rng_state_to_meta(rng)
    save_checkpoint(path, arrays, meta)


def load_model(path):
    """Returns (params, cfg, adam, epoch, rng-or-None)."""
    from .formats import load_checkpoint

    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "grasp_model":
        raise ValidationError("not a model checkpoint")
    c = meta["config"]
    cfg = ModelConfig(
        latent_dim=c["latent_dim"],
        point_feature_dim=c["point_feature_dim"],
        hand_feature_dim=c["hand_feature_dim"],
        frames_per_demo=c["frames_per_demo"],
        actuator_dim=c["actuator_dim"],
        pose_dim=c["pose_dim"],
        point_widths=tuple(c["point_widths"]),
        hand_widths=tuple(c["hand_widths"]),
        trunk_widths=tuple(c["trunk_widths"]),
        decoder_widths=tuple(c["decoder_widths"]),
        logvar_limit=c["logvar_limit"],
    )
    params = {
        k[len("param.") :]: Tensor(a.copy(), requires_grad=True)
        for k, a in arrays.items()
        if k.startswith("param.")
    }
    adam = adam_state_from_arrays(arrays, meta.get("adam_t", 0))
    rng = rng_from_meta(meta["rng_state"]) if "rng_state" in meta else None
    return params, cfg, adam, meta.get("epoch"), rng


def model_digest(params):
    """Stable hex fingerprint of the parameter values (name-ordered sha256)."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def _oriented_grid(time_grid):
    """Normalize a sampling grid to decreasing model time (grasp at the end).
    Accepts either direction; a flipped input decodes to the same frames."""
    grid = np.asarray(time_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValidationError("time grid must be a non-empty 1-D array")
    if grid.size > 1:
        d = np.diff(grid)
        if np.all(d < 0):
            return grid.copy()
        if np.all(d > 0):
            return grid[::-1].copy()
        raise ValidationError("time grid must be strictly monotonic")
    return grid.copy()


def _decoded_trajectory(frames, dec_grid, meta):
    # container times run forward (0 at approach start), frames already
    # ordered start -> grasp; the decoder grid itself counts down to 0.
    meta = dict(meta)
    meta["model_time_grid"] = [float(v) for v in dec_grid]
    return Trajectory(
        frames=frames,
        times=1.0 - dec_grid,
        layout="pose",
        meta=meta,
        executed=False,
    )


def sample_trajectories(params, cfg, cloud, n_codes, time_grid, seed=0):
    """Draw n_codes latent codes for one object and decode each on time_grid.

    Returns a list of pose-layout trajectories ordered start -> grasp, each
    tagged in meta with its latent code, the draw seed, and the model digest.
    """
    dec_grid = _oriented_grid(time_grid)
    cloud = np.asarray(cloud, dtype=float)
    feat = encode_points(params, cloud[None]).data  # (1, F)
    feat = np.repeat(feat, n_codes, axis=0)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_codes, cfg.latent_dim))
    out = decode(params, cfg, Tensor(feat), Tensor(z), dec_grid).data
    digest = model_digest(params)
    return [
        _decoded_trajectory(
            out[i],
            dec_grid,
            {"z": [float(v) for v in z[i]], "seed": int(seed), "code_index": i, "model_digest": digest},
        )
        for i in range(n_codes)
    ]


def sample_single(params, cfg, cloud, z, time_grid):
    """Decode one given latent code; z (latent_dim,). Returns a trajectory."""
    dec_grid = _oriented_grid(time_grid)
    cloud = np.asarray(cloud, dtype=float)
    z = np.asarray(z, dtype=float)
    feat = encode_points(params, cloud[None]).data
    out = decode(params, cfg, Tensor(feat), Tensor(z[None]), dec_grid).data
    return _decoded_trajectory(
        out[0],
        dec_grid,
        {"z": [float(v) for v in z], "model_digest": model_digest(params)},
    )
