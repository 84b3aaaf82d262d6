"""On-disk formats: JSON documents and npz checkpoints.

Everything textual goes through save_json/load_json (sorted keys, indent 2,
repr floats) so identical inputs always produce byte-identical files.
Checkpoints store arrays bit-exact in npz plus a JSON metadata blob that
includes the optimizer RNG state.

Every document carries a format version; loaders refuse versions they do
not know so stale tooling fails loudly instead of misreading fields.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kinematics import (
    HandModel,
    Joint,
    Keypoint,
    LinkInertia,
    validate_full_hand,
)

FORMAT_VERSION = 1


def dump_json_bytes(doc):
    text = json.dumps(doc, sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")


def save_json(path, doc):
    with open(path, "wb") as f:
        f.write(dump_json_bytes(doc))


def load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _listify(a):
    return np.asarray(a, dtype=float).tolist()


def check_document(doc, kind):
    """Validate kind and version of a loaded document. Raises ValidationError
    with a message naming both what was found and what would be accepted."""
    got_kind = doc.get("kind")
    if got_kind != kind:
        raise ValidationError(f"expected a {kind!r} document, got kind={got_kind!r}")
    got_version = doc.get("version")
    if got_version != FORMAT_VERSION:
        raise ValidationError(
            f"{kind} document has version {got_version!r}; this build reads "
            f"version {FORMAT_VERSION}. Re-export the file or upgrade."
        )


# ---------------------------------------------------------------- hand model


def hand_model_to_dict(model, full_hand=None):
    if full_hand is None:
        try:
            validate_full_hand(model)
            full_hand = True
        except ValidationError:
            full_hand = False
    doc = {
        "kind": "hand_model",
        "version": FORMAT_VERSION,
        "name": model.name,
        "full_hand": full_hand,
        "joints": [
            {
                "name": j.name,
                "type": j.jtype,
                "parent": j.parent,
                "offset_rot": _listify(j.offset_rot),
                "offset_pos": _listify(j.offset_pos),
                "axis": _listify(j.axis),
            }
            for j in model.joints
        ],
        "limits_lower": _listify(model.limits_lower),
        "limits_upper": _listify(model.limits_upper),
        "keypoints": [
            {"link": k.link, "offset": _listify(k.offset), "fingertip": bool(k.fingertip)}
            for k in model.keypoints
        ],
        "gravity": _listify(model.gravity),
    }
    if model.inertias:
        doc["inertias"] = [
            {"mass": li.mass, "com": _listify(li.com), "inertia": _listify(li.inertia)}
            for li in model.inertias
        ]
    return doc


def hand_model_from_dict(doc):
    check_document(doc, "hand_model")
    frz = lambda a: _freeze(np.array(a, dtype=float))
    joints = tuple(
        Joint(
            name=j["name"],
            jtype=j["type"],
            parent=int(j["parent"]),
            offset_rot=frz(j["offset_rot"]),
            offset_pos=frz(j["offset_pos"]),
            axis=frz(j["axis"]),
        )
        for j in doc["joints"]
    )
    keypoints = tuple(
        Keypoint(link=int(k["link"]), offset=frz(k["offset"]), fingertip=bool(k.get("fingertip", False)))
        for k in doc["keypoints"]
    )
    inertias = tuple(
        LinkInertia(mass=float(li["mass"]), com=frz(li["com"]), inertia=frz(li["inertia"]))
        for li in doc.get("inertias", [])
    )
    model = HandModel(
        name=doc["name"],
        joints=joints,
        limits_lower=frz(doc["limits_lower"]),
        limits_upper=frz(doc["limits_upper"]),
        keypoints=keypoints,
        inertias=inertias,
        gravity=frz(doc.get("gravity", [0.0, 0.0, -9.81])),
    )
    if doc.get("full_hand", False):
        validate_full_hand(model)
    return model


def _freeze(a):
    a.flags.writeable = False
    return a


def save_hand_model(path, model, full_hand=None):
    save_json(path, hand_model_to_dict(model, full_hand=full_hand))


def load_hand_model(path):
    return hand_model_from_dict(load_json(path))


# ------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    """Frames over a time grid. layout names the per-frame vector convention.

    meta carries provenance tags (latent code, seed, model digest for sampled
    trajectories; planner settings for planned ones). executed marks rollout
    histories as opposed to commanded plans.
    """

    frames: np.ndarray  # (T, width)
    times: np.ndarray  # (T,)
    layout: str = "actuator"
    meta: dict = field(default_factory=dict)
    executed: bool = False

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.frames.ndim != 2:
            raise ValidationError(f"trajectory frames must be 2D, got {self.frames.shape}")
        if self.times.shape != (self.frames.shape[0],):
            raise ValidationError("times length must match frame count")

    def __len__(self):
        return self.frames.shape[0]


def trajectory_to_dict(traj):
    doc = {
        "kind": "trajectory",
        "version": FORMAT_VERSION,
        "layout": traj.layout,
        "times": _listify(traj.times),
        "frames": _listify(traj.frames),
        "executed": bool(traj.executed),
    }
    if traj.meta:
        doc["meta"] = traj.meta
    return doc


def trajectory_from_dict(doc):
    check_document(doc, "trajectory")
    return Trajectory(
        frames=np.array(doc["frames"], dtype=float),
        times=np.array(doc["times"], dtype=float),
        layout=doc.get("layout", "actuator"),
        meta=doc.get("meta", {}),
        executed=bool(doc.get("executed", False)),
    )


def save_trajectory(path, traj):
    save_json(path, trajectory_to_dict(traj))


def load_trajectory(path):
    return trajectory_from_dict(load_json(path))


# ------------------------------------------------------------ demonstrations


@dataclass
class Demonstration:
    """One grasp demo: object cloud plus how it was grasped.

    Carries human keypoint frames (T, K, 3), the retargeted joint trajectory,
    or both. Retargeting reads the keypoints and writes the trajectory back
    into the same record.
    """

    name: str
    cloud: np.ndarray  # (N, 3) object surface points, world frame
    trajectory: Trajectory = None
    human: np.ndarray = None  # (T, K, 3) keypoint frames, world frame

    def __post_init__(self):
        self.cloud = np.asarray(self.cloud, dtype=float)
        if self.cloud.ndim != 2 or self.cloud.shape[1] != 3:
            raise ValidationError(f"cloud must be (N, 3), got {self.cloud.shape}")
        if self.human is not None:
            self.human = np.asarray(self.human, dtype=float)
            if self.human.ndim != 3 or self.human.shape[2] != 3:
                raise ValidationError(f"human frames must be (T, K, 3), got {self.human.shape}")
        if self.trajectory is None and self.human is None:
            raise ValidationError("demonstration needs keypoint frames or a trajectory")


def demonstration_to_dict(demo):
    doc = {
        "kind": "demonstration",
        "version": FORMAT_VERSION,
        "name": demo.name,
        "cloud": _listify(demo.cloud),
    }
    if demo.trajectory is not None:
        doc["trajectory"] = trajectory_to_dict(demo.trajectory)
    if demo.human is not None:
        doc["human"] = _listify(demo.human)
    return doc


def demonstration_from_dict(doc):
    check_document(doc, "demonstration")
    traj = doc.get("trajectory")
    human = doc.get("human")
    return Demonstration(
        name=doc["name"],
        cloud=np.array(doc["cloud"], dtype=float),
        trajectory=None if traj is None else trajectory_from_dict(traj),
        human=None if human is None else np.array(human, dtype=float),
    )


def save_demonstrations(path, demos):
    save_json(
        path,
        {
            "kind": "demonstration_set",
            "version": FORMAT_VERSION,
            "demos": [demonstration_to_dict(d) for d in demos],
        },
    )


def load_demonstrations(path):
    doc = load_json(path)
    check_document(doc, "demonstration_set")
    return [demonstration_from_dict(d) for d in doc["demos"]]


# ----------------------------------------------------------------- reports


def save_report(path, report):
    """Reports are plain dicts of JSON-safe values; identical dicts give
    byte-identical files. A version stamp is added when absent."""
    doc = dict(report)
    doc.setdefault("version", FORMAT_VERSION)
    save_json(path, doc)


def load_report(path):
    doc = load_json(path)
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(
            f"report has version {doc.get('version')!r}; this build reads "
            f"version {FORMAT_VERSION}."
        )
    return doc


# -------------------------------------------------------------- checkpoints


def save_checkpoint(path, arrays, meta):
    """arrays: dict name -> ndarray (stored bit-exact). meta: JSON-safe dict,
    may carry a numpy Generator state dict under 'rng_state'."""
    clean = {}
    for k, v in arrays.items():
        a = np.asarray(v)
        clean[k] = a
    stamped = dict(meta)
    stamped.setdefault("version", FORMAT_VERSION)
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(dump_json_bytes(stamped), dtype=np.uint8), **clean)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode("utf-8"))
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    if meta.get("version") != FORMAT_VERSION:
        raise ValidationError(
            f"checkpoint has version {meta.get('version')!r}; this build reads "
            f"version {FORMAT_VERSION}."
        )
    return arrays, meta


def rng_state_to_meta(rng):
    """JSON-safe copy of a numpy Generator's bit generator state."""
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def rng_from_meta(state):
    rng = np.random.Generator(np.random.PCG64())
    bg_state = dict(state)
    inner = dict(bg_state["state"])
    inner["state"] = int(inner["state"])
    inner["inc"] = int(inner["inc"])
    bg_state["state"] = inner
    rng.bit_generator.state = bg_state
    return rng
