"""Regenerate the bundled model files (toy_hand.json, two_link.json).

The toy hand is a 22-DoF claw: a floating palm, three fingers on top that
curl downward and an opposed thumb underneath that curls upward, four
revolute joints per finger. Dimensions are desk scale (meters). The two-link
model is a planar 2R arm with unit point-mass links, used as a dynamics
benchmark because its equations of motion have a short closed form.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from graspgen.kinematics import HandModel, Joint, Keypoint, LinkInertia, validate_full_hand
from graspgen.formats import save_hand_model

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "graspgen" / "data"

I3 = np.eye(3)
SEGMENTS = [0.030, 0.025, 0.020, 0.015]
CURL_MAX = 1.6


def build_toy_hand():
    joints = [
        Joint("root", "free_root", -1, I3.copy(), np.zeros(3), np.zeros(3)),
    ]
    # three non-collinear palm markers so the root pose can be read off
    # rigidly from keypoints alone (wrist alignment during retargeting)
    keypoints = [
        Keypoint(link=0, offset=np.zeros(3)),  # palm center
        Keypoint(link=0, offset=np.array([0.02, 0.0, 0.0])),  # palm front
        Keypoint(link=0, offset=np.array([0.0, 0.018, 0.0])),  # palm side
    ]
    inertias = [LinkInertia(0.30, np.zeros(3), 2e-4 * I3)]
    # translation limits sized to the desk workspace; planners sample them
    lower = [-0.25] * 3 + [-np.pi] * 3
    upper = [0.25] * 3 + [np.pi] * 3

    fingers = [
        ("index", np.array([0.02, 0.018, 0.05]), np.array([0.0, 1.0, 0.0])),
        ("middle", np.array([0.02, 0.0, 0.05]), np.array([0.0, 1.0, 0.0])),
        ("ring", np.array([0.02, -0.018, 0.05]), np.array([0.0, 1.0, 0.0])),
        ("thumb", np.array([0.02, 0.0, -0.05]), np.array([0.0, -1.0, 0.0])),
    ]
    for name, base, axis in fingers:
        parent = 0
        for s, seg in enumerate(SEGMENTS):
            offset = base if s == 0 else np.array([SEGMENTS[s - 1], 0.0, 0.0])
            joints.append(
                Joint(f"{name}_{s}", "revolute", parent, I3.copy(), offset, axis.copy())
            )
            parent = len(joints) - 1
            lower.append(0.0)
            upper.append(CURL_MAX)
        links = [parent - 3, parent - 2, parent - 1, parent]
        keypoints.append(Keypoint(link=links[0], offset=np.array([SEGMENTS[0], 0, 0])))
        keypoints.append(Keypoint(link=links[1], offset=np.array([SEGMENTS[1], 0, 0])))
        keypoints.append(
            Keypoint(link=links[3], offset=np.array([SEGMENTS[3], 0, 0]), fingertip=True)
        )
        for seg in SEGMENTS:
            inertias.append(
                LinkInertia(0.05, np.array([seg / 2, 0, 0]), 1e-5 * I3)
            )

    model = HandModel(
        name="toy_claw_hand",
        joints=tuple(joints),
        limits_lower=np.array(lower),
        limits_upper=np.array(upper),
        keypoints=tuple(keypoints),
        inertias=tuple(inertias),
    )
    validate_full_hand(model)
    return model


def build_two_link():
    joints = (
        Joint("shoulder", "revolute", -1, I3.copy(), np.zeros(3), np.array([0.0, 1.0, 0.0])),
        Joint("elbow", "revolute", 0, I3.copy(), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])),
    )
    keypoints = (
        Keypoint(link=0, offset=np.array([1.0, 0.0, 0.0])),
        Keypoint(link=1, offset=np.array([1.0, 0.0, 0.0]), fingertip=True),
    )
    inertias = (
        LinkInertia(1.0, np.array([1.0, 0.0, 0.0]), np.zeros((3, 3))),
        LinkInertia(1.0, np.array([1.0, 0.0, 0.0]), np.zeros((3, 3))),
    )
    return HandModel(
        name="two_link_arm",
        joints=joints,
        limits_lower=np.array([-2 * np.pi, -2 * np.pi]),
        limits_upper=np.array([2 * np.pi, 2 * np.pi]),
        keypoints=keypoints,
        inertias=inertias,
    )


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    save_hand_model(DATA / "toy_hand.json", build_toy_hand(), full_hand=True)
    save_hand_model(DATA / "two_link.json", build_two_link(), full_hand=False)
    print(f"wrote {DATA / 'toy_hand.json'}")
    print(f"wrote {DATA / 'two_link.json'}")


if __name__ == "__main__":
    main()
