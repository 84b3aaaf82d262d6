"""Bundled model files."""

from pathlib import Path

from .formats import load_hand_model

DATA_DIR = Path(__file__).resolve().parent / "data"


def toy_hand():
    """22-DoF claw hand used by the demos, benchmarks and tests."""
    return load_hand_model(DATA_DIR / "toy_hand.json")


def two_link_arm():
    """Planar 2R arm with unit point-mass links (dynamics benchmark)."""
    return load_hand_model(DATA_DIR / "two_link.json")
