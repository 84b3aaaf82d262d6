"""Plain PD versus inverse-dynamics-augmented PD across speed and load.

Runs the tracking grid (three reference speeds x mass multipliers 1/2/3)
on the planar 2R arm and on the fixed-base finger forest of the bundled
hand, then prints RMSE per cell and the per-cell winner. The augmented
controller receives the exact mass multiplier, so the grid shows what a
correct dynamics model buys as loads grow.

Usage:
    python scripts/controller_ablation.py [--mass 1 2 3] [--speeds 0.25 0.5 1.0]
"""

import argparse
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from graspgen.assets import toy_hand, two_link_arm
from graspgen.dynamics import finger_subtree, tracking_benchmark


def print_grid(name, cells):
    print(f"\n{name}")
    print(f"{'speed':>6} {'mass':>5} {'plain rmse':>12} {'aug rmse':>12}  winner")
    strict = 0
    for c in cells:
        plain, aug = c["rmse_plain"], c["rmse_augmented"]
        winner = "aug" if aug < plain else ("tie" if aug == plain else "plain")
        strict += aug < plain
        print(
            f"{c['speed']:>6.2f} {c['mass_scale']:>5.1f} {plain:>12.3e} {aug:>12.3e}  {winner}"
        )
    print(f"augmented strictly better in {strict}/{len(cells)} cells")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mass", type=float, nargs="+", default=(1.0, 2.0, 3.0))
    ap.add_argument("--speeds", type=float, nargs="+", default=(0.25, 0.5, 1.0))
    args = ap.parse_args(argv)

    t0 = time.time()
    arm_cells = tracking_benchmark(two_link_arm(), speeds=args.speeds, mass_scales=args.mass)
    print_grid("2-link arm", arm_cells)

    fingers = finger_subtree(toy_hand())
    hand_cells = tracking_benchmark(fingers, speeds=args.speeds, mass_scales=args.mass)
    print_grid("hand finger forest", hand_cells)
    print(f"\n{time.time() - t0:.1f} s wall")
    return 0


if __name__ == "__main__":
    sys.exit(main())
