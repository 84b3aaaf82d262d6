"""Run the desk-scale grasping benchmark and print both report tables.

Eight synthetic scenes (spheres and boxes), one trained model, sampled
grasps versus an RRT baseline, a CEM baseline and the straight-line lower
bound. Artifacts land in --out so a rerun only recomputes what changed.

Usage:
    python scripts/run_desk_benchmark.py --out runs/desk [--seed 0]
"""

import argparse
import logging
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from graspgen.assets import toy_hand
from graspgen.pipeline import PipelineConfig, run_pipeline


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--overwrite", action="store_true")
    ap.add_argument("-q", "--quiet", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s"
    )

    cfg = PipelineConfig(seed=args.seed)
    t0 = time.time()
    report = run_pipeline(toy_hand(), cfg, out_dir=args.out, overwrite=args.overwrite)
    wall = time.time() - t0

    ev = report["evaluation"]
    print(f"\nsmoothness (lower is smoother), {wall:.0f} s wall")
    hdr = f"{'method':<8} {'joint pos':>10} {'joint vel':>10} {'joint acc':>10} {'cart vel':>10} {'cart acc':>10}"
    print(hdr)
    for name, cell in ev["smoothness"]["methods"].items():
        j, c = cell["joint"], cell["cartesian"]
        print(
            f"{name:<8} {j['pos']:>10.3f} {j['vel_log10']:>10.3f} {j['acc_log10']:>10.3f}"
            f" {c['vel_log10']:>10.3f} {c['acc_log10']:>10.3f}"
        )
    print(f"\ncost per success (log10; unit per method in report)")
    for name, cell in ev["smoothness"]["methods"].items():
        cost = cell.get("cost_log10", "")
        cost = f"{cost:.3f}" if isinstance(cost, float) else str(cost)
        n = ev["methods"].get(name, {})
        print(
            f"{name:<8} cost={cost:>8}  successes={n.get('successes', 0):>3}"
            f"  metered={n.get('env_steps', 0):>8} ({ev['cost_units'].get(name, '')})"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
