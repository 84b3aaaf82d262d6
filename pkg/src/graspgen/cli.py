"""Command-line front end.

One subcommand per pipeline stage plus `run` (everything) and `gen-demos`
(write the demonstration file and stop). All stage commands share one
artifact directory (--out) and one config; a stage reuses any artifact
whose input hash still matches, so `graspgen train -o runs/a` followed by
`graspgen sample -o runs/a` behaves like one resumable pipeline.

Exit codes: 0 success, 2 bad input or config, 3 a stage failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

from .assets import toy_hand
from .demos import SyntheticDemoSpec, generate_synthetic_demos
from .errors import GraspgenError, StageError, ValidationError
from .formats import load_hand_model, save_demonstrations
from .model import LossWeights, ModelConfig, TrainConfig
from .pipeline import STAGE_ORDER, PipelineConfig, StageToggles, run_pipeline
from .planners import CemConfig, RrtConfig
from .retarget import RetargetConfig

log = logging.getLogger(__name__)

_STAGE_COMMANDS = {
    "retarget": ("retarget",),
    "train": ("train",),
    "sample": ("sample",),
    "plan-rrt": ("plan_rrt",),
    "plan-cem": ("plan_cem",),
    "evaluate": ("evaluate",),
    "report": ("report",),
    "run": STAGE_ORDER,
}

_SUBCONFIGS = (
    ("stages", StageToggles),
    ("demo", SyntheticDemoSpec),
    ("model", ModelConfig),
    ("train", TrainConfig),
    ("retarget", RetargetConfig),
    ("rrt", RrtConfig),
    ("cem", CemConfig),
)


def _build(cls, doc):
    names = {f.name for f in dc_fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValidationError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**doc)


def config_from_dict(doc):
    """PipelineConfig from a plain (JSON) dict; unknown keys are errors."""
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    doc = dict(doc)
    kwargs = {}
    for key, cls in _SUBCONFIGS:
        if key in doc:
            sub = dict(doc.pop(key))
            if cls is TrainConfig and isinstance(sub.get("weights"), dict):
                sub["weights"] = _build(LossWeights, sub["weights"])
            kwargs[key] = _build(cls, sub)
    return _build(PipelineConfig, {**doc, **kwargs})


def load_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return config_from_dict(json.load(f))


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
    p.add_argument("--config", type=str, default=None, help="JSON pipeline config")
    p.add_argument("--out", "-o", type=str, default=None, help="artifact directory")
    p.add_argument("--hand", type=str, default=None, help="hand model file (default: bundled hand)")
    p.add_argument("--overwrite", action="store_true", help="ignore cached artifacts")
    p.add_argument("-v", "--verbose", action="store_true", help="stage-by-stage logging")


def _add_overrides(p):
    p.add_argument("--demos", type=int, default=None, help="number of synthetic demos")
    p.add_argument("--epochs", type=int, default=None, help="training epochs")
    p.add_argument("--samples-per-scene", type=int, default=None)
    p.add_argument("--sample-frames", type=int, default=None)
    p.add_argument("--rrt-plans", type=int, default=None)
    p.add_argument("--cem-plans", type=int, default=None)
    p.add_argument("--eval-points", type=int, default=None)
    p.add_argument("--collision-radius", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="graspgen",
        description="Generate, plan, execute and score dexterous grasping trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGE_COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run" else "run every stage")
        _add_common(p)
        _add_overrides(p)
    g = sub.add_parser("gen-demos", help="write synthetic demonstrations and stop")
    _add_common(g)
    g.add_argument("--count", type=int, default=None, help="number of demos (default from config)")
    return parser


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    for attr, flag in (
        ("samples_per_scene", "samples_per_scene"),
        ("sample_frames", "sample_frames"),
        ("rrt_plans", "rrt_plans"),
        ("cem_plans", "cem_plans"),
        ("eval_points", "eval_points"),
        ("collision_radius", "collision_radius"),
    ):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    if getattr(args, "demos", None) is not None:
        cfg.demo = _build(
            SyntheticDemoSpec, {**_asdict_shallow(cfg.demo), "n_demos": args.demos}
        )
    if getattr(args, "epochs", None) is not None:
        cfg.train = _build(TrainConfig, {**_asdict_shallow(cfg.train), "epochs": args.epochs})
    return cfg


def _asdict_shallow(dc):
    return {f.name: getattr(dc, f.name) for f in dc_fields(dc)}


def _resolve_hand(args):
    if args.hand:
        return load_hand_model(args.hand)
    return toy_hand()


def _print_summary(report, out):
    ev = report.get("evaluation")
    if ev:
        methods = ev["smoothness"]["methods"]
        print(f"{'method':<8} {'joint vel':>10} {'joint acc':>10} {'cart vel':>10} {'cost':>10}")
        for name, cell in methods.items():
            cost = cell.get("cost_log10", "")
            cost = f"{cost:.3f}" if isinstance(cost, float) else str(cost)
            print(
                f"{name:<8} {cell['joint']['vel_log10']:>10.3f} {cell['joint']['acc_log10']:>10.3f} "
                f"{cell['cartesian']['vel_log10']:>10.3f} {cost:>10}"
            )
        agg = ev["methods"]
        succ = {m: f"{c['successes']}" for m, c in agg.items()}
        print("successes:", ", ".join(f"{m}={s}" for m, s in succ.items()))
    if out:
        print(f"artifacts in {out}")


def _cmd_gen_demos(args):
    cfg = _resolve_config(args)
    hand = _resolve_hand(args)
    spec = cfg.demo
    if args.count is not None:
        spec = _build(SyntheticDemoSpec, {**_asdict_shallow(spec), "n_demos": args.count})
    scenes = generate_synthetic_demos(hand, spec)
    if not scenes:
        print("0 demonstrations requested; nothing written")
        return 0
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "demos.json"
    save_demonstrations(path, [sc.demo for sc in scenes])
    print(f"wrote {len(scenes)} demonstrations to {path}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "gen-demos":
            return _cmd_gen_demos(args)
        cfg = _resolve_config(args)
        if args.command != "run":
            # a stage command runs exactly that stage; `run` keeps the
            # config's own toggles (all on by default)
            enabled = _STAGE_COMMANDS[args.command]
            cfg.stages = StageToggles(**{s: (s in enabled) for s in STAGE_ORDER})
        hand = _resolve_hand(args)
        report = run_pipeline(hand, cfg, out_dir=args.out, overwrite=args.overwrite)
        _print_summary(report, args.out)
        return 0
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValidationError, GraspgenError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
