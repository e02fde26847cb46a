"""Command-line entry point.

    bbcirl forward|clone|reward|eval|pipeline [--config FILE] [--set key=value ...] [--out DIR]
    bbcirl bounds [--epsilon X] [--bmax N] [--delta D] [--policy-class-size N] [--csv FILE]
    bbcirl show-config [--config FILE] [--set key=value ...]

On failure the last stderr line is ``error: <category>: <message>`` and the
exit status identifies the category.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline, theory
from .artifacts import atomic_write_text
from .config import PipelineConfig, apply_overrides, load, parse_override
from .errors import BBCError, ConfigError, DivergenceError, MissingArtifactError, UsageError

EXIT_CODES = {ConfigError: 2, UsageError: 3, MissingArtifactError: 4, DivergenceError: 5}


def _config(args) -> PipelineConfig:
    cfg = load(args.config) if args.config else PipelineConfig()
    cfg = apply_overrides(cfg, dict(parse_override(s) for s in args.set))
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    cfg.validate()
    return cfg


def _bounds(args) -> int:
    cfg = _config(args)
    eps = args.epsilon
    label = "given"
    if eps is None:
        clone_dir = Path(cfg.out_dir) / "clone"
        if not (clone_dir / "manifest.json").exists():
            raise MissingArtifactError(f"{clone_dir / 'manifest.json'} not found; pass --epsilon "
                                       "or run the 'clone' stage first")
        traj = pipeline._load_log(cfg)
        eps = theory.estimate_epsilon(pipeline._load_sequence(cfg, traj))
        label = "estimated from cloned policies"
    gamma = args.gamma if args.gamma is not None else cfg.forward.gamma
    T = args.T if args.T is not None else cfg.grid.horizon
    inputs = theory.BoundInputs(1, T, eps, gamma, args.delta, args.policy_class_size)
    reports = theory.bound_sweep(inputs, args.bmax)
    best = theory.optimal_bundle_size(inputs, args.bmax)
    lines = [f"# epsilon={eps!r} ({label})", f"# T={T} gamma={gamma!r} delta={args.delta!r} "
             f"policy_class_size={args.policy_class_size!r}",
             f"# optimal_B={best.B} bound={best.bound!r} advantage={str(best.advantage).lower()}",
             ",".join(theory.SWEEP_COLUMNS)]
    lines += [",".join(str(v) if isinstance(v, int) else repr(v) for v in row)
              for row in theory.sweep_rows(reports)]
    text = "\n".join(lines) + "\n"
    if args.csv:
        atomic_write_text(args.csv, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bbcirl", description="Reward learning from a learning agent "
                                     "via bundle behavior cloning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file of 'section.key = value' lines")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--out", help="output directory (overrides out_dir)")

    for name, text in [("forward", "train the observed learner and log its trajectories"),
                       ("clone", "clone one policy per bundle of the trajectory log"),
                       ("reward", "train the reward network on the cloned policies"),
                       ("eval", "retrain on the learned reward and write evaluation artifacts"),
                       ("pipeline", "run forward, clone, reward and eval in order"),
                       ("show-config", "print the effective configuration")]:
        common(sub.add_parser(name, help=text))

    b = sub.add_parser("bounds", help="sweep the bundle error bound over B and write CSV")
    common(b)
    b.add_argument("--epsilon", type=float, help="policy drift per step (default: estimate from clones)")
    b.add_argument("--bmax", type=int, default=100)
    b.add_argument("--delta", type=float, default=0.05)
    b.add_argument("--policy-class-size", type=float, default=1e8,
                   help="assumed size of the (discrete) policy class")
    b.add_argument("--gamma", type=float, help="default: forward.gamma")
    b.add_argument("--T", type=int, help="samples per trajectory (default: grid.horizon)")
    b.add_argument("--csv", help="write the sweep here instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bounds":
            return _bounds(args)
        cfg = _config(args)
        if args.command == "show-config":
            sys.stdout.write(cfg.dumps())
        elif args.command == "pipeline":
            pipeline.run_pipeline(cfg)
        else:
            pipeline.RUNNERS[args.command](cfg)
        return 0
    except BBCError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return next((code for cls, code in EXIT_CODES.items() if isinstance(exc, cls)), 1)


if __name__ == "__main__":
    sys.exit(main())
