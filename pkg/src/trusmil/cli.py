"""Command-line interface.

Subcommands map onto pipeline stages; ``run-all`` executes everything.
Every command takes a YAML config (--config) and an optional output
directory override (--out). Exit code 0 on success, nonzero on any
stage failure.
"""

import argparse
import sys
from pathlib import Path

from .config import ConfigError, dump_effective_config, load_config
from .runner import (
    RunContext,
    StageError,
    run_experiment,
    stage_evaluate,
    stage_finetune,
    stage_multiscale,
    stage_pretrain,
    stage_report,
    stage_split,
    stage_synth,
)


def _add_common(parser, config_required=True):
    parser.add_argument("--config", required=config_required,
                        help="path to the YAML experiment config")
    parser.add_argument("--out", help="run directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--gamma", type=float, action="append",
                        help="override multiscale gamma (repeatable)")
    parser.add_argument("--backbone", help="override the backbone variant")
    parser.add_argument("--print-effective-config", action="store_true",
                        help="print the fully-defaulted config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trusmil",
        description="Micro-ultrasound biopsy-core classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("synth", "generate the synthetic dataset"),
        ("split", "build the nested cross-validation fold plan"),
        ("pretrain", "self-supervised pre-training per fold leg"),
        ("finetune", "ROI-scale supervised training per fold leg"),
        ("multiscale", "multi-scale core classifier per fold leg"),
        ("evaluate", "compute per-fold and aggregate metrics"),
        ("report", "emit result tables and ROC figures"),
        ("run-all", "run every enabled stage end to end"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("pretrain", "finetune", "multiscale"):
            p.add_argument("--leg", type=int, default=None,
                           help="fold leg index (default: all legs)")
        if name == "run-all":
            p.add_argument("--fresh", action="store_true",
                           help="wipe the run directory first")
            p.add_argument("--no-resume", action="store_true",
                           help="re-run stages even if marked done")
    return parser


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.gamma:
        config.multiscale.gammas = [float(g) for g in args.gamma]
    if args.backbone:
        config.backbone.variant = args.backbone
        config.backbone.__post_init__()
    if args.out:
        config.output_dir = args.out
    return config


def _leg_range(args, config):
    if getattr(args, "leg", None) is not None:
        if not 0 <= args.leg < config.k:
            raise StageError(f"leg {args.leg} outside [0, {config.k})")
        return [args.leg]
    return list(range(config.k))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
        if args.print_effective_config:
            print(dump_effective_config(config), end="")
            return 0

        if args.command == "run-all":
            run_dir = run_experiment(config, run_dir=config.output_dir,
                                     resume=not args.no_resume,
                                     fresh=args.fresh)
            print(f"run complete: {run_dir}")
            return 0

        ctx = RunContext(Path(config.output_dir), config)
        if args.command == "synth":
            stage_synth(ctx)
        elif args.command == "split":
            stage_split(ctx)
        elif args.command == "pretrain":
            for leg in _leg_range(args, config):
                stage_pretrain(ctx, leg)
        elif args.command == "finetune":
            for leg in _leg_range(args, config):
                stage_finetune(ctx, leg)
        elif args.command == "multiscale":
            for leg in _leg_range(args, config):
                stage_multiscale(ctx, leg)
        elif args.command == "evaluate":
            stage_evaluate(ctx)
        elif args.command == "report":
            stage_report(ctx)
        ctx.save_manifest()
        print(f"{args.command}: done ({config.output_dir})")
        return 0
    except (StageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
