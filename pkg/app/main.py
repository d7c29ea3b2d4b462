import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from app.config import configure_logging, settings
from app.exceptions import ConfigValidationError, GraspAlignError
from app.processor import (
    SynthesisRun,
    check_run_config,
    effective_config,
    evaluate_records,
    export_records,
    load_run_config,
)


logger = logging.getLogger(__name__)


def cmd_synthesize(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    problems = check_run_config(config)
    if problems:
        raise ConfigValidationError("; ".join(problems))
    manifest = SynthesisRun(config, workers=args.workers).run()
    print(f"{manifest.n_records} records written to {config.output_dir}")
    return 0 if manifest.n_records > 0 else 1


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    metrics = evaluate_records(args.records, config, workers=args.workers)
    print(f"metrics written to {metrics}")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    written = export_records(args.records, args.out, args.what)
    print(f"{len(written)} files written to {args.out}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    problems = check_run_config(config)
    for problem in problems:
        print(f"error: {problem}", file=sys.stderr)
    if problems:
        return 1
    print(json.dumps(effective_config(config), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="Dexterous grasp synthesis from human-like contact maps",
    )
    parser.add_argument("--version", action="version", version=settings.VERSION)
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    synthesize = commands.add_parser("synthesize", help="Generate grasps for every object")
    synthesize.add_argument("--config", type=Path, required=True)
    synthesize.add_argument("--workers", type=int, default=None, help="Overrides the config")
    synthesize.set_defaults(handler=cmd_synthesize)

    evaluate = commands.add_parser("evaluate", help="Stability test and metrics for records")
    evaluate.add_argument("--records", type=Path, required=True)
    evaluate.add_argument("--config", type=Path, required=True)
    evaluate.add_argument("--workers", type=int, default=None)
    evaluate.set_defaults(handler=cmd_evaluate)

    export = commands.add_parser("export", help="Meshes for offline visualization")
    export.add_argument("--records", type=Path, required=True)
    export.add_argument("--out", type=Path, required=True)
    export.add_argument("--what", choices=["scene", "contact-heatmap"], default="scene")
    export.set_defaults(handler=cmd_export)

    validate = commands.add_parser("validate", help="Check a run config without running it")
    validate.add_argument("--config", type=Path, required=True)
    validate.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except GraspAlignError as e:
        logger.error("%s failed: %s", args.command, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
