"""Command-line interface: generate, train, evaluate, reproduce.

Exit codes are a stable contract: 0 on success, 1 for usage or
configuration errors, 2 for runtime failures (missing artifacts, malformed
files, diverged training).
"""

from __future__ import annotations

import argparse
import sys

from .config import build_config, load_config
from .errors import (
    ConfigurationError,
    FormatError,
    TrainingDivergedError,
    UsageError,
)
from .experiment import StageError, run_evaluate, run_generate, run_reproduce, run_train
from .training import VARIANTS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract reserves 2 for
    runtime failures, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="noisy-label-lab",
        description="Train multi-label classifiers on noisy annotations with "
        "a small verified pool driving a label-cleaning network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant_flag=False):
        p.add_argument("--config", help="JSON settings file (defaults apply without one)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="set one setting by dotted path, e.g. dataset.class_count=50",
        )
        if variant_flag:
            p.add_argument(
                "--variant",
                action="append",
                choices=VARIANTS,
                help="restrict to this variant (repeatable)",
            )

    common(sub.add_parser("generate", help="build and save a synthetic dataset"))
    train = sub.add_parser("train", help="train one variant on the saved dataset")
    common(train)
    train.add_argument("--variant", choices=VARIANTS, required=True)
    evaluate = sub.add_parser("evaluate", help="score checkpoints on the holdout")
    common(evaluate, variant_flag=True)
    common(sub.add_parser("reproduce", help="run the full pipeline end to end"))
    return parser


def _resolve_config(args):
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={args.out}")
    if args.config is not None:
        return load_config(args.config, overrides)
    return build_config(None, overrides)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (ConfigurationError, UsageError)):
        return EXIT_USAGE
    return EXIT_RUNTIME


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.command == "generate":
            run_generate(config)
        elif args.command == "train":
            run_train(config, args.variant)
        elif args.command == "evaluate":
            run_evaluate(config, variants=args.variant)
        elif args.command == "reproduce":
            run_reproduce(config)
        return EXIT_OK
    except (
        ConfigurationError,
        UsageError,
        FormatError,
        TrainingDivergedError,
        StageError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
