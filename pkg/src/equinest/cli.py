"""Command-line interface: ``equinest synth | infer | report | cache``."""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from equinest.config import RunConfig, apply_overrides
from equinest.exceptions import (
    ArtifactError,
    ConfigError,
    ConstraintExhaustedError,
    ConvergenceError,
    DiagnosticError,
    GeometryError,
    SamplerError,
)
from equinest.reconstruction import Reconstruction, RunFiles

__all__ = ["EXIT_ARTIFACT", "EXIT_OK", "EXIT_SAMPLER", "EXIT_VALIDATION", "build_parser", "main"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SAMPLER = 3
EXIT_ARTIFACT = 4


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key, e.g. --set run.sizeSamplePool=200. Repeatable.",
    )
    parser.add_argument("--seed", type=int, default=None, help="Root seed of the run.")
    parser.add_argument("--output-dir", type=Path, default=None, help="Output directory.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equinest",
        description="Bayesian tokamak equilibrium inference with a force-balance prior.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log DEBUG messages.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings only.")
    parser.add_argument(
        "--cache-path",
        type=Path,
        default=None,
        help="Operator-cache database (default: $EQUINEST_CACHE_DIR/operators.db).",
    )
    parser.add_argument("--no-cache", action="store_true", help="Do not use the operator cache.")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Generate a synthetic machine and diagnostics.")
    synth.add_argument("config", type=Path, nargs="?", default=None, help="Run config file.")
    _add_overrides(synth)

    infer = sub.add_parser("infer", help="Run nested sampling and write a run directory.")
    infer.add_argument("config", type=Path, help="Run config file.")
    _add_overrides(infer)
    infer.add_argument("--workers", type=int, default=None, help="Worker threads.")
    infer.add_argument(
        "--resume", action="store_true", help="Continue from checkpoint.npz in the output dir."
    )

    report = sub.add_parser("report", help="Rebuild report and CSV exports of a run.")
    report.add_argument("run_dir", type=Path, help="Run directory written by infer.")

    cache = sub.add_parser("cache", help="Inspect or clear the operator cache.")
    action = cache.add_mutually_exclusive_group(required=True)
    action.add_argument("--list", action="store_true", help="List cached operator bundles.")
    action.add_argument("--clear", action="store_true", help="Remove every cached bundle.")
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output_dir is not None:
        overrides.append(f"paths.output_dir={args.output_dir.resolve()}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"run.workers={args.workers}")
    if args.config is None:
        return RunConfig.from_mapping(apply_overrides({}, overrides), base_dir=Path.cwd())
    return RunConfig.from_file(args.config, overrides)


def _client(args: argparse.Namespace, config: RunConfig) -> Reconstruction:
    return Reconstruction(config, cache_path=args.cache_path, cache_enabled=not args.no_cache)


def cmd_synth(args: argparse.Namespace) -> int:
    config = _load_config(args)
    with _client(args, config) as rec:
        files = rec.synthesize()
    for name, path in files.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    config = _load_config(args)
    with _client(args, config) as rec:
        outcome = rec.infer(resume=args.resume)
    evidence = outcome.report.evidence
    sigma = outcome.report.scalars["sigma_star_sq"]
    print(f"ln Z = {evidence.log_evidence_mean:.6f} ± {evidence.log_evidence_2sigma:.6f} (2σ)")
    print(f"E[σ*²] = {sigma.mean:.6g} kA² [{sigma.lower:.6g}, {sigma.upper:.6g}]")
    print(f"run directory: {outcome.files.root}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    files = RunFiles(args.run_dir)
    if not files.config.exists():
        raise ArtifactError(f"Missing config snapshot: {files.config}")
    config = RunConfig.from_file(files.config)
    with _client(args, config) as rec:
        rec.report(files.root)
    print(f"report: {files.report}")
    return EXIT_OK


def cmd_cache(args: argparse.Namespace) -> int:
    with _client(args, RunConfig()) as rec:
        if args.clear:
            rec.clear_cache()
            print("cache cleared")
        else:
            for entry in rec.list_cached():
                print(f"{entry['key'][:16]}  {entry['label']:<12}  {entry['created_at']}")
    return EXIT_OK


_COMMANDS = {"synth": cmd_synth, "infer": cmd_infer, "report": cmd_report, "cache": cmd_cache}


def main(argv: Sequence[str] | None = None) -> int:
    """
    Entry point of the ``equinest`` console script.

    Returns
    -------
    int
        0 on success, 2 for invalid input or a non-converging generator,
        3 for sampler failures, 4 for missing artifacts or IO errors.
    """
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, GeometryError, DiagnosticError, ConvergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConstraintExhaustedError as e:
        hint = f" (resume from {e.checkpoint})" if e.checkpoint is not None else ""
        print(f"error: {e}{hint}", file=sys.stderr)
        return EXIT_SAMPLER
    except SamplerError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SAMPLER
    except (ArtifactError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ARTIFACT


if __name__ == "__main__":
    sys.exit(main())
