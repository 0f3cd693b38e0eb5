#!/usr/bin/env python3
"""
Space-Time ROM Toolkit
Command-line front end: training, prediction, sweeps, verification and studies
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

from cache import TrajectoryCache
from metrics import MetricsCollector
from stages.orchestrator import BASIS_DIR, StudyOrchestrator
from stages.prediction import PredictionStage
from stages.studies import StudyStage
from stages.training import TrainingStage
from stages.verification import VerificationStage
from strom import bundle
from strom.config import RunConfig, load_config
from strom.errors import ConfigurationError, RomError

logger = logging.getLogger("strom.cli")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_orchestrator(jobs: int = 1) -> StudyOrchestrator:
    """Wire the cache, metrics and stages together"""
    cache = TrajectoryCache()
    metrics = MetricsCollector()
    training = TrainingStage(metrics, cache)
    return StudyOrchestrator(
        training=training,
        prediction=PredictionStage(metrics, fom_provider=training.run_fom),
        verification=VerificationStage(metrics),
        studies=StudyStage(metrics),
        cache=cache,
        metrics=metrics,
        jobs=jobs,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
    common.add_argument("--jobs", type=int, default=1, help="Worker threads for untimed sweeps")
    common.add_argument("--seed", type=int, default=None, help="Seed for randomized checks")
    common.add_argument("--naive", action="store_true", help="Assemble through the dense oracle path")
    common.add_argument("--oracle-cap", type=int, default=None, help="Largest dense space-time system allowed")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="strom",
        description="Space-time reduced order models for parameterized linear parabolic problems",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("train", parents=[common], help="Run training FOMs and build the basis bundle")

    predict = commands.add_parser("predict", parents=[common], help="Evaluate the ROM at one parameter")
    predict.add_argument("--bundle", default=None, help="Basis bundle directory (default <out>/basis)")
    predict.add_argument("--mu", type=float, nargs=2, default=None, metavar=("MU1", "MU2"))
    predict.add_argument("--bound", action="store_true", help="Compute the stability constant and error bound")
    predict.add_argument("--no-timing", action="store_true", help="Skip the median-of-n timing runs")

    sweep = commands.add_parser("sweep", parents=[common], help="Test-parameter and basis-size sweep")
    sweep.add_argument("--bundle", default=None, help="Reuse a trained basis instead of training")
    sweep.add_argument("--timing", action="store_true", help="Time every cell (single worker)")
    sweep.add_argument("--total", action="store_true", help="Report total speed-up including training")

    commands.add_parser("verify", parents=[common], help="Run the dense oracle invariant suite")

    bound = commands.add_parser("bound-study", parents=[common], help="Stability constant growth over N_t")
    bound.add_argument("--dt", type=float, default=None)
    bound.add_argument("--nt-list", type=int, nargs="+", default=None)
    bound.add_argument("--mu", type=float, nargs=2, default=None, metavar=("MU1", "MU2"))

    commands.add_parser("complexity-study", parents=[common], help="Block against unstructured assembly timing")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%H:%M:%S",
    )


def apply_overrides(config: RunConfig, args) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if args.oracle_cap is not None:
        if args.oracle_cap < 1:
            raise ConfigurationError("--oracle-cap must be positive")
        updates["oracle_cap"] = args.oracle_cap
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be positive")
    return config.model_copy(update=updates)


def _banner(title: str):
    print("\n" + "=" * 70)
    print(f"🧮 {title}")
    print("=" * 70)


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.4e}"


def _print_reports(reports):
    print(f"\n{'flavor':<10}{'mu':>24}{'n_s':>5}{'n_t':>5}{'rel. error':>13}{'residual':>13}{'speedup':>11}")
    for r in reports:
        mark = "✓" if r.status == "ok" else "✗"
        mu = f"({r.mu1:.4g}, {r.mu2:.4g})"
        print(f"{r.flavor.value:<10}{mu:>24}{r.n_s:>5}{r.n_t:>5}"
              f"{_fmt(r.relative_error):>13}{_fmt(r.st_residual_norm):>13}{_fmt(r.speedup):>11} {mark}")
        if r.status != "ok":
            print(f"    {r.error}")


async def run_command(args, config: RunConfig, orchestrator: StudyOrchestrator) -> int:
    out_dir = Path(config.output_dir)
    await orchestrator.initialize()

    if args.command == "train":
        result = await orchestrator.train(config, out_dir)
        manifest = result.manifest
        print(f"✓ Basis {manifest.space_dim}x{manifest.n_s}, n_t={manifest.n_t}, "
              f"captured energy {manifest.captured_energy:.10f}")
        print(f"✓ Training time {manifest.training_time_s:.3f}s, bundle at {out_dir / BASIS_DIR}")
        return EXIT_OK

    if args.command == "predict":
        basis = bundle.load_basis(args.bundle or out_dir / BASIS_DIR)
        result = await orchestrator.predict(
            config, out_dir, basis, args.mu,
            naive=args.naive, with_bound=args.bound, timed=not args.no_timing,
        )
        _print_reports(result.reports)
        return EXIT_FAILED if result.failed else EXIT_OK

    if args.command == "sweep":
        basis = bundle.load_basis(args.bundle) if args.bundle and not args.total else None
        reports = await orchestrator.sweep(config, out_dir, basis, timed=args.timing, total=args.total,
                                          naive=args.naive)
        failed = [r for r in reports if r.status != "ok"]
        print(f"{'✓' if not failed else '✗'} {len(reports)} cells, {len(failed)} failed, "
              f"written to {out_dir / 'sweep.csv'}")
        return EXIT_FAILED if failed else EXIT_OK

    if args.command == "verify":
        result = await orchestrator.verify(config, out_dir)
        print("check,kind,nx,nt,n_s,n_t,flavor,value,tolerance,result")
        for c in result.checks:
            flavor = c.flavor.value if c.flavor else ""
            print(f"{c.check},{c.kind.value},{c.nx},{c.nt},{c.n_s or ''},{c.n_t or ''},{flavor},"
                  f"{c.value:.3e},{c.tolerance:.3e},{'PASS' if c.passed else 'FAIL'}")
        if result.failures:
            print(f"✗ {len(result.failures)} of {len(result.checks)} checks failed")
            return EXIT_FAILED
        print(f"✓ All {len(result.checks)} checks passed")
        return EXIT_OK

    if args.command == "bound-study":
        rows = await orchestrator.bound_study(config, out_dir, dt=args.dt, nt_list=args.nt_list, mu=args.mu)
        for row in rows:
            mark = "✓" if row.converged else "✗"
            print(f"N_t={row.N_t:<6} ||(A^st)^-1||={row.inv_norm:.6e}  eta={row.eta:.6e} {mark}")
        return EXIT_OK if all(row.converged for row in rows) else EXIT_FAILED

    rows, summaries = await orchestrator.complexity_study(config, out_dir)
    for row in rows:
        print(f"N_s={row.N_s:<6}{row.flavor.value:<10} block {row.block_time:.3e}s  naive {row.naive_time:.3e}s")
    for summary in summaries:
        print(f"✓ {summary.flavor.value}: block slope {summary.block_slope:.2f}, "
              f"naive slope {summary.naive_slope:.2f}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        config = apply_overrides(load_config(args.config), args)
        orchestrator = build_orchestrator(args.jobs)
    except ConfigurationError as exc:
        print(f"✗ {exc}", file=sys.stderr)
        return EXIT_CONFIG

    _banner(f"{args.command}: {config.problem.kind.value} ({config.problem.nx}x{config.problem.ny}, "
            f"N_t={config.problem.nt})")
    try:
        code = asyncio.run(run_command(args, config, orchestrator))
    except ConfigurationError as exc:
        print(f"✗ {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RomError as exc:
        logger.error(str(exc))
        print(f"✗ {exc}", file=sys.stderr)
        return EXIT_FAILED

    logger.debug(f"Run summary: {orchestrator.metrics.get_summary()}")
    print("=" * 70 + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
