# dncga/cli.py
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from dncga.config import Settings, load_settings
from dncga.domains import fetch_dimacs, format_bpp, generate_bpp, load_problem
from dncga.errors import ConfigError, DataError, DncgaError
from dncga.harness import compare, emit_csv, format_summary, pretrain, run_experiment

logger = logging.getLogger("dncga")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# flag dest -> Settings field
_OVERRIDES = {
    "seed": "BASE_SEED",
    "out": "OUTPUT_DIR",
    "generations": "GENERATIONS",
    "population": "POPULATION_SIZE",
    "replicates": "REPLICATES",
    "jobs": "JOBS",
    "log_level": "LOG_LEVEL",
    "invalid_mode": "INVALID_MODE",
    "operators": "OPERATORS",
    "instances": "INSTANCES",
    "weights": "WEIGHTS_PATH",
    "url": "DIMACS_URL",
}


# ------------------ Commands ------------------

def cmd_run(settings: Settings) -> int:
    """Every (instance, operator) pair, then CSVs and a summary table on stdout."""
    if not settings.INSTANCES:
        raise ConfigError("no instances given (INSTANCES / --instances)")
    problems = [(Path(p).name, load_problem(p, settings.INVALID_MODE)) for p in settings.INSTANCES]
    ga_config = settings.ga_config()
    neural = settings.neural_config()

    results = [
        run_experiment(
            problem,
            kind,
            ga_config,
            neural,
            replicates=settings.REPLICATES,
            base_seed=settings.BASE_SEED,
            weights_path=settings.WEIGHTS_PATH or None,
            jobs=settings.JOBS,
            instance_name=name,
        )
        for name, problem in problems
        for kind in settings.OPERATORS
    ]
    report = compare(results, settings.PERMUTATION_ROUNDS, np.random.default_rng(settings.BASE_SEED))
    emit_csv(results, report, settings.OUTPUT_DIR)
    print(format_summary(report))
    return 0


def cmd_pretrain(settings: Settings, instance: str | None, weights_out: str | None, force: bool) -> int:
    instance = instance or (settings.INSTANCES[0] if settings.INSTANCES else None)
    if not instance:
        raise ConfigError("pretrain needs an instance (--instance)")
    out = weights_out or settings.WEIGHTS_PATH
    if not out:
        raise ConfigError("pretrain needs an output path (--weights-out)")
    problem = load_problem(instance, settings.INVALID_MODE)
    pretrain(problem, settings.ga_config(), settings.neural_config(), settings.BASE_SEED, out, overwrite=force)
    print(out)
    return 0


def cmd_gen(
    n_items: int, low: int, high: int, capacity: int, count: int, seed: int, out_dir: str | Path
) -> int:
    """Write `count` generated instances in the canonical .bpp format."""
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        name = f"gen_{n_items}_{seed}_{i:03d}"
        instance = generate_bpp(n_items, low, high, capacity, rng, name=name)
        (out_dir / f"{name}.bpp").write_text(format_bpp(instance), encoding="utf-8")
    logger.info("wrote %d instances to %s", count, out_dir)
    return 0


def cmd_fetch(settings: Settings, names: Sequence[str], out_dir: str | Path) -> int:
    for name in names:
        print(fetch_dimacs(name, out_dir, base_url=settings.DIMACS_URL))
    return 0


# ------------------ Parsing ------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dncga", description="GA benchmarks with a learned crossover operator")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="run file with KEY=value lines")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--generations", type=int)
        p.add_argument("--population", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--jobs", type=int, help="replicates run in parallel")
        p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        p.add_argument("--invalid-mode", choices=["strict", "graded"])

    for verb in ("run", "compare"):
        p = sub.add_parser(verb, help="run operators on instances and write CSVs")
        shared(p)
        p.add_argument("--operators", nargs="+")
        p.add_argument("--instances", nargs="+")
        p.add_argument("--weights", help="weights file for dnc_pt")

    p = sub.add_parser("pretrain", help="train a DNC on one instance and save its weights")
    shared(p)
    p.add_argument("--instance")
    p.add_argument("--weights-out")
    p.add_argument("--force", action="store_true", help="overwrite an existing weights file")

    p = sub.add_parser("gen", help="generate random bin packing instances")
    p.add_argument("--items", type=int, default=40)
    p.add_argument("--low", type=int, default=10)
    p.add_argument("--high", type=int, default=25)
    p.add_argument("--capacity", type=int, default=100)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="instances/generated")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = sub.add_parser("fetch", help="download DIMACS coloring benchmarks")
    p.add_argument("names", nargs="+", help="instance names, e.g. games120")
    p.add_argument("--config", help="run file with KEY=value lines")
    p.add_argument("--url", help="base URL of the DIMACS collection")
    p.add_argument("--out", default="instances")
    p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def _settings_from_args(args: argparse.Namespace) -> Settings:
    overrides = {
        key: getattr(args, dest)
        for dest, key in _OVERRIDES.items()
        if getattr(args, dest, None) is not None
    }
    return load_settings(args.config, **overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
            return cmd_gen(args.items, args.low, args.high, args.capacity, args.count, args.seed, args.out)

        settings = _settings_from_args(args)
        logging.basicConfig(level=settings.LOG_LEVEL.upper(), format=LOG_FORMAT)
        if args.command in ("run", "compare"):
            return cmd_run(settings)
        if args.command == "fetch":
            return cmd_fetch(settings, args.names, args.out)
        return cmd_pretrain(settings, args.instance, args.weights_out, args.force)
    except DncgaError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
