import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import ConfigError, FbstError, NumericalError
from .experiments import (
    ALGORITHMS,
    ExperimentConfig,
    beamform_block,
    run_experiment,
    simulate_block,
)
from .signals import SnapshotBlock
from .tools.io import PlanCacheReader, clear_cache
from .tools.plotting import plot_results

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# subcommand -> experiment kind
EXPERIMENTS = {
    "snr-sweep": "snr_sweep",
    "runtime-sweep": "runtime_sweep",
    "pattern": "beam_pattern",
    "offgrid": "offgrid",
    "error-analysis": "error_analysis",
    "nulling": "nulling",
}


class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def configure_logging(verbose: bool = False, as_json: bool = False):
    handler = logging.StreamHandler(sys.stderr)
    if as_json:
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _algorithms(value: str) -> tuple:
    algorithms = tuple(a.strip() for a in value.split(",") if a.strip())
    unknown = set(algorithms) - set(ALGORITHMS)
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown algorithm(s) {sorted(unknown)}, choose from {', '.join(ALGORITHMS)}"
        )
    return algorithms


def _load_config(args: argparse.Namespace, kind: Optional[str] = None) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(
        kind=kind,
        seed=args.seed,
        output=args.out,
        algorithms=args.algo,
        variant=args.variant,
    )


def _simulate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    block, clean = simulate_block(config)
    output = args.out or "block.npz"
    np.savez(
        output,
        samples=block.samples,
        clean=clean,
        sample_interval=block.spec.sample_interval,
        config_hash=config.digest(),
    )
    log.info(f"Saved a {block.n_elements} x {block.n_samples} block to {output}")
    return 0


def _beamform(args: argparse.Namespace) -> int:
    config = _load_config(args)
    spec = config.spec()
    with np.load(args.input) as data:
        samples = data["samples"]
        if not np.isclose(float(data["sample_interval"]), spec.sample_interval):
            raise ConfigError("The block was sampled with a different interval.")
        if str(data["config_hash"]) != config.digest():
            log.warning("The block was simulated with a different configuration")
    block = SnapshotBlock(samples, spec, config.geometry())

    output = args.out or "beams.npz"
    arrays = {}
    for algorithm in config.algorithms:
        beams = beamform_block(config, block, algorithm)
        arrays[f"{algorithm}_samples"] = beams.samples
        arrays[f"{algorithm}_angles"] = beams.angles
        arrays[f"{algorithm}_valid"] = beams.valid
        arrays[f"{algorithm}_edge"] = beams.edge
    np.savez(output, **arrays)
    log.info(f"Saved beams of {', '.join(config.algorithms)} to {output}")
    return 0


def _experiment(args: argparse.Namespace) -> int:
    run_experiment(_load_config(args, EXPERIMENTS[args.command]))
    return 0


def _plot(args: argparse.Namespace) -> int:
    output = args.out or os.path.splitext(args.input)[0] + ".png"
    try:
        plot_results(args.input, output)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    log.info(f"Wrote {output}")
    return 0


def _cache(args: argparse.Namespace) -> int:
    if args.action == "clear":
        removed = clear_cache(args.path)
        log.info(f"Removed {removed} cached plan(s) from {args.path}")
        return 0
    reader = PlanCacheReader(args.path)
    for key in reader:
        meta = reader.metadata(key)
        details = ", ".join(f"{k}={v}" for k, v in sorted(meta.items()))
        print(f"{key[:16]}  {details}")
    log.info(f"{len(reader)} cached plan(s) in {args.path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="Experiment INI file.")
    common.add_argument("--seed", type=int, default=None, help="Override the seed.")
    common.add_argument("--out", type=str, default=None, help="Output path.")
    common.add_argument(
        "--algo", type=_algorithms, default=None, help="Comma separated algorithms."
    )
    common.add_argument(
        "--variant", choices=["superfast", "precompute"], default=None, help="FBST variant."
    )
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging.")
    common.add_argument(
        "--log-json", action="store_true", help="Log newline-delimited JSON to stderr."
    )

    parser = argparse.ArgumentParser(
        prog="fbst", description="Fast broadband beamspace transformation experiments."
    )
    parser.add_argument("--version", action="version", version=f"fbst {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser(
        "simulate", parents=[common], help="Simulate a snapshot block (.npz)."
    )
    simulate.set_defaults(handler=_simulate)

    beamform = commands.add_parser(
        "beamform", parents=[common], help="Beamform a simulated block (.npz)."
    )
    beamform.add_argument("input", type=str, help="Block written by `fbst simulate`.")
    beamform.set_defaults(handler=_beamform)

    for name, kind in EXPERIMENTS.items():
        command = commands.add_parser(name, parents=[common], help=f"Run the {kind} experiment.")
        command.set_defaults(handler=_experiment)

    plot = commands.add_parser("plot", parents=[common], help="Plot a results CSV (.png).")
    plot.add_argument("input", type=str, help="Results written by an experiment.")
    plot.set_defaults(handler=_plot)

    cache = commands.add_parser("cache", parents=[common], help="Inspect or clear a plan cache.")
    cache.add_argument("action", choices=["inspect", "clear"])
    cache.add_argument("path", type=str, help="Cache index (.json).")
    cache.set_defaults(handler=_cache)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.log_json)
    try:
        return args.handler(args)
    except ConfigError as err:
        log.error(f"Configuration error: {err}")
        return EXIT_CONFIG
    except NumericalError as err:
        log.error(f"Numerical failure: {err}")
        return EXIT_NUMERICAL
    except FbstError as err:
        log.error(str(err))
        return 1


if __name__ == "__main__":
    sys.exit(main())
