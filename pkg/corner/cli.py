"""
Command line entry point: corner <experiment> [flags]
Exit codes: 0 all hard verdicts pass, 1 a verdict failed, 2 usage error, 3 runtime error
"""

import argparse
import logging
import sys
from typing import List, Optional

from corner.errors import CornerError, UsageError
from corner.experiments import DEFAULTS, EXPERIMENTS, SCHEMAS, ExperimentConfig, make_config, read_config_file, \
    run_experiment

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

_DESCRIPTIONS = {
    "shape": "Rost shape of point-to-point passage times and the shape function on a fan of rays",
    "direction": "Direction of the competition interface, deterministic phase lambda <= rho",
    "udist": "Uniform law of the second-class particle speed, lambda > rho",
    "clt": "Central limit rates of the competition interface at time t, lambda < rho",
    "fluct": "Fluctuation exponent of the competition interface about its direction",
    "coupling": "Second-class particle from the growth table against direct TASEP simulation",
    "duality": "Competition interface as a geodesic of the reversed weights",
    "tasep": "Law of large numbers for the second-class particle in direct TASEP simulation",
}


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--lambda", dest="lam", type=float, help="left density in (0, 1]")
    parser.add_argument("--rho", type=float, help="right density in [0, 1)")
    parser.add_argument("--n", type=int, help="box side N")
    parser.add_argument("--t", type=float, help="time horizon")
    parser.add_argument("--replicas", type=int, help="number of replicas (default 100)")
    parser.add_argument("--seed", type=int, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    parser.add_argument("--out", help="output directory (default runs/<experiment>)")
    parser.add_argument("--format", choices=("csv", "json"), help="per-replica output format (default csv)")
    parser.add_argument("--resume", action="store_true", default=None,
                        help="skip replicas already listed in the run's replicas.jsonl")
    parser.add_argument("--config", metavar="FILE", help="key = value file; flags override its values")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corner",
        description="Corner growth, competition interface and second-class particle experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Exit codes: 0 pass, 1 a verdict failed, 2 usage error, 3 runtime error")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment")
    sub.required = True

    for name in EXPERIMENTS:
        defaults = ", ".join("%s=%s" % ("lambda" if k == "lam" else k, v) for k, v in DEFAULTS[name].items())
        epilog = "defaults: %s\nreplicas.csv columns: replica, n, retried, error, tan_theta, u, degenerate, %s" \
                 % (defaults, SCHEMAS[name])
        p = sub.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name], epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_run_flags(p)
    return parser


def parse_config(argv: List[str], file: Optional[str] = None) -> ExperimentConfig:
    """
    :param argv: Command line without the program name
    :param file: Config file, used when argv has no --config
    :return: ExperimentConfig from defaults, then the file, then the flags
    """

    args = build_parser().parse_args(argv)
    path = args.config or file
    file_values = read_config_file(path) if path else {}
    overrides = {k: getattr(args, k) for k in ("lam", "rho", "n", "t", "replicas", "seed", "threads", "out",
                                               "format", "resume")}
    return make_config(args.experiment, file_values, overrides)


def _log_level(argv: List[str]) -> int:
    verbose = sum(a.count("v") for a in argv if a.startswith("-") and not a.startswith("--") and set(a[1:]) == {"v"})
    verbose += argv.count("--verbose")
    return {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=_log_level(argv), format="%(asctime)s %(levelname)s %(message)s")

    try:
        config = parse_config(argv)
    except UsageError as e:
        logging.error("Usage error (%s): %s" % (e.token, e))
        return EXIT_USAGE
    except SystemExit as e:
        # argparse already printed the problem
        return EXIT_PASS if e.code == 0 else EXIT_USAGE

    try:
        report = run_experiment(config)
    except UsageError as e:
        logging.error("Usage error (%s): %s" % (e.token, e))
        return EXIT_USAGE
    except (CornerError, RuntimeError, MemoryError, OSError) as e:
        logging.error("Run failed: %s" % e)
        return EXIT_RUNTIME

    failed = [v.criterion for v in report.verdicts if not v.passed and not v.soft]
    if failed:
        logging.warning("Failed: %s" % ", ".join(failed))
        return EXIT_FAIL
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
