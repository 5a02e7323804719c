"""``hmc-tune`` command-line entry point.

Usage::

    hmc-tune <subcommand> [--config FILE] [--seed N] [--out DIR] [key=value ...]

Exit codes: 0 success, 1 internal error, 2 configuration error,
3 statistical-precondition failure.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SUBCOMMANDS, load
from .exceptions import ChainError, ConfigError, DomainError, StatisticalPreconditionError
from .experiments import COMMANDS

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_STATISTICAL = 0, 1, 2, 3

log = logging.getLogger("hmctune")

_DESCRIPTIONS = {
    "delta-scan": "mean Hamiltonian error of leapfrog on the 1-D Gaussian vs the closed form",
    "constraint-check": "E[exp(Delta)] = 1 and kappa1 = -kappa2/2 on exact draws",
    "bounds": "lower/upper cost bounds over acceptance and their optima",
    "gauss-experiment": "acceptance curve and inverse-acceptance squeeze on a product Gaussian",
    "funnel-scan": "divergences and R-hat_v across targets on the funnel, plus relaxation",
    "sample": "run seeded HMC chains and write draws and transition records",
    "scaling": "log-log slopes of error moments against the step size",
}


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, table):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])


def build_parser():
    parser = argparse.ArgumentParser(prog="hmc-tune", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")
    for name in SUBCOMMANDS:
        keys = ", ".join(SUBCOMMANDS[name]["keys"])
        p = sub.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name],
                           epilog=f"config keys: {keys}")
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--seed", type=int, help="overrides the seed key")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("overrides", nargs="*", metavar="key=value")
    return parser


def run(argv=None):
    """Parse ``argv``, run the subcommand and return an exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.subcommand, args.config, args.overrides, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "resolved_config.txt").write_text(cfg.to_text(), encoding="utf-8")
        tables = COMMANDS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StatisticalPreconditionError as exc:
        for name, table in getattr(exc, "tables", {}).items():
            write_table(args.out / name, table)
        print(f"statistical precondition failed: {exc}", file=sys.stderr)
        return EXIT_STATISTICAL
    except ChainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.original, StatisticalPreconditionError):
            return EXIT_STATISTICAL
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    for name, table in tables.items():
        write_table(args.out / name, table)
        log.info("wrote %s (%d rows)", args.out / name, len(table.rows))
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

