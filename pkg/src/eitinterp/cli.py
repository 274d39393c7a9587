"""Command line entry point: ``eitinterp <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments as ex
from .config import METHODS, load_config
from .forward import read_measurement
from .interpolate import mask_current_driven

logger = logging.getLogger("eitinterp")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with an [experiment] section")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--noise", type=float, metavar="DELTA", help="relative noise level")
    common.add_argument("--radius", type=float, action="append", metavar="R", help="support bound radius (repeatable)")
    common.add_argument("--method", choices=METHODS, action="append", help="interpolation method (repeatable)")
    common.add_argument("--out", metavar="DIR", help="run directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="eitinterp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate measurement matrices for the configured phantom")
    p = sub.add_parser("interpolate", parents=[common], help="fill current-driven entries of a measurement CSV")
    p.add_argument("--input", required=True, metavar="CSV")
    p = sub.add_parser("reconstruct", parents=[common], help="monotonicity indicator from a measurement CSV")
    p.add_argument("--input", required=True, metavar="CSV")
    sub.add_parser("table1", parents=[common], help="interpolation error table over electrode counts")
    sub.add_parser("figure4", parents=[common], help="indicator maps from full and interpolated data")
    return parser


def _config(args):
    overrides = dict(seed=args.seed, noise=args.noise, out=args.out)
    if args.radius:
        overrides["radii"] = tuple(args.radius)
    if args.method:
        overrides["methods"] = tuple(dict.fromkeys(args.method))
    return load_config(args.config, **overrides)


def _interpolate(config, args, artifacts):
    V = read_measurement(args.input)
    *_, S = ex.reconstruction_side(config, V.m)
    for name, Vi in ex.interpolate_all(mask_current_driven(V), S, config.methods, config.radii).items():
        ex.add_measurement(artifacts, f"V_{name}", Vi)


def _reconstruct(config, args, artifacts):
    # without --method the matrix is used as given; with it, the current-driven
    # entries are discarded and replaced by each interpolation first
    V = read_measurement(args.input)
    *_, partition, S = ex.reconstruction_side(config, V.m)
    data = {"full": V}
    if args.method:
        data = ex.interpolate_all(mask_current_driven(V), S, config.methods, config.radii)
    panels = []
    for name, Vs in data.items():
        ind = ex.indicator_from(Vs, S, config.noise, name)
        artifacts.add_text(f"indicator_{name}.csv", ex.indicator_csv(partition, ind))
        panels.append((name, ind.beta, ind.note))
    artifacts.add_bytes("indicator.png", ex.plotting.render_panels(partition, [panels]))


def _table1(config, args, artifacts):
    table = ex.run_table1(config, artifacts)
    sys.stdout.write(table.to_csv())


def _figure4(config, args, artifacts):
    result = ex.run_reconstruction_figure(config, artifacts)
    for (delta, name), (agree, jac) in result.overlap.items():
        print(f"delta={delta:g} {name}: agreement={agree:.4f} jaccard={jac:.4f}")


COMMANDS = {
    "simulate": lambda config, args, artifacts: ex.run_simulation(config, artifacts),
    "interpolate": _interpolate,
    "reconstruct": _reconstruct,
    "table1": _table1,
    "figure4": _figure4,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config(args)
        artifacts = ex.RunArtifacts()
        COMMANDS[args.command](config, args, artifacts)
        manifest = ex.export_run(config, artifacts)
    except (ValueError, OSError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"eitinterp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
