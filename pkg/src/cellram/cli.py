"""Command line entry point: ``cellram {assess,validate,export-plots}``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric/divergence error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import __version__
from .config import RunConfig
from .errors import CellRamError, ConfigError

log = logging.getLogger("cellram")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _assess(args):
    from .pipeline import cmd_assess

    cfg = _load_config(args)
    report = cmd_assess(cfg)
    est = report.estimate
    print(json.dumps({
        "output_dir": cfg.output_dir,
        "test_error": report.data["classifier"]["test_error"],
        "acu": est["acu"],
        "mean": est["mean"],
        "variance": est["variance"],
        "upper_bound": est["upper_bound"],
        "cells_assessed": est["cells_assessed"],
        "seconds_per_cell": report.seconds_per_cell,
    }, indent=2))
    return 0


def _validate(args):
    from .pipeline import cmd_validate

    diag = cmd_validate(_load_config(args))
    print(diag.summary())
    return 0


def _export(args):
    from .plotting import export_plots

    for path in export_plots(args.report, args.out, figures=not args.no_figures):
        print(path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="cellram", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("assess", _assess, "run the full assessment"),
                            ("validate", _validate, "dry-run checks without assessing cells")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads for cell assessment")
        p.set_defaults(func=fn)

    p = sub.add_parser("export-plots", help="write plot CSVs and figures for a finished run")
    p.add_argument("report", help="report.json or the run's output directory")
    p.add_argument("--out", help="directory for plot files (default: next to the report)")
    p.add_argument("--no-figures", action="store_true", help="write CSV grids only")
    p.set_defaults(func=_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CellRamError as exc:
        print(f"cellram {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        wrapped = ConfigError(str(exc))
        print(f"cellram {args.command}: {wrapped}", file=sys.stderr)
        return wrapped.exit_code


if __name__ == "__main__":
    sys.exit(main())
