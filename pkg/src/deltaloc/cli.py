#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
Command line front end.

    deltaloc [--config PATH] [--seed U64] [--out DIR] [--plot]
             [--dump-matrices] [--threads K] SUBCOMMAND [options]

Exit status: 0 on success, 2 for configuration or validation errors, 3 for
numerical failures, 64 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence, TextIO

from deltaloc import __version__
from deltaloc.commands import Command
from deltaloc.common import setup_logging
from deltaloc.config import RunConfig, parse_config
from deltaloc.errors import DeltaLocError, ParseError, ValidationError
from deltaloc.experiments import ExperimentReport, run_directory, write_report
from deltaloc.service import ExperimentService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILURE = 3
EXIT_USAGE = 64

SUBCOMMANDS = ("cell", "box", "min-spectrum", "ilse", "wegner", "ct", "sigma-band", "oracle")
EXPERIMENTS = ("min-spectrum", "ilse", "wegner", "ct", "sigma-band")


class UsageParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    return [float(item) for item in text.replace(",", " ").split()]


def _ints(text: str) -> List[int]:
    return [int(item) for item in text.replace(",", " ").split()]


def _global_flags() -> argparse.ArgumentParser:
    # defaults are suppressed so the flags may appear on either side of the
    # subcommand without the subparser resetting them
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS)
    flags.add_argument("--seed", metavar="U64", type=int, default=argparse.SUPPRESS)
    flags.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS)
    flags.add_argument("--plot", action="store_true", default=argparse.SUPPRESS)
    flags.add_argument("--dump-matrices", action="store_true", default=argparse.SUPPRESS)
    flags.add_argument("--threads", metavar="K", type=int, default=argparse.SUPPRESS)
    flags.add_argument("--log-level", metavar="LEVEL", default=argparse.SUPPRESS)
    return flags


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    parser = UsageParser(
        prog="deltaloc",
        description="Random delta interactions on a layer: cell problem, boxes and experiments",
        parents=[flags],
    )
    parser.add_argument("--version", action="version", version=f"deltaloc {__version__}")
    commands = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    commands.required = True

    cell = commands.add_parser("cell", parents=[flags], help="cell ground energies over [eps a, eps]")
    cell.add_argument("--eta", type=_floats, help="explicit couplings")
    cell.add_argument("--trace", action="store_true", help="add the Robin trace sup norm")

    box = commands.add_parser("box", parents=[flags], help="lowest eigenvalues of one box")
    box.add_argument("--cells", type=int, required=True)
    box.add_argument("--eps", type=float)
    box.add_argument("--trial", type=int, default=0, help="sampling stream of the couplings")
    box.add_argument("--omega-file", metavar="PATH", help="couplings instead of sampling")
    box.add_argument("--eigenvalues", metavar="K", type=int, default=1)

    ms = commands.add_parser("min-spectrum", parents=[flags], help="ground energy lower bound")
    ms.add_argument("--eps", type=float)
    ms.add_argument("--cells", type=_ints, help="box sizes N")
    ms.add_argument("--trials", type=int)

    ilse = commands.add_parser("ilse", parents=[flags], help="initial length scale estimate")
    ilse.add_argument("--eps", type=float)
    ilse.add_argument("--cells", type=_ints)
    ilse.add_argument("--trials", type=int)
    ilse.add_argument("--strict", action="store_true", help="count lambda_1 < threshold")

    wegner = commands.add_parser("wegner", parents=[flags], help="eigenvalues near a fixed energy")
    wegner.add_argument("--energy", type=float)
    wegner.add_argument("--kappa", type=_floats)
    wegner.add_argument("--cells", type=_ints)
    wegner.add_argument("--trials", type=int)
    wegner.add_argument("--allow-few-events", action="store_true")

    ct = commands.add_parser("ct", parents=[flags], help="resolvent block decay")
    ct.add_argument("--eps", type=float)
    ct.add_argument("--trial", type=int, default=0)

    band = commands.add_parser("sigma-band", parents=[flags], help="ground energies in the band")
    band.add_argument("--eps", type=float)
    band.add_argument("--cells", type=int)
    band.add_argument("--trials", type=int)

    oracle = commands.add_parser("oracle", parents=[flags], help="separable line interaction")
    oracle.add_argument("--sigma", type=_floats)
    oracle.add_argument("--fem", action="store_true", help="add the finite element value")

    return parser


def read_omega(path: str) -> List[float]:
    try:
        with open(path, "r", encoding="utf-8") as file:
            text = file.read()
    except OSError as e:
        raise ParseError(f"Cannot read couplings from {path!r}: {e}") from e

    values: List[float] = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        try:
            values.extend(_floats(line))
        except ValueError as e:
            raise ParseError(str(e), number) from e
    return values


def _format(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_rows(rows: Sequence[Dict[str, Any]], fieldnames: List[str], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _format(row[k]) for k in fieldnames})


def _command(subcommand: str, options: Dict[str, Any]) -> Command[Any]:
    get = options.get
    if subcommand == "cell":
        return Command("cell", etas=get("eta"), trace=bool(get("trace")))
    if subcommand == "box":
        return Command(
            "box",
            get("cells"),
            eps=get("eps"),
            omega=read_omega(options["omega_file"]) if get("omega_file") else None,
            trial=get("trial") or 0,
            eigenvalues=get("eigenvalues") or 1,
        )
    if subcommand == "oracle":
        return Command("oracle", sigmas=get("sigma"), fem=bool(get("fem")))

    keys = {
        "min-spectrum": {"eps": "eps", "cells": "n_list", "trials": "trials"},
        "ilse": {"eps": "eps", "cells": "n_list", "trials": "trials", "strict": "strict"},
        "wegner": {"energy": "energy", "kappa": "kappa_list", "cells": "n_list", "trials": "trials"},
        "ct": {"eps": "eps", "trial": "trial"},
        "sigma-band": {"eps": "eps", "cells": "N", "trials": "trials"},
    }[subcommand]
    kwargs = {target: get(source) for source, target in keys.items() if get(source) is not None}
    if subcommand == "ilse" and not get("strict"):
        kwargs.pop("strict", None)
    if subcommand == "wegner" and get("allow_few_events"):
        kwargs["require_events"] = False
    return Command(subcommand.replace("-", "_"), **kwargs)


def run(
    config: RunConfig,
    subcommand: str,
    options: Optional[Dict[str, Any]] = None,
    stream: Optional[TextIO] = None,
) -> int:
    """
    run execute one subcommand and write its outputs

    Parameters
    ----------
    config : RunConfig
        validated configuration, output flags included
    subcommand : str
        one of SUBCOMMANDS
    options : Optional[Dict[str, Any]]
        subcommand options as parsed from the command line
    stream : Optional[TextIO]
        destination of CSV tables and the run directory path, stdout by default

    Returns
    -------
    int
        exit status
    """
    options = options or {}
    stream = stream or sys.stdout
    if subcommand not in SUBCOMMANDS:
        logger.error("Unknown subcommand %r", subcommand)
        return EXIT_USAGE

    try:
        command = _command(subcommand, options)
        directory = None
        if subcommand in EXPERIMENTS or config.output.dump_matrices:
            directory = run_directory(config.output.out, subcommand)

        service = ExperimentService(
            config, dump_directory=directory if config.output.dump_matrices else None
        )
        result = service.exposed_batch_commands(command)

        if isinstance(result, ExperimentReport):
            write_report(result, directory, config=config, plot=config.output.plot)
            stream.write(f"{directory}\n")
        elif subcommand == "box":
            rows = [
                {"index": i, "eigenvalue": float(value), "residual": float(residual)}
                for i, (value, residual) in enumerate(zip(result.eigenvalues, result.residuals))
            ]
            write_rows(rows, ["index", "eigenvalue", "residual"], stream)
        elif subcommand == "cell":
            fields = ["eta", "lambda_eta", "residual"] + (["rho_sup"] if options.get("trace") else [])
            write_rows(result, fields, stream)
        else:
            fields = ["sigma", "lambda"] + (
                ["lambda_fem", "relative_error"] if options.get("fem") else []
            )
            write_rows(result, fields, stream)
    except (ValidationError, ParseError) as e:
        logger.error("%s", e)
        return EXIT_INVALID
    except DeltaLocError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_FAILURE
    except ValueError as e:
        logger.error("Invalid input: %s", e)
        return EXIT_INVALID

    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = vars(build_parser().parse_args(argv))
    setup_logging(args.pop("log_level", None))

    subcommand = args.pop("subcommand")
    try:
        config = parse_config(args.pop("config", None)).with_overrides(
            seed=args.pop("seed", None),
            out=args.pop("out", None),
            plot=args.pop("plot", None),
            dump_matrices=args.pop("dump_matrices", None),
            threads=args.pop("threads", None),
        )
    except (ValidationError, ParseError) as e:
        logger.error("%s", e)
        return EXIT_INVALID

    return run(config, subcommand, args)


if __name__ == "__main__":
    raise SystemExit(main())
