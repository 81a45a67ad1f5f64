"""Command line entry point."""
from __future__ import annotations

import argparse
import logging
import sys

import colorlog

from . import call_service
from .const import SERVICE_CHECK_KERNELS
from .const import SERVICE_RUN
from .const import SERVICE_VERIFY
from .exceptions import UlocflowError

_LOGGER = logging.getLogger(__name__)


def setup_logging(verbose: bool) -> None:
    """Attach a colored handler to the root logger."""
    handler = colorlog.StreamHandler()
    handler.setFormatter(
        colorlog.ColoredFormatter(
            "%(log_color)s%(asctime)s %(levelname)-8s%(reset)s %(name)s: %(message)s",
            log_colors={
                "DEBUG": "cyan",
                "INFO": "green",
                "WARNING": "yellow",
                "ERROR": "red",
                "CRITICAL": "bold_red",
            },
        )
    )
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser."""
    parser = argparse.ArgumentParser(prog="ulocflow")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    sub = parser.add_subparsers(dest="service", required=True)

    run = sub.add_parser(SERVICE_RUN, help="run every stage of an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--output", help="override output.dir")

    kernels = sub.add_parser(SERVICE_CHECK_KERNELS, help="run the kernel bound suites")
    kernels.add_argument("--n", type=int, default=64)
    kernels.add_argument("--output", help="write bounds CSV here")

    verify = sub.add_parser(SERVICE_VERIFY, help="check a stored solution")
    verify.add_argument("--solution", required=True)
    verify.add_argument("--config", required=True)
    verify.add_argument("--eps", type=float)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, dispatch the service and return its exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    data = {key: value for key, value in vars(args).items() if key not in ("service", "verbose")}
    data = {key: value for key, value in data.items() if value is not None}
    try:
        return call_service(args.service, **data)
    except UlocflowError as err:
        _LOGGER.error(err)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
