"""The ulocflow services."""
from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any

from .config_flow import load_config
from .const import DOMAIN
from .const import EXIT_NUMERICAL
from .const import EXIT_OK
from .const import SERVICE_CHECK_KERNELS
from .const import SERVICE_RUN
from .const import SERVICE_VERIFY
from .coordinator import VERIFY_CSV_HEADER
from .coordinator import ExperimentCoordinator
from .coordinator import verify_solution
from .kernels import BOUND_CSV_HEADER
from .kernels import run_kernel_suites
from .storage import write_csv

LOGGER = logging.getLogger(__name__)


@dataclass
class ServiceCall:
    """A named request with its arguments."""

    service: str
    data: dict[str, Any] = field(default_factory=dict)


class ServiceRegistry:
    """Map service names to handlers returning an exit code."""

    def __init__(self) -> None:
        """Initialize an empty registry."""
        self._services: dict[tuple[str, str], Callable[[ServiceCall], int]] = {}

    def register(self, domain: str, service: str, handler: Callable[[ServiceCall], int]) -> None:
        """Register a handler."""
        self._services[(domain, service)] = handler

    def has_service(self, domain: str, service: str) -> bool:
        """Return whether a handler is registered."""
        return (domain, service) in self._services

    def call(self, domain: str, call: ServiceCall) -> int:
        """Dispatch a call to its handler."""
        handler = self._services.get((domain, call.service))
        if handler is None:
            raise KeyError(f"Unknown service {domain}.{call.service}")
        return handler(call)


def setup_services(services: ServiceRegistry) -> None:
    """Service handler setup."""

    def run(call: ServiceCall) -> int:
        config = load_config(call.data["config"])
        ExperimentCoordinator(config, call.data.get("output")).run()
        return EXIT_OK

    services.register(DOMAIN, SERVICE_RUN, run)

    def check_kernels(call: ServiceCall) -> int:
        reports = run_kernel_suites(call.data.get("n", 64))
        output = call.data.get("output")
        if output is not None:
            write_csv(Path(output), BOUND_CSV_HEADER, [r.csv_row() for r in reports])
        failed = [r.check_name for r in reports if not r.passed]
        if failed:
            LOGGER.error(f"Kernel checks failed: {', '.join(failed)}")
            return EXIT_NUMERICAL
        LOGGER.info(f"All {len(reports)} kernel checks passed")
        return EXIT_OK

    services.register(DOMAIN, SERVICE_CHECK_KERNELS, check_kernels)

    def verify(call: ServiceCall) -> int:
        config = load_config(call.data["config"])
        solution = Path(call.data["solution"])
        report = verify_solution(solution, config, call.data.get("eps"))
        write_csv(solution / "verify.csv", VERIFY_CSV_HEADER, report.csv_rows())
        LOGGER.info(f"Verification {'passed' if report.passed else 'found failing conditions'}")
        return EXIT_OK

    services.register(DOMAIN, SERVICE_VERIFY, verify)
