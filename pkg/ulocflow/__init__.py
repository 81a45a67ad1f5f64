"""Numerical lab for uniformly-local Navier-Stokes solutions."""
from __future__ import annotations

from .const import DOMAIN
from .services import ServiceCall
from .services import ServiceRegistry
from .services import setup_services

__version__ = "0.1.0"


def setup_registry() -> ServiceRegistry:
    """Return a registry with every ulocflow service registered."""
    services = ServiceRegistry()
    setup_services(services)
    return services


def call_service(service: str, **data) -> int:
    """Run one service and return its exit code."""
    return setup_registry().call(DOMAIN, ServiceCall(service, data))
