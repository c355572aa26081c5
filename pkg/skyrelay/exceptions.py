# skyrelay/exceptions.py
from __future__ import annotations

import logging
from typing import Any, Dict

from django.conf import settings

logger = logging.getLogger(__name__)


class SimulationError(Exception):
    """
    Base class for every failure raised by the simulation modules.
    """

    pass


class ConfigError(SimulationError):
    """
    Parameter document is missing a key, has an unknown key (strict mode),
    or violates a physical invariant.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class GeometryError(SimulationError):
    """Degenerate geometry, e.g. a local frame with coincident anchor points."""

    pass


class ChannelError(SimulationError):
    """
    Channel statistic could not be evaluated (wrong link kind for the
    operation, quadrature failure, finite-difference step underflow).
    """

    pass


class RouteTopologyError(SimulationError):
    """RouteLegs do not carry the legs the requested route needs."""

    pass


class InfeasibleTripError(SimulationError):
    """
    The package cannot be delivered at all: travel energy alone exceeds the
    battery budget.
    """

    def __init__(self, travel_energy: float, budget: float):
        super().__init__(
            f"package delivery needs {travel_energy:.6g} J but battery holds {budget:.6g} J"
        )
        self.travel_energy = travel_energy
        self.budget = budget


def error_record(exc: BaseException, context: Dict[str, Any] | None = None) -> Dict[str, Any]:
    """
    Machine-readable error record written by management commands.

    Domain errors always expose their message; anything else only does so
    when DEBUG is on.
    """
    context = context or {}

    logger.error(
        "Simulation command failed",
        exc_info=(type(exc), exc, exc.__traceback__),
        extra={
            "command": context.get("command"),
            "error_type": type(exc).__name__,
        },
    )

    record: Dict[str, Any] = {
        "detail": "Simulation failed",
        "command": context.get("command"),
        "error_type": type(exc).__name__,
    }
    if isinstance(exc, SimulationError) or settings.DEBUG:
        record["error"] = str(exc)
    field = getattr(exc, "field", None)
    if field:
        record["field"] = field
    return record
