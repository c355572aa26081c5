# skyrelay/energy.py

"""
Rotary-wing power model and the time/energy bookkeeping of the four trip
topologies.

Distances in RouteLegs may be floats or numpy arrays of equal shape; all
route formulas broadcast, which lets the planner score many candidate
radii in one call.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import List, Optional

import numpy as np
from django.db import models
from scipy import optimize

from skyrelay.exceptions import ConfigError, RouteTopologyError
from skyrelay.params import PowerProfile, RotorParams

logger = logging.getLogger(__name__)

DEFAULT_MAX_SPEED = 30.0
SPEED_GRID_STEP = 0.05


class RouteKind(models.IntegerChoices):
    ROUTE1 = 1, "S->IoT->TBS->D->S"
    ROUTE2 = 2, "S->IoT->D->TBS->S"
    ROUTE3 = 3, "S->D->IoT->TBS->S"
    ROUTE4 = 4, "S->IoT->S->D->TBS->S"


@dataclass(frozen=True)
class RouteLegs:
    """
    Leg distances (m) for one route, link times (s per bit/Hz) and payload
    (bit/Hz). Only the legs the route flies are set.
    """

    tau_c2u: float
    tau_u2b: float
    payload: float
    d_sh1: Optional[float] = None
    d_h1h2: Optional[float] = None
    d_h2d: Optional[float] = None
    d_sd: Optional[float] = None
    d_h1d: Optional[float] = None
    d_h2s: Optional[float] = None
    d_sh2: Optional[float] = None
    d_dh1: Optional[float] = None

    def with_payload(self, payload) -> "RouteLegs":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values["payload"] = payload
        return RouteLegs(**values)


@dataclass(frozen=True)
class RouteMetrics:
    T_total: float
    E_total: float
    T_delivery: float


@dataclass(frozen=True)
class Phase:
    name: str
    duration: float
    power: float
    before_delivery: bool


@dataclass(frozen=True)
class DataCeiling:
    """Largest payload (bit/Hz) the remaining battery can move; ``feasible`` False when travel alone overdraws it."""

    m_max: float
    feasible: bool


ROUTE_LEGS = {
    RouteKind.ROUTE1: ("d_sh1", "d_h1h2", "d_h2d", "d_sd"),
    RouteKind.ROUTE2: ("d_sh1", "d_h1d", "d_h2d", "d_h2s"),
    RouteKind.ROUTE3: ("d_sd", "d_dh1", "d_h1h2", "d_sh2"),
    RouteKind.ROUTE4: ("d_sh1", "d_sd", "d_sh2", "d_h2d"),
}


# ---------------------------------------------------------------------------
# Rotor power
# ---------------------------------------------------------------------------


def blade_profile_power(rotor: RotorParams, V):
    P0 = (
        rotor.delta_drag / 8.0
        * rotor.rho_air
        * rotor.s_solidity
        * rotor.A_disc
        * rotor.Omega**3
        * rotor.R_rotor**3
    )
    return P0 * (1.0 + 3.0 * np.square(V) / rotor.U_tip**2)


def induced_power(rotor: RotorParams, V):
    Pi = (1.0 + rotor.k_corr) * rotor.W_total**1.5 / math.sqrt(2.0 * rotor.rho_air * rotor.A_disc)
    V2 = np.square(V)
    v02 = rotor.v0**2
    return Pi * np.sqrt(np.sqrt(1.0 + V2 * V2 / (4.0 * v02 * v02)) - V2 / (2.0 * v02))


def parasite_power(rotor: RotorParams, V):
    return 0.5 * rotor.d0 * rotor.rho_air * rotor.s_solidity * rotor.A_disc * np.power(V, 3)


def rotor_power(rotor: RotorParams, V):
    """Propulsion power (W) at forward speed V (m/s); V = 0 is hover."""
    if np.any(np.asarray(V) < 0):
        raise ValueError("speed must be >= 0")
    out = blade_profile_power(rotor, V) + induced_power(rotor, V) + parasite_power(rotor, V)
    return float(out) if np.ndim(V) == 0 else out


def optimal_velocity(rotor: RotorParams, V_max: float = DEFAULT_MAX_SPEED) -> float:
    """
    Cruise speed minimizing energy per metre p(V)/V on (0, V_max]:
    dense grid, then golden-section inside the best grid bracket.
    """
    grid = np.arange(SPEED_GRID_STEP, V_max + 1e-9, SPEED_GRID_STEP)
    per_metre = rotor_power(rotor, grid) / grid
    i = int(np.argmin(per_metre))
    if i == 0 or i == len(grid) - 1:
        logger.warning(
            "Energy per metre has no interior minimum on (0, %.1f]; using grid speed %.2f",
            V_max,
            grid[i],
            extra={"V_max": V_max},
        )
        return float(grid[i])

    res = optimize.minimize_scalar(
        lambda V: rotor_power(rotor, V) / V,
        bracket=(grid[i - 1], grid[i], grid[i + 1]),
        method="golden",
        tol=1e-6,
    )
    return float(res.x)


def power_profile_from_rotor(
    rotor: RotorParams, package_weight: float, comm_power: float = 0.0
) -> PowerProfile:
    """
    Aggregate powers for a rotor airframe. The loaded craft uses ``rotor``
    as given; the empty craft drops ``package_weight`` (N) and scales the
    induced velocity with sqrt(weight). Service power is hover plus comms.
    """
    empty_weight = rotor.W_total - package_weight
    if empty_weight <= 0:
        raise ConfigError(
            f"package weight {package_weight:.3g} N exceeds total weight {rotor.W_total:.3g} N",
            field="power.rotor.W_total",
        )
    empty = rotor.model_copy(
        update={
            "W_total": empty_weight,
            "v0": rotor.v0 * math.sqrt(empty_weight / rotor.W_total),
        }
    )
    v_p = optimal_velocity(rotor)
    v = optimal_velocity(empty)
    return PowerProfile(
        p_m=rotor_power(empty, v),
        p_mp=rotor_power(rotor, v_p),
        p_s=rotor_power(empty, 0.0) + comm_power,
        p_sp=rotor_power(rotor, 0.0) + comm_power,
        v=v,
        v_p=v_p,
        rotor=rotor,
        comm_power=comm_power,
    )


# ---------------------------------------------------------------------------
# Routes
# ---------------------------------------------------------------------------


def _check_legs(kind: RouteKind, legs: RouteLegs) -> None:
    missing = [name for name in ROUTE_LEGS[kind] if getattr(legs, name) is None]
    if missing:
        raise RouteTopologyError(f"route {int(kind)} needs legs {', '.join(missing)}")


def route_metrics(kind: RouteKind, legs: RouteLegs, power: PowerProfile) -> RouteMetrics:
    """
    Round-trip time, energy and delivery time of one route. Each branch is
    the route's own time/energy formula.
    """
    kind = RouteKind(kind)
    _check_legs(kind, legs)
    v, v_p = power.v, power.v_p
    T_c2u = legs.payload * legs.tau_c2u
    T_u2b = legs.payload * legs.tau_u2b

    if kind == RouteKind.ROUTE1:
        loaded = (legs.d_sh1 + legs.d_h1h2 + legs.d_h2d) / v_p
        T = loaded + T_c2u + T_u2b + legs.d_sd / v
        E = loaded * power.p_mp + (T_c2u + T_u2b) * power.p_sp + legs.d_sd / v * power.p_m
        T_delivery = loaded + T_c2u + T_u2b
    elif kind == RouteKind.ROUTE2:
        loaded = (legs.d_sh1 + legs.d_h1d) / v_p
        empty = (legs.d_h2d + legs.d_h2s) / v
        T = loaded + T_c2u + T_u2b + empty
        E = loaded * power.p_mp + T_c2u * power.p_sp + T_u2b * power.p_s + empty * power.p_m
        T_delivery = loaded + T_c2u
    elif kind == RouteKind.ROUTE3:
        empty = (legs.d_sh2 + legs.d_h1h2 + legs.d_dh1) / v
        T = empty + T_c2u + T_u2b + legs.d_sd / v_p
        E = empty * power.p_m + (T_c2u + T_u2b) * power.p_s + legs.d_sd / v_p * power.p_mp
        T_delivery = legs.d_sd / v_p
    else:
        empty = (2.0 * legs.d_sh1 + legs.d_sh2 + legs.d_h2d) / v
        T = empty + T_c2u + T_u2b + legs.d_sd / v_p
        E = empty * power.p_m + (T_c2u + T_u2b) * power.p_s + legs.d_sd / v_p * power.p_mp
        T_delivery = 2.0 * legs.d_sh1 / v + T_c2u + legs.d_sd / v_p

    return RouteMetrics(T_total=T, E_total=E, T_delivery=T_delivery)


def route_schedule(kind: RouteKind, legs: RouteLegs, power: PowerProfile) -> List[Phase]:
    """The route as ordered (duration, power) phases, in flight order."""
    kind = RouteKind(kind)
    _check_legs(kind, legs)
    v, v_p = power.v, power.v_p
    T_c2u = legs.payload * legs.tau_c2u
    T_u2b = legs.payload * legs.tau_u2b

    if kind == RouteKind.ROUTE1:
        return [
            Phase("S->H1", legs.d_sh1 / v_p, power.p_mp, True),
            Phase("collect", T_c2u, power.p_sp, True),
            Phase("H1->H2", legs.d_h1h2 / v_p, power.p_mp, True),
            Phase("upload", T_u2b, power.p_sp, True),
            Phase("H2->D", legs.d_h2d / v_p, power.p_mp, True),
            Phase("D->S", legs.d_sd / v, power.p_m, False),
        ]
    if kind == RouteKind.ROUTE2:
        return [
            Phase("S->H1", legs.d_sh1 / v_p, power.p_mp, True),
            Phase("collect", T_c2u, power.p_sp, True),
            Phase("H1->D", legs.d_h1d / v_p, power.p_mp, True),
            Phase("D->H2", legs.d_h2d / v, power.p_m, False),
            Phase("upload", T_u2b, power.p_s, False),
            Phase("H2->S", legs.d_h2s / v, power.p_m, False),
        ]
    if kind == RouteKind.ROUTE3:
        return [
            Phase("S->D", legs.d_sd / v_p, power.p_mp, True),
            Phase("D->H1", legs.d_dh1 / v, power.p_m, False),
            Phase("collect", T_c2u, power.p_s, False),
            Phase("H1->H2", legs.d_h1h2 / v, power.p_m, False),
            Phase("upload", T_u2b, power.p_s, False),
            Phase("H2->S", legs.d_sh2 / v, power.p_m, False),
        ]
    return [
        Phase("S->H1", legs.d_sh1 / v, power.p_m, True),
        Phase("collect", T_c2u, power.p_s, True),
        Phase("H1->S", legs.d_sh1 / v, power.p_m, True),
        Phase("S->D", legs.d_sd / v_p, power.p_mp, True),
        Phase("D->H2", legs.d_h2d / v, power.p_m, False),
        Phase("upload", T_u2b, power.p_s, False),
        Phase("H2->S", legs.d_sh2 / v, power.p_m, False),
    ]


def _comm_powers(kind: RouteKind, power: PowerProfile):
    if kind == RouteKind.ROUTE1:
        return power.p_sp, power.p_sp
    if kind == RouteKind.ROUTE2:
        return power.p_sp, power.p_s
    return power.p_s, power.p_s


def max_transferable_data(
    kind: RouteKind, legs: RouteLegs, power: PowerProfile, B_max: float
) -> DataCeiling:
    """
    Payload that exhausts the battery on this route:
    (B_max - travel energy) / (tau_c2u * p_comm1 + tau_u2b * p_comm2).
    """
    kind = RouteKind(kind)
    travel = route_metrics(kind, legs.with_payload(0.0), power).E_total
    p1, p2 = _comm_powers(kind, power)
    per_unit = legs.tau_c2u * p1 + legs.tau_u2b * p2
    remaining = B_max - travel
    feasible = remaining >= 0
    m_max = np.where(feasible, np.maximum(remaining, 0.0) / per_unit, 0.0)
    if np.ndim(m_max) == 0:
        return DataCeiling(float(m_max), bool(feasible))
    return DataCeiling(m_max, feasible)
