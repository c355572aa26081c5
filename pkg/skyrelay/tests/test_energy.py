import math

import numpy as np
import pytest

from skyrelay.energy import (
    ROUTE_LEGS,
    RouteKind,
    RouteLegs,
    blade_profile_power,
    induced_power,
    max_transferable_data,
    optimal_velocity,
    parasite_power,
    power_profile_from_rotor,
    rotor_power,
    route_metrics,
    route_schedule,
)
from skyrelay.exceptions import ConfigError, RouteTopologyError
from skyrelay.params import RotorParams

ROTOR = RotorParams(
    W_total=20.0,
    rho_air=1.225,
    R_rotor=0.4,
    A_disc=0.503,
    v0=4.03,
    U_tip=120.0,
    s_solidity=0.05,
    Omega=300.0,
    k_corr=0.1,
    delta_drag=0.012,
    d0=0.6,
)


def _legs(kind, payload=0.0):
    distances = {name: 100.0 * (i + 1) for i, name in enumerate(ROUTE_LEGS[kind])}
    return RouteLegs(tau_c2u=0.4, tau_u2b=0.1, payload=payload, **distances)


def test_hover_power_is_blade_plus_induced():
    P0 = ROTOR.delta_drag / 8 * ROTOR.rho_air * ROTOR.s_solidity * ROTOR.A_disc
    P0 *= ROTOR.Omega**3 * ROTOR.R_rotor**3
    Pi = (1 + ROTOR.k_corr) * ROTOR.W_total**1.5 / math.sqrt(2 * ROTOR.rho_air * ROTOR.A_disc)
    assert rotor_power(ROTOR, 0.0) == pytest.approx(P0 + Pi)
    assert parasite_power(ROTOR, 0.0) == 0.0


def test_power_terms_at_speed():
    V = 12.0
    assert parasite_power(ROTOR, V) == pytest.approx(
        0.5 * ROTOR.d0 * ROTOR.rho_air * ROTOR.s_solidity * ROTOR.A_disc * V**3
    )
    assert blade_profile_power(ROTOR, V) > blade_profile_power(ROTOR, 0.0)
    assert induced_power(ROTOR, V) < induced_power(ROTOR, 0.0)
    assert rotor_power(ROTOR, V) == pytest.approx(
        blade_profile_power(ROTOR, V) + induced_power(ROTOR, V) + parasite_power(ROTOR, V)
    )


def test_induced_power_scales_with_weight_to_three_halves():
    heavy = ROTOR.model_copy(update={"W_total": 2.0 * ROTOR.W_total})
    assert induced_power(heavy, 0.0) == pytest.approx(2.0**1.5 * induced_power(ROTOR, 0.0))


def test_negative_speed_rejected():
    with pytest.raises(ValueError):
        rotor_power(ROTOR, -1.0)


def test_optimal_velocity_minimizes_energy_per_metre():
    v_star = optimal_velocity(ROTOR)
    grid = np.linspace(1.0, 30.0, 5801)
    per_metre = rotor_power(ROTOR, grid) / grid
    assert rotor_power(ROTOR, v_star) / v_star <= per_metre.min() + 1e-9
    assert 1.0 < v_star < 30.0


def test_rotor_profile_uses_lighter_empty_craft():
    profile = power_profile_from_rotor(ROTOR, package_weight=9.80665, comm_power=5.0)
    assert profile.p_sp - profile.p_s == pytest.approx(
        rotor_power(ROTOR, 0.0) - (profile.p_s - 5.0)
    )
    assert profile.p_sp > profile.p_s
    assert profile.p_mp > profile.p_m
    assert profile.rotor == ROTOR


def test_rotor_profile_rejects_heavy_package():
    with pytest.raises(ConfigError):
        power_profile_from_rotor(ROTOR, package_weight=25.0)


def test_table1_powers_are_used_verbatim(table1):
    power = table1.power
    assert (power.p_m, power.p_mp, power.p_s, power.p_sp) == (159.0, 193.0, 178.0, 252.0)
    assert power.rotor is None


@pytest.mark.parametrize("kind", list(RouteKind))
def test_metrics_equal_schedule_sums(table1, kind):
    legs = _legs(kind, payload=500.0)
    metrics = route_metrics(kind, legs, table1.power)
    phases = route_schedule(kind, legs, table1.power)
    assert metrics.T_total == pytest.approx(math.fsum(p.duration for p in phases))
    assert metrics.E_total == pytest.approx(math.fsum(p.duration * p.power for p in phases))


@pytest.mark.parametrize("kind", list(RouteKind))
def test_delivery_time_is_time_before_drop(table1, kind):
    legs = _legs(kind, payload=500.0)
    metrics = route_metrics(kind, legs, table1.power)
    phases = route_schedule(kind, legs, table1.power)
    assert metrics.T_delivery == pytest.approx(
        math.fsum(p.duration for p in phases if p.before_delivery)
    )


def test_route1_time_and_energy_by_hand(table1):
    power = table1.power
    legs = RouteLegs(
        tau_c2u=0.5,
        tau_u2b=0.2,
        payload=100.0,
        d_sh1=300.0,
        d_h1h2=400.0,
        d_h2d=500.0,
        d_sd=1000.0,
    )
    m = route_metrics(RouteKind.ROUTE1, legs, power)
    loaded = 1200.0 / power.v_p
    assert m.T_total == pytest.approx(loaded + 50.0 + 20.0 + 1000.0 / power.v)
    assert m.E_total == pytest.approx(
        loaded * power.p_mp + 70.0 * power.p_sp + 1000.0 / power.v * power.p_m
    )
    assert m.T_delivery == pytest.approx(loaded + 70.0)


def test_missing_leg_is_topology_error(table1):
    legs = RouteLegs(tau_c2u=0.5, tau_u2b=0.2, payload=0.0, d_sh1=1.0)
    with pytest.raises(RouteTopologyError, match="route 1"):
        route_metrics(RouteKind.ROUTE1, legs, table1.power)


@pytest.mark.parametrize("kind", list(RouteKind))
def test_max_transferable_data_exhausts_battery(table1, kind):
    legs = _legs(kind)
    ceiling = max_transferable_data(kind, legs, table1.power, table1.B_max)
    assert ceiling.feasible is True
    assert ceiling.m_max > 0
    spent = route_metrics(kind, legs.with_payload(ceiling.m_max), table1.power).E_total
    assert spent == pytest.approx(table1.B_max, rel=1e-9)


def test_max_transferable_data_infeasible_when_travel_overdraws(table1):
    legs = _legs(RouteKind.ROUTE3)
    ceiling = max_transferable_data(RouteKind.ROUTE3, legs, table1.power, 1.0)
    assert ceiling.feasible is False
    assert ceiling.m_max == 0.0


def test_route_metrics_broadcast_over_candidates(table1):
    d = np.array([100.0, 200.0, 300.0])
    legs = RouteLegs(
        tau_c2u=0.4,
        tau_u2b=np.array([0.1, 0.2, 0.3]),
        payload=np.array([10.0, 20.0, 30.0]),
        d_sd=1000.0,
        d_dh1=d,
        d_h1h2=d,
        d_sh2=d,
    )
    batch = route_metrics(RouteKind.ROUTE3, legs, table1.power)
    for i in range(3):
        single = RouteLegs(
            tau_c2u=0.4,
            tau_u2b=float(legs.tau_u2b[i]),
            payload=float(legs.payload[i]),
            d_sd=1000.0,
            d_dh1=float(d[i]),
            d_h1h2=float(d[i]),
            d_sh2=float(d[i]),
        )
        one = route_metrics(RouteKind.ROUTE3, single, table1.power)
        assert batch.T_total[i] == pytest.approx(one.T_total)
        assert batch.E_total[i] == pytest.approx(one.E_total)
