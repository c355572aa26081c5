# skyrelay/planner.py

"""
Hover-point geometry and the conditional trip optimizer.

For fixed IoT cluster and TBS locations the planner scans hover radii
R_c2u (outer loop) and R_u2b (inner loop) on a grid, places the hover
points that minimise each route's detour, and keeps the best plan:
if some candidate moves all M bit/Hz, the fastest of those; otherwise the
one that moves the most data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from skyrelay.channel import Fixed, per_unit_transmission_time
from skyrelay.energy import (
    RouteKind,
    RouteLegs,
    max_transferable_data,
    route_metrics,
)
from skyrelay.exceptions import InfeasibleTripError
from skyrelay.geometry import (
    DiskOffsetLaw,
    Point2,
    distance_to_segment,
    from_local_frame,
    to_local_frame,
)
from skyrelay.params import SystemParams

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
GOLDEN_ITERATIONS = 48
ALL_ROUTES: Tuple[RouteKind, ...] = (
    RouteKind.ROUTE1,
    RouteKind.ROUTE2,
    RouteKind.ROUTE3,
    RouteKind.ROUTE4,
)


@dataclass(frozen=True)
class HoverSolution:
    H: Point2
    path_len: float
    detour: float


@dataclass(frozen=True)
class TripPlan:
    route: Optional[RouteKind]
    H1: Optional[Point2]
    H2: Optional[Point2]
    R_c2u: float
    R_u2b: float
    T_total: float
    T_delivery: float
    E_total: float
    M_t_over_bw: float
    feasible_full_delivery: bool
    legs: Optional[RouteLegs] = None


# ---------------------------------------------------------------------------
# Hover points
# ---------------------------------------------------------------------------


def _circle_lengths(phi: np.ndarray, cx: float, cy: float, d: np.ndarray, bx: float, by: float):
    """|H - A| + |H - B| for H = C + d (cos phi, sin phi), A at the origin (broadcasts)."""
    hx = cx + d * np.cos(phi)
    hy = cy + d * np.sin(phi)
    return np.hypot(hx, hy) + np.hypot(hx - bx, hy - by)


def hover_points(
    A: Point2, B: Point2, C: Point2, d: Sequence[float], grid: int = 4096
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched hover search: for every radius in ``d`` the point H
    on the circle |H - C| = d minimising |A - H| + |H - B|.

    Works in the frame with origin A and x-axis along A->B (global axes
    when A = B). A circle crossing segment AB gives zero detour at the
    crossing nearest A; otherwise a ``grid``-point angular scan picks the
    best bracket and golden-section refines it. Returns (H as (k, 2) global
    coordinates, path lengths).
    """
    d = np.asarray(d, dtype=float)
    k = d.shape[0]
    degenerate = A == B
    if degenerate:
        cx, cy = C.x - A.x, C.y - A.y
        bx, by = 0.0, 0.0
    else:
        local = to_local_frame(A, B, C)
        cx, cy = local.x, local.y
        bx, by = A.distance_to(B), 0.0

    hx = np.empty(k)
    hy = np.empty(k)
    lengths = np.empty(k)

    # circle meets the segment: zero detour, first crossing from A
    crossing = np.zeros(k, dtype=bool)
    if not degenerate:
        reach = d * d - cy * cy
        ok = reach >= 0
        half = np.sqrt(np.where(ok, reach, 0.0))
        x1, x2 = cx - half, cx + half
        in1 = ok & (x1 >= 0) & (x1 <= bx)
        in2 = ok & (x2 >= 0) & (x2 <= bx)
        crossing = in1 | in2
        hx[crossing] = np.where(in1, x1, x2)[crossing]
        hy[crossing] = 0.0
        lengths[crossing] = bx

    todo = ~crossing
    if np.any(todo):
        dd = d[todo]
        step = 2.0 * math.pi / grid
        phi = np.arange(grid) * step
        scan = _circle_lengths(phi[None, :], cx, cy, dd[:, None], bx, by)
        best = np.argmin(scan, axis=1)
        best_val = scan[np.arange(len(dd)), best]

        # golden-section on [best - step, best + step], one bracket per radius;
        # vectorised over all radii at once, which minimize_scalar cannot batch
        lo = phi[best] - step
        hi = phi[best] + step
        for _ in range(GOLDEN_ITERATIONS):
            p1 = hi - GOLDEN * (hi - lo)
            p2 = lo + GOLDEN * (hi - lo)
            left = _circle_lengths(p1, cx, cy, dd, bx, by) < _circle_lengths(p2, cx, cy, dd, bx, by)
            hi = np.where(left, p2, hi)
            lo = np.where(left, lo, p1)
        phi_ref = 0.5 * (lo + hi)
        ref_val = _circle_lengths(phi_ref, cx, cy, dd, bx, by)
        phi_opt = np.where(ref_val <= best_val, phi_ref, phi[best])

        hx[todo] = cx + dd * np.cos(phi_opt)
        hy[todo] = cy + dd * np.sin(phi_opt)
        lengths[todo] = np.minimum(ref_val, best_val)

    if degenerate:
        H = np.column_stack([hx + A.x, hy + A.y])
    else:
        H = np.array(
            [from_local_frame(A, B, Point2(float(x), float(y))).as_array() for x, y in zip(hx, hy)]
        ).reshape(k, 2)
    return H, lengths


def optimal_hover_point(A: Point2, B: Point2, C: Point2, d: float, grid: int = 4096) -> HoverSolution:
    """Point H on the circle |H - C| = d with the shortest A -> H -> B path."""
    if d < 0:
        raise ValueError(f"hover radius must be >= 0, got {d}")
    if d == 0:
        path_len = A.distance_to(C) + C.distance_to(B)
        return HoverSolution(C, path_len, path_len - A.distance_to(B))
    H, lengths = hover_points(A, B, C, [d], grid)
    path_len = float(lengths[0])
    return HoverSolution(Point2.from_array(H[0]), path_len, path_len - A.distance_to(B))


# ---------------------------------------------------------------------------
# Trip planning
# ---------------------------------------------------------------------------


def _norm(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return np.hypot(P[..., 0] - Q[..., 0], P[..., 1] - Q[..., 1])


def _radius_grid(limit: float, step: float) -> np.ndarray:
    n = int(math.floor(limit / step + 1e-9))
    if n < 1:
        return np.array([limit])
    return np.arange(1, n + 1) * step


def _usable_times(link, laws: Iterable, params: SystemParams) -> Tuple[List[float], List]:
    """Link times along increasing radii, stopping at the first capped one."""
    taus: List[float] = []
    kept = []
    for law in laws:
        lt = per_unit_transmission_time(link, law, params.run.snr_floor, params.run.tau_cap)
        if lt.capped:
            break
        taus.append(lt.tau)
        kept.append(law)
    return taus, kept


def pure_delivery_plan(S: Point2, D: Point2, params: SystemParams) -> TripPlan:
    """Straight S -> D -> S trip without the data task."""
    power = params.power
    L2 = S.distance_to(D)
    out, back = L2 / power.v_p, L2 / power.v
    E = out * power.p_mp + back * power.p_m
    if E > params.B_max:
        raise InfeasibleTripError(E, params.B_max)
    return TripPlan(
        route=None,
        H1=None,
        H2=None,
        R_c2u=0.0,
        R_u2b=0.0,
        T_total=out + back,
        T_delivery=out,
        E_total=E,
        M_t_over_bw=0.0,
        feasible_full_delivery=params.M_over_bw == 0,
    )


def _anchors(kind: RouteKind, S: Point2, D: Point2) -> Tuple[Point2, Point2]:
    """Segment on which H1 is placed for ``kind``."""
    if kind in (RouteKind.ROUTE1, RouteKind.ROUTE2):
        return S, D
    if kind == RouteKind.ROUTE3:
        return D, S
    return S, S


def _h2_anchors(kind: RouteKind, S: Point2, D: Point2, H1: Point2) -> Tuple[Point2, Point2]:
    if kind == RouteKind.ROUTE1:
        return H1, D
    if kind == RouteKind.ROUTE3:
        return H1, S
    return D, S


def _legs_for(
    kind: RouteKind,
    S: np.ndarray,
    D: np.ndarray,
    H1: np.ndarray,
    H2: np.ndarray,
    tau_c2u: float,
    tau_u2b: np.ndarray,
) -> RouteLegs:
    d_sd = float(_norm(S, D))
    if kind == RouteKind.ROUTE1:
        return RouteLegs(
            tau_c2u=tau_c2u,
            tau_u2b=tau_u2b,
            payload=0.0,
            d_sh1=_norm(S, H1),
            d_h1h2=_norm(H1, H2),
            d_h2d=_norm(H2, D),
            d_sd=d_sd,
        )
    if kind == RouteKind.ROUTE2:
        return RouteLegs(
            tau_c2u=tau_c2u,
            tau_u2b=tau_u2b,
            payload=0.0,
            d_sh1=_norm(S, H1),
            d_h1d=_norm(H1, D),
            d_h2d=_norm(H2, D),
            d_h2s=_norm(H2, S),
        )
    if kind == RouteKind.ROUTE3:
        return RouteLegs(
            tau_c2u=tau_c2u,
            tau_u2b=tau_u2b,
            payload=0.0,
            d_sd=d_sd,
            d_dh1=_norm(D, H1),
            d_h1h2=_norm(H1, H2),
            d_sh2=_norm(S, H2),
        )
    return RouteLegs(
        tau_c2u=tau_c2u,
        tau_u2b=tau_u2b,
        payload=0.0,
        d_sh1=_norm(S, H1),
        d_sd=d_sd,
        d_sh2=_norm(S, H2),
        d_h2d=_norm(H2, D),
    )


def _pick(legs: RouteLegs, i: int) -> RouteLegs:
    values = {}
    for name, value in legs.__dict__.items():
        if isinstance(value, np.ndarray) and value.ndim > 0:
            values[name] = float(value[i])
        elif value is None:
            values[name] = None
        else:
            values[name] = float(value)
    return RouteLegs(**values)


def _search(
    S: Point2,
    D: Point2,
    iot: Point2,
    tbs: Point2,
    params: SystemParams,
    routes: Sequence[RouteKind],
    step: float,
) -> TripPlan:
    baseline = pure_delivery_plan(S, D, params)
    M = params.M_over_bw
    if M == 0:
        return baseline

    power = params.power
    grid = params.run.hover_grid
    S_xy, D_xy, tbs_xy = S.as_array(), D.as_array(), tbs.as_array()

    R_max = float(distance_to_segment(iot.as_array()[None, :], S_xy, D_xy)[0])
    c2u_radii = _radius_grid(max(R_max, params.r_c), step)
    tau_c2u, c2u_laws = _usable_times(
        params.links.i2u, (DiskOffsetLaw(float(R), params.r_c) for R in c2u_radii), params
    )
    if not c2u_laws:
        logger.info("Every collection radius is beyond the link-time cap; delivering only")
        return baseline

    best_full: Optional[Tuple[tuple, TripPlan]] = None
    best_partial: Optional[Tuple[tuple, TripPlan]] = None

    for law, t_c2u in zip(c2u_laws, tau_c2u):
        R_c2u = law.R_center
        for kind in routes:
            A1, B1 = _anchors(kind, S, D)
            h1 = optimal_hover_point(A1, B1, iot, R_c2u, grid).H
            A2, B2 = _h2_anchors(kind, S, D, h1)

            anchor_reach = max(tbs.distance_to(p) for p in (S, D, h1))
            u2b_radii = _radius_grid(anchor_reach, step)
            tau_u2b, u2b_laws = _usable_times(
                params.links.u2b, (Fixed(float(R)) for R in u2b_radii), params
            )
            if not u2b_laws:
                continue
            radii = np.array([law2.R for law2 in u2b_laws])
            H2, _ = hover_points(A2, B2, tbs, radii, grid)

            legs = _legs_for(kind, S_xy, D_xy, h1.as_array(), H2, t_c2u, np.array(tau_u2b))
            ceiling = max_transferable_data(kind, legs, power, params.B_max)
            shape = radii.shape
            m_max = np.broadcast_to(ceiling.m_max, shape)
            feasible = np.broadcast_to(ceiling.feasible, shape)

            full = feasible & (m_max >= M)
            payload = np.where(full, M, m_max)
            metrics = route_metrics(kind, legs.with_payload(payload), power)
            T = np.broadcast_to(metrics.T_total, shape)
            E = np.broadcast_to(metrics.E_total, shape)
            T_del = np.broadcast_to(metrics.T_delivery, shape)

            for i in np.flatnonzero(feasible):
                plan_key_full = (float(T[i]), float(E[i]), int(kind))
                plan_key_partial = (-float(m_max[i]), float(T[i]), float(E[i]), int(kind))
                key = plan_key_full if full[i] else plan_key_partial
                current = best_full if full[i] else best_partial
                if current is not None and not key < current[0]:
                    continue
                plan = TripPlan(
                    route=RouteKind(kind),
                    H1=h1,
                    H2=Point2.from_array(H2[i]),
                    R_c2u=float(R_c2u),
                    R_u2b=float(radii[i]),
                    T_total=float(T[i]),
                    T_delivery=float(T_del[i]),
                    E_total=float(E[i]),
                    M_t_over_bw=float(payload[i]),
                    feasible_full_delivery=bool(full[i]),
                    legs=_pick(legs.with_payload(payload), i),
                )
                if full[i]:
                    best_full = (key, plan)
                else:
                    best_partial = (key, plan)

    if best_full is not None:
        return best_full[1]
    if best_partial is not None and best_partial[1].M_t_over_bw > 0:
        return best_partial[1]
    logger.info("No route can afford the data task; delivering only")
    return baseline


def plan_route(
    S: Point2,
    D: Point2,
    L_IoT: Point2,
    L_TBS: Point2,
    params: SystemParams,
    step: float | None = None,
    routes: Sequence[RouteKind] = ALL_ROUTES,
) -> TripPlan:
    """
    Best trip for the given cluster and TBS locations over all routes and
    grid radii. Raises InfeasibleTripError when even the bare delivery
    overdraws the battery.
    """
    return _search(S, D, L_IoT, L_TBS, params, routes, step or params.run.grid_step_m)


def deliver_first_plan(
    S: Point2,
    D: Point2,
    L_IoT: Point2,
    L_TBS: Point2,
    params: SystemParams,
    step: float | None = None,
) -> TripPlan:
    """Baseline that drops the package first (route 3 only)."""
    return _search(
        S, D, L_IoT, L_TBS, params, (RouteKind.ROUTE3,), step or params.run.grid_step_m
    )


def plan_record(plan: TripPlan) -> Dict[str, object]:
    """Flat record of a plan for CSV/JSON output."""
    return {
        "route": int(plan.route) if plan.route is not None else 0,
        "h1_x": plan.H1.x if plan.H1 else None,
        "h1_y": plan.H1.y if plan.H1 else None,
        "h2_x": plan.H2.x if plan.H2 else None,
        "h2_y": plan.H2.y if plan.H2 else None,
        "R_c2u": plan.R_c2u,
        "R_u2b": plan.R_u2b,
        "T_total": plan.T_total,
        "T_delivery": plan.T_delivery,
        "E_total": plan.E_total,
        "M_t_over_bw": plan.M_t_over_bw,
        "feasible_full_delivery": plan.feasible_full_delivery,
    }
