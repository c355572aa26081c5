# skyrelay/montecarlo.py

"""
System-level averaging over random IoT cluster and TBS placements.

Two studies share the per-trial contract:

* bound study: nearest-cluster and nearest-TBS distances are drawn by
  inverse-CDF sampling from tabulated void-probability CDFs, and the TBS is
  put at the contour point whose planned trip is costliest;
* direct study: TBS and cluster PPPs are sampled in a window around the
  delivery path and the nearest qualifying cluster / nearest TBS are used.

Each trial draws from its own substream derived from (seed, trial index)
and aggregation is exactly rounded, so results do not depend on how the
trials were batched or scheduled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from celery import group
from django.conf import settings
from scipy import optimize
from scipy.spatial import cKDTree

from skyrelay.channel import qualifying_cluster_density, threshold_radius
from skyrelay.exceptions import ConfigError, InfeasibleTripError, SimulationError
from skyrelay.geometry import (
    PathGeometry,
    Point2,
    cdf_rb,
    distance_to_polyline,
    distance_to_segment,
    path_window,
    sample_ppp,
)
from skyrelay.params import SystemParams, load_and_validate, serialize, with_overrides
from skyrelay.planner import TripPlan, deliver_first_plan, plan_route

logger = logging.getLogger(__name__)

METRICS = ("T_total", "E_total", "M_t_over_bw", "T_delivery")
STATUS_OK = "ok"
STATUS_INFEASIBLE = "infeasible"
STATUS_SKIPPED = "skipped"

CDF_PIN_TOL = 1e-6
FIRST_RADIUS_FRACTION = 1e-5
WINDOW_SIGMAS = 5.0


# ---------------------------------------------------------------------------
# Tabulated CDFs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Tabulated CDF: nondecreasing abscissae ``x`` (m) and values ``F``."""

    x: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.F.shape or self.x.ndim != 1 or len(self.x) < 2:
            raise SimulationError("EmpiricalCdf needs two 1-D arrays of equal length >= 2")
        if np.any(np.diff(self.x) < 0) or np.any(np.diff(self.F) < 0):
            raise SimulationError("EmpiricalCdf abscissae and values must be nondecreasing")
        if self.F[0] < 0 or self.F[-1] > 1.0 or self.F[-1] < 1.0 - CDF_PIN_TOL:
            raise SimulationError(
                f"EmpiricalCdf values must lie in [0, 1] and end at 1 (got {self.F[-1]})"
            )


def cdf_quantile(fn: Callable[[float], float], level: float, start: float = 1.0) -> float:
    """Radius where the distance CDF ``fn`` reaches ``level`` (doubling, then brentq)."""
    hi = start
    for _ in range(80):
        if fn(hi) >= level:
            break
        hi *= 2.0
    else:
        raise SimulationError(f"CDF never reaches {level} below {hi:.3g} m")
    lo = hi / 2.0
    if fn(lo) >= level:
        return lo
    return float(optimize.brentq(lambda r: fn(r) - level, lo, hi, xtol=1e-6 * hi))


def tabulate_cdf(
    fn: Callable[[float], float], points: int = 512, tail: float = 1e-6, start: float = 1.0
) -> EmpiricalCdf:
    """
    Tabulates a distance CDF on ``points`` log-spaced radii up to its
    (1 - tail) quantile, with r = 0 prepended and the last value pinned to 1.
    """
    r_hi = cdf_quantile(fn, 1.0 - tail, start)
    r_lo = r_hi * FIRST_RADIUS_FRACTION
    x = np.concatenate(([0.0], np.geomspace(r_lo, r_hi, points)))
    F = np.array([0.0] + [fn(float(r)) for r in x[1:]])
    F = np.clip(np.maximum.accumulate(F), 0.0, 1.0)
    F[-1] = 1.0
    return EmpiricalCdf(x=x, F=F)


def inverse_cdf_sample(cdf: EmpiricalCdf, u):
    """
    Generalized inverse inf{x : F(x) >= u} with linear interpolation between
    tabulated points; scalar in, scalar out.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0) | (u_arr > 1)) or np.any(np.isnan(u_arr)):
        raise SimulationError("inverse_cdf_sample needs u in [0, 1]")
    levels, first = np.unique(cdf.F, return_index=True)
    out = np.interp(u_arr, levels, cdf.x[first])
    return float(out) if np.ndim(u) == 0 else out


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


# ---------------------------------------------------------------------------
# Per-study context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyContext:
    r_t: float
    lambda_i_prime: float


@lru_cache(maxsize=16)
def study_context(params: SystemParams) -> StudyContext:
    if params.c_t <= 0:
        raise ConfigError("studies need a positive rate threshold c_t", field="c_t")
    threshold = threshold_radius(params.links.i2b, params.c_t, params.r_c)
    lam = qualifying_cluster_density(params.lambda_i, params.lambda_t, threshold.r_t)
    logger.info(
        "Study context: r_t = %.2f m, qualifying density %.4g per m2",
        threshold.r_t,
        lam,
        extra={"attainable": threshold.attainable},
    )
    return StudyContext(r_t=threshold.r_t, lambda_i_prime=lam)


def _area_kwargs(params: SystemParams) -> Dict[str, float]:
    return {
        "resolution_fraction": params.run.area_resolution_fraction,
        "resolution_floor": params.run.area_resolution_floor_m,
    }


@lru_cache(maxsize=16)
def nearest_cluster_cdf(params: SystemParams) -> EmpiricalCdf:
    """Distance from the S-D segment to the nearest qualifying cluster."""
    ctx = study_context(params)
    segment = PathGeometry(L1=0.0, L2=params.L2, theta=0.0)
    kwargs = _area_kwargs(params)
    return tabulate_cdf(
        lambda r: cdf_rb(segment, ctx.lambda_i_prime, r, **kwargs),
        points=params.run.cdf_points,
        tail=params.run.cdf_tail,
    )


def tbs_distance_cdf(params: SystemParams, path: PathGeometry) -> EmpiricalCdf:
    kwargs = _area_kwargs(params)
    return tabulate_cdf(
        lambda r: cdf_rb(path, params.lambda_t, r, **kwargs),
        points=params.run.cdf_points,
        tail=params.run.cdf_tail,
    )


# ---------------------------------------------------------------------------
# Instance generation
# ---------------------------------------------------------------------------


def _offset_candidates(P: np.ndarray, Q: np.ndarray, R_b: float, count: int) -> np.ndarray:
    d = Q - P
    length = float(np.hypot(d[0], d[1]))
    if length == 0.0:
        return np.empty((0, 2))
    n = np.array([-d[1], d[0]]) / length
    t = np.linspace(0.0, 1.0, count)[:, None]
    base = P + t * d
    return np.vstack([base + R_b * n, base - R_b * n])


def tbs_contour(
    S: Point2, D: Point2, iot: Point2, R_b: float, r_hole: float, count: int = 48
) -> np.ndarray:
    """
    About ``count`` points at distance R_b from the path IoT->D->S and at
    least r_hole from the cluster, spread over the offset sides and the
    end caps in proportion to their length. The two points on the IoT-D
    line just beyond either end are always included.
    """
    s, d, c = S.as_array(), D.as_array(), iot.as_array()
    l1 = float(np.hypot(*(c - d)))
    l2 = float(np.hypot(*(s - d)))
    ring_len = 2.0 * math.pi * R_b
    total = 2.0 * (l1 + l2) + 3.0 * ring_len
    if total == 0.0:
        return np.empty((0, 2))

    def share(length: float) -> int:
        return max(2, int(round(count * length / total)))

    parts = [
        _offset_candidates(c, d, R_b, share(l1)),
        _offset_candidates(d, s, R_b, share(l2)),
    ]
    if R_b > 0:
        k = share(ring_len)
        angles = np.linspace(0.0, 2.0 * math.pi, k, endpoint=False)
        ring = R_b * np.column_stack([np.cos(angles), np.sin(angles)])
        parts += [v + ring for v in (c, d, s)]
    if l1 > 0:
        u = (c - d) / l1
        parts.append(np.vstack([c + R_b * u, d - R_b * u]))
    cand = np.vstack(parts)

    on_contour = np.abs(distance_to_polyline(cand, [iot, D, S]) - R_b) <= 1e-6 * max(1.0, R_b)
    outside = np.hypot(cand[:, 0] - c[0], cand[:, 1] - c[1]) >= r_hole
    return cand[on_contour & outside]


def _plan_cost(plan: TripPlan) -> Tuple[float, float, float]:
    return (-plan.M_t_over_bw, plan.T_total, plan.E_total)


def worst_case_tbs(
    S: Point2,
    D: Point2,
    iot: Point2,
    R_b: float,
    r_hole: float,
    params: SystemParams,
    step: float | None = None,
) -> Point2:
    """
    TBS position on the distance-R_b contour whose planned trip is worst:
    least data moved, then longest T_total, then largest E_total. Each of
    the run.tbs_candidates contour points is planned at ``step`` (default
    run.tbs_search_step_m); ties keep the first candidate.
    """
    cand = tbs_contour(S, D, iot, R_b, r_hole, params.run.tbs_candidates)
    if len(cand) == 0:
        return Point2(S.x - R_b, S.y)

    step = step or params.run.tbs_search_step_m
    worst, worst_cost = None, None
    for row in cand:
        tbs = Point2.from_array(row)
        cost = _plan_cost(plan_route(S, D, iot, tbs, params, step=step))
        if worst_cost is None or cost > worst_cost:
            worst, worst_cost = tbs, cost
    logger.debug(
        "Worst-case TBS at (%.1f, %.1f) of %d contour points",
        worst.x,
        worst.y,
        len(cand),
        extra={"R_b": R_b, "T_total": worst_cost[1]},
    )
    return worst


def bound_instance(
    params: SystemParams, rng: np.random.Generator, step: float | None = None
) -> Tuple[Point2, Point2]:
    """
    Cluster and TBS positions for one bound-study trial. Raises
    InfeasibleTripError when the bare delivery overdraws the battery.
    """
    ctx = study_context(params)
    L2 = params.L2
    S, D = Point2(0.0, 0.0), Point2(L2, 0.0)

    R_iot = inverse_cdf_sample(nearest_cluster_cdf(params), rng.uniform())
    foot = rng.uniform(0.0, L2)
    iot = Point2(foot, R_iot)

    l1 = iot.distance_to(D)
    theta = math.acos(min(1.0, max(-1.0, (L2 - iot.x) / l1))) if l1 > 0 else 0.0
    path = PathGeometry(L1=l1, L2=L2, theta=theta, r_hole=ctx.r_t)
    R_b = inverse_cdf_sample(tbs_distance_cdf(params, path), rng.uniform())
    search_step = max(step or params.run.grid_step_m, params.run.tbs_search_step_m)
    return iot, worst_case_tbs(S, D, iot, R_b, ctx.r_t, params, step=search_step)


def direct_instance(
    params: SystemParams, rng: np.random.Generator
) -> Optional[Tuple[Point2, Point2]]:
    """
    Cluster and TBS positions from sampled PPPs, or None when no qualifying
    cluster (or no TBS) shows up even in the enlarged window.
    """
    ctx = study_context(params)
    S, D = Point2(0.0, 0.0), Point2(params.L2, 0.0)
    s, d = S.as_array(), D.as_array()
    margin = WINDOW_SIGMAS / math.sqrt(ctx.lambda_i_prime)

    for attempt in range(2):
        cluster_window = path_window([S, D], margin)
        tbs_window = cluster_window.expanded(ctx.r_t + WINDOW_SIGMAS / math.sqrt(params.lambda_t))
        tbs = sample_ppp(params.lambda_t, tbs_window, rng)
        clusters = sample_ppp(params.lambda_i, cluster_window, rng)
        if len(tbs) and len(clusters):
            nearest, _ = cKDTree(tbs).query(clusters)
            qualifying = clusters[nearest > ctx.r_t]
        else:
            qualifying = clusters
        if len(qualifying) and len(tbs):
            chosen = qualifying[int(np.argmin(distance_to_segment(qualifying, s, d)))]
            iot = Point2.from_array(chosen)
            pick = tbs[int(np.argmin(distance_to_polyline(tbs, [iot, D, S])))]
            return iot, Point2.from_array(pick)
        logger.debug("No qualifying cluster in window (attempt %d)", attempt + 1)
        margin *= 2.0
    return None


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


def _plan_fields(plan: TripPlan) -> Dict[str, Any]:
    return {
        "T_total": plan.T_total,
        "E_total": plan.E_total,
        "M_t_over_bw": plan.M_t_over_bw,
        "T_delivery": plan.T_delivery,
        "route": int(plan.route) if plan.route is not None else 0,
        "full": plan.feasible_full_delivery,
    }


def _study_trial(
    study: str, params: SystemParams, trial: int, seed: int, step: float | None
) -> Dict[str, Any]:
    rng = trial_rng(seed, trial)
    S, D = Point2(0.0, 0.0), Point2(params.L2, 0.0)
    try:
        if study == "bound":
            iot, tbs = bound_instance(params, rng, step=step)
        else:
            instance = direct_instance(params, rng)
            if instance is None:
                return {"trial": trial, "status": STATUS_SKIPPED}
            iot, tbs = instance
        plan = plan_route(S, D, iot, tbs, params, step=step)
        nodata = plan_route(S, D, iot, tbs, with_overrides(params, M_over_bw=0.0), step=step)
    except InfeasibleTripError:
        logger.debug("Trial %d infeasible", trial, extra={"study": study})
        return {"trial": trial, "status": STATUS_INFEASIBLE}

    record = {"trial": trial, "status": STATUS_OK, **_plan_fields(plan)}
    record["xi"] = plan.T_delivery / nodata.T_delivery
    return record


def _compare_trial(
    params: SystemParams, trial: int, seed: int, step: float | None, m_grid: Sequence[float]
) -> Dict[str, Any]:
    instance = direct_instance(params, trial_rng(seed, trial))
    if instance is None:
        return {"trial": trial, "status": STATUS_SKIPPED}
    iot, tbs = instance
    S, D = Point2(0.0, 0.0), Point2(params.L2, 0.0)

    rows = []
    try:
        for M in m_grid:
            p = with_overrides(params, M_over_bw=float(M))
            rows.append(
                {
                    "M_over_bw": float(M),
                    "optimal": _plan_fields(plan_route(S, D, iot, tbs, p, step=step)),
                    "deliver_first": _plan_fields(deliver_first_plan(S, D, iot, tbs, p, step=step)),
                }
            )
    except InfeasibleTripError:
        return {"trial": trial, "status": STATUS_INFEASIBLE}
    return {"trial": trial, "status": STATUS_OK, "rows": rows}


def run_trial_block(
    study: str,
    params_doc: Mapping[str, Any],
    start: int,
    stop: int,
    seed: int,
    options: Mapping[str, Any] | None = None,
) -> List[Dict[str, Any]]:
    """JSON-safe records for trials [start, stop) of ``study``."""
    if study not in ("bound", "direct", "compare"):
        raise SimulationError(f"unknown study {study!r}")
    params = load_and_validate(params_doc)
    options = dict(options or {})
    step = options.get("step")
    records = []
    for trial in range(start, stop):
        if study == "compare":
            records.append(_compare_trial(params, trial, seed, step, options["m_grid"]))
        else:
            records.append(_study_trial(study, params, trial, seed, step))
    return records


def dispatch_trials(
    study: str,
    params: SystemParams,
    trials: int,
    seed: int,
    options: Mapping[str, Any] | None = None,
) -> List[Dict[str, Any]]:
    """
    Runs all trials in blocks of SKYRELAY_BATCH_SIZE, inline or as a celery
    group, and returns the records ordered by trial index.
    """
    from skyrelay.tasks import run_trial_batch

    if trials < 1:
        raise SimulationError(f"trials must be >= 1, got {trials}")
    doc = serialize(params)
    size = max(1, int(getattr(settings, "SKYRELAY_BATCH_SIZE", 50)))
    blocks = [(a, min(trials, a + size)) for a in range(0, trials, size)]
    mode = getattr(settings, "SKYRELAY_DISPATCH", "inline")
    opts = dict(options or {})

    logger.info(
        "Dispatching %d %s trials in %d blocks (%s)",
        trials,
        study,
        len(blocks),
        mode,
        extra={"seed": seed},
    )
    if mode == "celery":
        job = group(run_trial_batch.s(study, doc, a, b, seed, opts) for a, b in blocks)
        results = job.apply_async().get()
    else:
        results = [run_trial_batch(study, doc, a, b, seed, opts) for a, b in blocks]

    return sorted((r for block in results for r in block), key=lambda r: r["trial"])


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _mean(values: Sequence[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def _std_error(values: Sequence[float]) -> Optional[float]:
    n = len(values)
    if n < 2:
        return None
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return math.sqrt(var / n)


def _histogram(values: Sequence[float], bins: int) -> Dict[str, List[float]]:
    if not values:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


@dataclass(frozen=True)
class AggregateMetrics:
    study: str
    L2: float
    M_over_bw: float
    trials: int
    seed: int
    completed: int
    infeasible: int
    skipped: int
    means: Dict[str, Optional[float]] = field(default_factory=dict)
    std_errors: Dict[str, Optional[float]] = field(default_factory=dict)
    xi: Dict[str, Optional[float]] = field(default_factory=dict)
    full_delivery_fraction: Optional[float] = None
    route_counts: Dict[int, int] = field(default_factory=dict)
    histograms: Dict[str, Dict[str, List[float]]] = field(default_factory=dict)

    @property
    def failed_fraction(self) -> float:
        return (self.infeasible + self.skipped) / self.trials

    def as_row(self) -> Dict[str, Any]:
        """Flat row for sweep output."""
        row: Dict[str, Any] = {
            "study": self.study,
            "L2": self.L2,
            "M_over_bw": self.M_over_bw,
            "trials": self.trials,
            "completed": self.completed,
            "infeasible": self.infeasible,
            "skipped": self.skipped,
        }
        for name in METRICS:
            row[f"{name}_mean"] = self.means.get(name)
            row[f"{name}_se"] = self.std_errors.get(name)
        row["xi_mean"] = self.xi.get("mean")
        row["xi_se"] = self.xi.get("se")
        row["xi_min"] = self.xi.get("min")
        row["xi_max"] = self.xi.get("max")
        row["full_delivery_fraction"] = self.full_delivery_fraction
        return row


def aggregate(
    study: str, params: SystemParams, records: Sequence[Mapping[str, Any]], seed: int
) -> AggregateMetrics:
    ok = sorted((r for r in records if r["status"] == STATUS_OK), key=lambda r: r["trial"])
    infeasible = sum(1 for r in records if r["status"] == STATUS_INFEASIBLE)
    skipped = sum(1 for r in records if r["status"] == STATUS_SKIPPED)
    if infeasible:
        logger.warning(
            "%d of %d %s trials infeasible", infeasible, len(records), study, extra={"L2": params.L2}
        )

    means = {name: _mean([r[name] for r in ok]) for name in METRICS}
    errors = {name: _std_error([r[name] for r in ok]) for name in METRICS}
    xi_values = [r["xi"] for r in ok]
    routes: Dict[int, int] = {}
    for r in ok:
        routes[r["route"]] = routes.get(r["route"], 0) + 1
    bins = params.run.histogram_bins

    return AggregateMetrics(
        study=study,
        L2=params.L2,
        M_over_bw=params.M_over_bw,
        trials=len(records),
        seed=seed,
        completed=len(ok),
        infeasible=infeasible,
        skipped=skipped,
        means=means,
        std_errors=errors,
        xi={
            "mean": _mean(xi_values),
            "se": _std_error(xi_values),
            "min": min(xi_values) if xi_values else None,
            "max": max(xi_values) if xi_values else None,
        },
        full_delivery_fraction=_mean([1.0 if r["full"] else 0.0 for r in ok]),
        route_counts=dict(sorted(routes.items())),
        histograms={
            "T_delivery": _histogram([r["T_delivery"] for r in ok], bins),
            "xi": _histogram(xi_values, bins),
        },
    )


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------


def _study(
    study: str,
    params: SystemParams,
    L2: float,
    M_over_bw: float,
    trials: int,
    seed: int,
    step: float | None,
) -> AggregateMetrics:
    p = with_overrides(params, L2=L2, M_over_bw=M_over_bw)
    records = dispatch_trials(study, p, trials, seed, {"step": step})
    return aggregate(study, p, records, seed)


def run_bound_study(
    params: SystemParams,
    L2: float,
    M_over_bw: float,
    trials: int,
    seed: int,
    step: float | None = None,
) -> AggregateMetrics:
    """Worst-case TBS placement with inverse-CDF sampled distances."""
    return _study("bound", params, L2, M_over_bw, trials, seed, step)


def run_direct_study(
    params: SystemParams,
    L2: float,
    M_over_bw: float,
    trials: int,
    seed: int,
    step: float | None = None,
) -> AggregateMetrics:
    """Plans on sampled PPP realizations."""
    return _study("direct", params, L2, M_over_bw, trials, seed, step)


def compare_methods(
    params: SystemParams,
    L2: float,
    m_grid: Sequence[float],
    trials: int,
    seed: int,
    step: float | None = None,
) -> List[Dict[str, Any]]:
    """
    Optimal versus deliver-first plans on the same direct-study instances,
    one row per M with means and dominance rates.
    """
    p = with_overrides(params, L2=L2)
    options = {"step": step, "m_grid": [float(m) for m in m_grid]}
    records = dispatch_trials("compare", p, trials, seed, options)
    ok = [r for r in records if r["status"] == STATUS_OK]

    rows = []
    for k, M in enumerate(options["m_grid"]):
        pairs = [(r["rows"][k]["optimal"], r["rows"][k]["deliver_first"]) for r in ok]
        both_full = [(o, f) for o, f in pairs if o["full"] and f["full"]]
        row: Dict[str, Any] = {"M_over_bw": M, "trials": len(records), "completed": len(pairs)}
        for label, idx in (("opt", 0), ("df", 1)):
            for name in ("E_total", "M_t_over_bw", "T_total"):
                row[f"{label}_{name}_mean"] = _mean([pair[idx][name] for pair in pairs])
        row["data_dominance_rate"] = _mean(
            [1.0 if o["M_t_over_bw"] >= f["M_t_over_bw"] - 1e-9 else 0.0 for o, f in pairs]
        )
        row["both_full"] = len(both_full)
        row["time_dominance_rate"] = _mean(
            [1.0 if o["T_total"] <= f["T_total"] + 1e-9 else 0.0 for o, f in both_full]
        )
        rows.append(row)

    skipped = sum(1 for r in records if r["status"] != STATUS_OK)
    if skipped:
        logger.warning("%d of %d comparison trials not planned", skipped, len(records))
    return rows
