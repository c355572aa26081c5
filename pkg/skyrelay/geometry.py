# skyrelay/geometry.py

"""
Planar and stochastic geometry kernels.

Canonical path frame: S = (0, 0), D = (L2, 0) and the IoT cluster at
D + L1 * (-cos(theta), sin(theta)), so theta is the angle at D between the
rays D->S and D->IoT (theta = pi is a straight S-D-IoT line).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from skyrelay.exceptions import GeometryError

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION_FRACTION = 1.0 / 200.0
DEFAULT_RESOLUTION_FLOOR = 0.25


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, xy: Sequence[float]) -> "Point2":
        return cls(float(xy[0]), float(xy[1]))

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class PathGeometry:
    L1: float
    L2: float
    theta: float
    r_hole: float = 0.0

    def __post_init__(self):
        if self.L1 < 0 or self.L2 < 0:
            raise GeometryError(f"segment lengths must be >= 0 (L1={self.L1}, L2={self.L2})")
        if not 0.0 <= self.theta <= math.pi:
            raise GeometryError(f"theta must lie in [0, pi], got {self.theta}")
        if self.r_hole < 0:
            raise GeometryError(f"r_hole must be >= 0, got {self.r_hole}")


@dataclass(frozen=True)
class DiskOffsetLaw:
    """Distance from a reference point to a device uniform in a disk of radius r_c."""

    R_center: float
    r_c: float

    def __post_init__(self):
        if self.R_center < 0 or self.r_c < 0:
            raise GeometryError(
                f"disk offset law needs R_center, r_c >= 0 (got {self.R_center}, {self.r_c})"
            )

    @property
    def support(self) -> Tuple[float, float]:
        return max(0.0, self.R_center - self.r_c), self.R_center + self.r_c


@dataclass(frozen=True)
class Window:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def area(self) -> float:
        return max(0.0, self.xmax - self.xmin) * max(0.0, self.ymax - self.ymin)

    def expanded(self, margin: float) -> "Window":
        return Window(
            self.xmin - margin, self.ymin - margin, self.xmax + margin, self.ymax + margin
        )


@dataclass(frozen=True)
class ClosedArea:
    """Closed-form buffer area plus the branch used and any diagnostic flags."""

    value: float
    branch: str
    flags: Tuple[str, ...] = field(default_factory=tuple)


# ---------------------------------------------------------------------------
# Frames and distances
# ---------------------------------------------------------------------------


def canonical_path(path: PathGeometry) -> Tuple[Point2, Point2, Point2]:
    """Returns (S, D, IoT) for ``path`` in the canonical frame."""
    S = Point2(0.0, 0.0)
    D = Point2(path.L2, 0.0)
    iot = Point2(
        path.L2 - path.L1 * math.cos(path.theta),
        path.L1 * math.sin(path.theta),
    )
    return S, D, iot


def _frame_axes(A: Point2, B: Point2) -> Tuple[np.ndarray, np.ndarray]:
    d = B.as_array() - A.as_array()
    length = float(np.hypot(d[0], d[1]))
    if length == 0.0:
        raise GeometryError(f"degenerate frame: A and B coincide at ({A.x}, {A.y})")
    u = d / length
    return u, np.array([-u[1], u[0]])


def to_local_frame(A: Point2, B: Point2, p: Point2) -> Point2:
    """Coordinates of ``p`` in the frame with origin A and x-axis along A->B."""
    u, n = _frame_axes(A, B)
    rel = p.as_array() - A.as_array()
    return Point2(float(rel @ u), float(rel @ n))


def from_local_frame(A: Point2, B: Point2, q: Point2) -> Point2:
    u, n = _frame_axes(A, B)
    xy = A.as_array() + q.x * u + q.y * n
    return Point2.from_array(xy)


def distance_to_segment(points: np.ndarray, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of ``points`` to segment PQ."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = Q - P
    denom = float(d @ d)
    if denom == 0.0:
        return np.hypot(points[:, 0] - P[0], points[:, 1] - P[1])
    t = np.clip(((points - P) @ d) / denom, 0.0, 1.0)
    foot = P + t[:, None] * d
    return np.hypot(points[:, 0] - foot[:, 0], points[:, 1] - foot[:, 1])


def distance_to_polyline(points: np.ndarray, vertices: Sequence[Point2]) -> np.ndarray:
    """Distance from each point to the polyline through ``vertices`` (projection formula)."""
    verts = [v.as_array() for v in vertices]
    if len(verts) == 1:
        return distance_to_segment(points, verts[0], verts[0])
    out = None
    for P, Q in zip(verts[:-1], verts[1:]):
        d = distance_to_segment(points, P, Q)
        out = d if out is None else np.minimum(out, d)
    return out


# ---------------------------------------------------------------------------
# Device distance law
# ---------------------------------------------------------------------------


def pdf_device_distance(law: DiskOffsetLaw, r) -> np.ndarray | float:
    """
    Density of the distance from the reference point to a device placed
    uniformly in the cluster disk whose centre is R_center away.

    Zero outside the support; scalar in, scalar out.
    """
    r_arr = np.asarray(r, dtype=float)
    R, rc = law.R_center, law.r_c
    out = np.zeros_like(r_arr)
    if rc == 0.0:
        return float(out) if np.ndim(r) == 0 else out

    inside = (r_arr > 0) & (r_arr < rc - R)
    out[inside] = 2.0 * r_arr[inside] / rc**2

    ring = (r_arr > abs(rc - R)) & (r_arr < R + rc) & (r_arr > 0)
    if R > 0 and np.any(ring):
        rr = r_arr[ring]
        arg = np.clip((R**2 + rr**2 - rc**2) / (2.0 * R * rr), -1.0, 1.0)
        out[ring] = 2.0 * rr / (math.pi * rc**2) * np.arccos(arg)

    return float(out) if np.ndim(r) == 0 else out


def sample_disk_offsets(law: DiskOffsetLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Distances to ``n`` devices drawn uniformly in the cluster disk."""
    radius = law.r_c * np.sqrt(rng.uniform(size=n))
    angle = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return np.hypot(law.R_center + radius * np.cos(angle), radius * np.sin(angle))


# ---------------------------------------------------------------------------
# Buffer area around the two-segment path
# ---------------------------------------------------------------------------


def _resolution_for(
    r: float,
    resolution: float | None,
    fraction: float = DEFAULT_RESOLUTION_FRACTION,
    floor: float = DEFAULT_RESOLUTION_FLOOR,
) -> float:
    if resolution is not None:
        if resolution <= 0:
            raise GeometryError(f"resolution must be > 0, got {resolution}")
        return resolution
    return max(r * fraction, floor)


def _disk_chord(y: np.ndarray, c: np.ndarray, r: float) -> Tuple[np.ndarray, np.ndarray]:
    dy2 = r * r - (y - c[1]) ** 2
    half = np.sqrt(np.maximum(dy2, 0.0))
    lo = np.where(dy2 >= 0, c[0] - half, np.inf)
    hi = np.where(dy2 >= 0, c[0] + half, -np.inf)
    return lo, hi


def _linear_band(
    y: np.ndarray, a: float, b: np.ndarray, lower: float, upper: float
) -> Tuple[np.ndarray, np.ndarray]:
    """x-interval where lower <= a*x + b <= upper, per row."""
    if abs(a) < 1e-15:
        ok = (b >= lower) & (b <= upper)
        return np.where(ok, -np.inf, np.inf), np.where(ok, np.inf, -np.inf)
    x1 = (lower - b) / a
    x2 = (upper - b) / a
    return np.minimum(x1, x2), np.maximum(x1, x2)


def _capsule_rows(
    y: np.ndarray, P: np.ndarray, Q: np.ndarray, r: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise x-interval of the capsule of radius r around PQ (empty: lo > hi)."""
    lo_p, hi_p = _disk_chord(y, P, r)
    lo_q, hi_q = _disk_chord(y, Q, r)
    lo = np.minimum(lo_p, lo_q)
    hi = np.maximum(hi_p, hi_q)

    d = Q - P
    length = float(np.hypot(d[0], d[1]))
    if length > 0.0:
        u = d / length
        n = np.array([-u[1], u[0]])
        # along-track t and cross-track s are linear in x on each row
        t_lo, t_hi = _linear_band(y, u[0], (y - P[1]) * u[1] - P[0] * u[0], 0.0, length)
        s_lo, s_hi = _linear_band(y, n[0], (y - P[1]) * n[1] - P[0] * n[0], -r, r)
        rect_lo = np.maximum(t_lo, s_lo)
        rect_hi = np.minimum(t_hi, s_hi)
        has_rect = rect_lo <= rect_hi
        lo = np.where(has_rect, np.minimum(lo, rect_lo), lo)
        hi = np.where(has_rect, np.maximum(hi, rect_hi), hi)
    return lo, hi


def _overlap(lo1, hi1, lo2, hi2) -> np.ndarray:
    return np.maximum(np.minimum(hi1, hi2) - np.maximum(lo1, lo2), 0.0)


def _length(lo, hi) -> np.ndarray:
    return np.maximum(hi - lo, 0.0)


def buffer_area_numeric(
    path: PathGeometry,
    r: float,
    resolution: float | None = None,
    *,
    fraction: float = DEFAULT_RESOLUTION_FRACTION,
    floor: float = DEFAULT_RESOLUTION_FLOOR,
) -> float:
    """
    Area of the points within ``r`` of the path IoT->D->S, minus the disk of
    radius r_hole around the IoT end.

    Rows sit at cell-centre heights (k + 1/2) * resolution on a grid anchored
    at y = 0; each row's length is computed exactly as an interval union, so
    the only error is the row discretization, O(resolution). For a fixed
    resolution the result is nondecreasing in r.
    """
    if r <= 0:
        return 0.0
    res = _resolution_for(r, resolution, fraction, floor)

    S, D, iot = (p.as_array() for p in canonical_path(path))
    ys = (S[1], D[1], iot[1])
    k0 = math.floor((min(ys) - r) / res)
    k1 = math.ceil((max(ys) + r) / res)
    y = (np.arange(k0, k1 + 1, dtype=float) + 0.5) * res

    lo1, hi1 = _capsule_rows(y, iot, D, r)
    lo2, hi2 = _capsule_rows(y, D, S, r)
    union = _length(lo1, hi1) + _length(lo2, hi2) - _overlap(lo1, hi1, lo2, hi2)

    if path.r_hole > 0:
        h_lo, h_hi = _disk_chord(y, iot, path.r_hole)
        in1 = _overlap(lo1, hi1, h_lo, h_hi)
        in2 = _overlap(lo2, hi2, h_lo, h_hi)
        both_lo = np.maximum(np.maximum(lo1, lo2), h_lo)
        both_hi = np.minimum(np.minimum(hi1, hi2), h_hi)
        union = union - (in1 + in2 - _length(both_lo, both_hi))

    return float(np.sum(union) * res)


def _safe_arcsin(value: float, name: str, flags: List[str]) -> float:
    if value < -1.0 or value > 1.0:
        flags.append(f"{name}_arcsin_clipped")
        value = min(1.0, max(-1.0, value))
    return math.asin(value)


def buffer_area_closed(path: PathGeometry, r: float) -> ClosedArea:
    """
    Closed-form buffer area: Area1 + Area2 + Area3 - Area_hole, evaluated
    term by term as printed in the source derivation, with l1 = L1.

    Arcsine arguments outside [-1, 1] are clipped and negative partial
    areas kept; both are reported in ``flags``. A zero-length first segment
    leaves only the S-D capsule minus the hole.
    """
    if r <= 0:
        return ClosedArea(0.0, "empty")

    flags: List[str] = []
    L1, L2, theta, rt = path.L1, path.L2, path.theta, path.r_hole

    area1 = math.pi * r * r + 2.0 * L2 * r

    if rt > 0 and r < rt:
        theta2 = _safe_arcsin(r / rt, "theta2", flags)
        hole = 0.5 * math.pi * r * r + r * rt * math.cos(theta2) + theta2 * rt * rt
        hole_branch = "partial_hole"
    else:
        hole = math.pi * rt * rt
        hole_branch = "full_hole"

    if L1 == 0.0:
        return ClosedArea(area1 - hole, f"single_segment/{hole_branch}", tuple(flags))

    half_tan = math.tan(theta / 2.0)
    area2 = r * r * half_tan - r * r
    if area2 < 0:
        flags.append("area2_negative")

    sin_t = math.sin(theta)
    if r <= L1 * half_tan:
        branch = "near"
        if sin_t == 0.0:
            flags.append("area3_division_by_zero")
            area3 = 2.0 * r * L1 + r * r * math.pi / 2.0
        else:
            area3 = 2.0 * r * (L1 - r / sin_t) + r * r * math.pi / 2.0
    elif r <= L1 * math.tan(theta):
        branch = "middle"
        theta1 = _safe_arcsin((L1 * sin_t - r) / r, "theta1", flags) + theta + math.pi / 2.0
        area3 = r * r * (theta1 - math.sin(theta1)) / 2.0 + (L1 - r * half_tan) * (
            r * math.sin(theta1 / 2.0)
        ) * math.sin(theta1 / 2.0)
    else:
        branch = "far"
        theta4 = math.pi / 2.0 - _safe_arcsin((r - L1 * sin_t) / r, "theta4", flags)
        x = L1 - r * half_tan
        y = r * math.sin(theta4) + L1 * math.cos(theta) + r * half_tan
        z = math.sqrt((y - x * math.cos(theta)) ** 2 + (x * sin_t) ** 2)
        theta3 = _safe_arcsin(z / (2.0 * r), "theta3", flags)
        area3 = 0.5 * sin_t * x * y + theta3 * r * r - r * r * math.sin(2.0 * theta3) / 2.0
    if area3 < 0:
        flags.append("area3_negative")

    return ClosedArea(area1 + area2 + area3 - hole, f"{branch}/{hole_branch}", tuple(flags))


def buffer_area(
    path: PathGeometry, r: float, backend: str = "numeric", resolution: float | None = None
) -> float:
    if backend == "numeric":
        return buffer_area_numeric(path, r, resolution)
    if backend == "closed":
        return buffer_area_closed(path, r).value
    raise GeometryError(f"unknown area backend {backend!r}")


def cdf_rb(
    path: PathGeometry,
    lam: float,
    r,
    backend: str = "numeric",
    resolution: float | None = None,
    *,
    resolution_fraction: float = DEFAULT_RESOLUTION_FRACTION,
    resolution_floor: float = DEFAULT_RESOLUTION_FLOOR,
):
    """
    CDF of the distance from the path to the nearest point of a PPP of
    density ``lam`` (points inside the hole excluded): 1 - exp(-lam * Area).

    The numeric backend is the one downstream code uses; the closed backend
    logs its diagnostic flags. Without an explicit ``resolution`` the row
    height is max(r * resolution_fraction, resolution_floor).
    """
    if lam <= 0:
        raise GeometryError(f"density must be > 0, got {lam}")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    areas = np.empty_like(r_arr)
    flagged = []
    for i, ri in enumerate(r_arr):
        if backend == "closed":
            closed = buffer_area_closed(path, float(ri))
            areas[i] = closed.value
            if closed.flags:
                flagged.append((float(ri), closed.branch, closed.flags))
        elif backend == "numeric":
            areas[i] = buffer_area_numeric(
                path,
                float(ri),
                resolution,
                fraction=resolution_fraction,
                floor=resolution_floor,
            )
        else:
            areas[i] = buffer_area(path, float(ri), backend, resolution)

    if flagged:
        logger.warning(
            "Closed-form area flagged at %d of %d radii",
            len(flagged),
            len(r_arr),
            extra={"L1": path.L1, "theta": path.theta, "first_flagged": flagged[0]},
        )

    out = 1.0 - np.exp(-lam * np.maximum(areas, 0.0))
    return float(out[0]) if np.ndim(r) == 0 else out


def area_discrepancies(
    r_grid: Iterable[float],
    thetas: Iterable[float] = (math.pi / 6, math.pi / 2, 5 * math.pi / 6),
    l1_values: Iterable[float] = (200.0, 500.0, 1000.0),
    L2: float = 1000.0,
    r_hole: float = 0.0,
    tolerance: float = 0.01,
    resolution: float | None = None,
) -> List[dict]:
    """
    Closed-form versus numeric area over a grid. Every row is returned;
    rows with ``within_tolerance`` False form the discrepancy list.
    """
    rows: List[dict] = []
    r_values = list(r_grid)
    for theta in thetas:
        for L1 in l1_values:
            path = PathGeometry(L1=L1, L2=L2, theta=theta, r_hole=r_hole)
            for r in r_values:
                numeric = buffer_area_numeric(path, r, resolution)
                closed = buffer_area_closed(path, r)
                rel_err = abs(closed.value - numeric) / numeric if numeric > 0 else 0.0
                rows.append(
                    {
                        "r": r,
                        "theta": theta,
                        "L1": L1,
                        "closed": closed.value,
                        "numeric": numeric,
                        "rel_err": rel_err,
                        "branch": closed.branch,
                        "flags": "|".join(closed.flags),
                        "within_tolerance": rel_err <= tolerance,
                    }
                )
    return rows


# ---------------------------------------------------------------------------
# Point processes
# ---------------------------------------------------------------------------


def sample_ppp(lam: float, window: Window, rng: np.random.Generator) -> np.ndarray:
    """
    Homogeneous PPP of density ``lam`` in ``window``; rows are (x, y).
    Count ~ Poisson(lam * area), positions i.i.d. uniform.
    """
    mean = lam * window.area
    if mean <= 0:
        return np.empty((0, 2))
    n = int(rng.poisson(mean))
    low = [window.xmin, window.ymin]
    high = [window.xmax, window.ymax]
    return rng.uniform(low, high, size=(n, 2))


def path_window(vertices: Sequence[Point2], margin: float) -> Window:
    xs = [v.x for v in vertices]
    ys = [v.y for v in vertices]
    return Window(min(xs), min(ys), max(xs), max(ys)).expanded(margin)


def empirical_rb_samples(
    path: PathGeometry,
    lam: float,
    realizations: int,
    rng: np.random.Generator,
    r_max: float,
    chunk: int = 5000,
) -> np.ndarray:
    """
    Distance from the path to the nearest PPP point outside the hole, one
    per realization (inf when the window is empty). The window reaches
    r_max + 5/sqrt(lam) beyond the path.
    """
    S, D, iot = canonical_path(path)
    window = path_window([S, D, iot], r_max + 5.0 / math.sqrt(lam))
    iot_xy = iot.as_array()
    out = np.full(realizations, np.inf)

    for start in range(0, realizations, chunk):
        stop = min(realizations, start + chunk)
        counts = rng.poisson(lam * window.area, size=stop - start)
        total = int(counts.sum())
        if total == 0:
            continue
        pts = rng.uniform(
            [window.xmin, window.ymin], [window.xmax, window.ymax], size=(total, 2)
        )
        owner = np.repeat(np.arange(start, stop), counts)
        dist = distance_to_polyline(pts, [iot, D, S])
        if path.r_hole > 0:
            keep = np.hypot(pts[:, 0] - iot_xy[0], pts[:, 1] - iot_xy[1]) >= path.r_hole
            dist, owner = dist[keep], owner[keep]
        np.minimum.at(out, owner, dist)

    return out


def empirical_cdf(samples: np.ndarray, r) -> np.ndarray:
    """Fraction of ``samples`` <= each r."""
    ordered = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(ordered, np.asarray(r, dtype=float), side="right") / len(ordered)
