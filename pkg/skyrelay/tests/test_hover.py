import math

import numpy as np
import pytest

from skyrelay.geometry import Point2
from skyrelay.planner import hover_points, optimal_hover_point


def _brute_force(A, B, C, d, n=200_000):
    phi = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    hx = C.x + d * np.cos(phi)
    hy = C.y + d * np.sin(phi)
    lengths = np.hypot(hx - A.x, hy - A.y) + np.hypot(hx - B.x, hy - B.y)
    return float(lengths.min())


def test_zero_radius_hovers_at_center():
    A, B, C = Point2(0.0, 0.0), Point2(1000.0, 0.0), Point2(300.0, 400.0)
    sol = optimal_hover_point(A, B, C, 0.0)
    assert sol.H == C
    assert sol.path_len == pytest.approx(500.0 + math.hypot(700.0, 400.0))
    assert sol.detour == pytest.approx(sol.path_len - 1000.0)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        optimal_hover_point(Point2(0.0, 0.0), Point2(1.0, 0.0), Point2(0.0, 1.0), -1.0)


def test_circle_crossing_segment_has_no_detour():
    A, B, C = Point2(0.0, 0.0), Point2(1000.0, 0.0), Point2(400.0, 120.0)
    sol = optimal_hover_point(A, B, C, 200.0)
    assert sol.detour == pytest.approx(0.0, abs=1e-9)
    assert sol.H.y == pytest.approx(0.0, abs=1e-9)
    # crossing nearest A
    assert sol.H.x == pytest.approx(400.0 - 160.0)
    assert sol.H.distance_to(C) == pytest.approx(200.0)


def test_far_circle_bends_towards_segment():
    A, B, C = Point2(0.0, 0.0), Point2(1000.0, 0.0), Point2(500.0, 600.0)
    sol = optimal_hover_point(A, B, C, 100.0)
    assert sol.H.x == pytest.approx(500.0, abs=1e-3)
    assert sol.H.y == pytest.approx(500.0, abs=1e-3)
    assert sol.path_len == pytest.approx(2.0 * math.hypot(500.0, 500.0), rel=1e-9)


def test_coincident_anchors_pick_nearest_circle_point():
    A = Point2(0.0, 0.0)
    C = Point2(300.0, 400.0)
    sol = optimal_hover_point(A, A, C, 100.0)
    assert sol.path_len == pytest.approx(2.0 * 400.0, rel=1e-9)
    assert sol.H.x == pytest.approx(240.0, abs=1e-3)
    assert sol.H.y == pytest.approx(320.0, abs=1e-3)


def test_matches_brute_force_scan():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        A = Point2(*rng.uniform(-1000.0, 1000.0, 2))
        B = Point2(*rng.uniform(-1000.0, 1000.0, 2))
        C = Point2(*rng.uniform(-1000.0, 1000.0, 2))
        d = float(rng.uniform(1.0, 800.0))
        sol = optimal_hover_point(A, B, C, d)
        brute = _brute_force(A, B, C, d)
        assert sol.path_len == pytest.approx(brute, rel=1e-6)
        assert sol.H.distance_to(C) == pytest.approx(d, rel=1e-9)
        assert sol.detour >= -1e-9
        if sol.detour > 1e-6:
            # no crossing: the circle must miss segment AB
            seg = np.array([B.x - A.x, B.y - A.y])
            t = np.clip(((C.x - A.x) * seg[0] + (C.y - A.y) * seg[1]) / (seg @ seg), 0.0, 1.0)
            foot = (A.x + t * seg[0], A.y + t * seg[1])
            near = math.hypot(C.x - foot[0], C.y - foot[1])
            far = max(C.distance_to(A), C.distance_to(B))
            assert d < near or d > far


def test_batched_radii_match_single_solves():
    A, B, C = Point2(0.0, 0.0), Point2(2000.0, 0.0), Point2(800.0, 900.0)
    radii = [50.0, 300.0, 900.0, 1500.0]
    H, lengths = hover_points(A, B, C, radii)
    assert H.shape == (4, 2)
    for i, d in enumerate(radii):
        single = optimal_hover_point(A, B, C, d)
        assert lengths[i] == pytest.approx(single.path_len)
        assert H[i] == pytest.approx(single.H.as_array())
