import math

import numpy as np
import pytest
from scipy import integrate

from skyrelay.exceptions import GeometryError
from skyrelay.geometry import (
    DiskOffsetLaw,
    PathGeometry,
    Point2,
    Window,
    canonical_path,
    cdf_rb,
    distance_to_polyline,
    distance_to_segment,
    empirical_cdf,
    empirical_rb_samples,
    from_local_frame,
    pdf_device_distance,
    sample_disk_offsets,
    sample_ppp,
    to_local_frame,
)


def test_canonical_frame():
    S, D, iot = canonical_path(PathGeometry(L1=500.0, L2=1000.0, theta=math.pi / 2))
    assert (S.x, S.y) == (0.0, 0.0)
    assert (D.x, D.y) == (1000.0, 0.0)
    assert iot.x == pytest.approx(1000.0)
    assert iot.y == pytest.approx(500.0)

    _, _, straight = canonical_path(PathGeometry(L1=500.0, L2=1000.0, theta=math.pi))
    assert straight.x == pytest.approx(1500.0)
    assert straight.y == pytest.approx(0.0, abs=1e-9)


def test_path_geometry_validation():
    with pytest.raises(GeometryError):
        PathGeometry(L1=-1.0, L2=1000.0, theta=0.5)
    with pytest.raises(GeometryError):
        PathGeometry(L1=1.0, L2=1000.0, theta=4.0)
    with pytest.raises(GeometryError):
        Point2(float("nan"), 0.0)


def test_local_frame_round_trip():
    A, B = Point2(10.0, -5.0), Point2(110.0, 95.0)
    p = Point2(37.0, 12.5)
    q = to_local_frame(A, B, p)
    back = from_local_frame(A, B, q)
    assert back.x == pytest.approx(p.x)
    assert back.y == pytest.approx(p.y)

    on_axis = to_local_frame(A, B, B)
    assert on_axis.x == pytest.approx(A.distance_to(B))
    assert on_axis.y == pytest.approx(0.0, abs=1e-9)


def test_degenerate_frame_raises():
    with pytest.raises(GeometryError, match="degenerate"):
        to_local_frame(Point2(1.0, 1.0), Point2(1.0, 1.0), Point2(0.0, 0.0))


def test_distance_to_segment_and_polyline():
    pts = np.array([[50.0, 10.0], [-3.0, 4.0], [120.0, 0.0]])
    d = distance_to_segment(pts, np.array([0.0, 0.0]), np.array([100.0, 0.0]))
    assert d == pytest.approx([10.0, 5.0, 20.0])

    verts = [Point2(100.0, 50.0), Point2(100.0, 0.0), Point2(0.0, 0.0)]
    d2 = distance_to_polyline(np.array([[110.0, 25.0], [50.0, -7.0]]), verts)
    assert d2 == pytest.approx([10.0, 7.0])


@pytest.mark.parametrize("R_center", [0.0, 20.0, 50.0, 80.0, 300.0])
def test_device_distance_pdf_normalizes(R_center):
    law = DiskOffsetLaw(R_center=R_center, r_c=50.0)
    lo, hi = law.support
    breaks = [x for x in (abs(50.0 - R_center),) if lo < x < hi]
    total, _ = integrate.quad(
        lambda r: pdf_device_distance(law, r), lo, hi, points=breaks or None, limit=200
    )
    assert total == pytest.approx(1.0, abs=1e-6)


def test_device_distance_pdf_matches_samples():
    law = DiskOffsetLaw(R_center=80.0, r_c=50.0)
    rng = np.random.default_rng(11)
    samples = sample_disk_offsets(law, 200_000, rng)
    assert samples.min() >= 30.0 - 1e-9
    assert samples.max() <= 130.0 + 1e-9

    mean, _ = integrate.quad(lambda r: r * pdf_device_distance(law, r), 30.0, 130.0, limit=200)
    assert samples.mean() == pytest.approx(mean, rel=5e-3)
    # E[r^2] = R^2 + r_c^2 / 2 for a uniform disk
    assert np.mean(samples**2) == pytest.approx(80.0**2 + 50.0**2 / 2, rel=6e-3)


def test_sample_ppp_mean_count():
    rng = np.random.default_rng(3)
    window = Window(0.0, 0.0, 2000.0, 1000.0)
    counts = [len(sample_ppp(5e-6, window, rng)) for _ in range(2000)]
    assert np.mean(counts) == pytest.approx(10.0, rel=0.05)

    pts = sample_ppp(1e-4, window, rng)
    assert pts.shape[1] == 2
    assert np.all((pts[:, 0] >= 0) & (pts[:, 0] <= 2000.0))
    assert np.all((pts[:, 1] >= 0) & (pts[:, 1] <= 1000.0))


def test_sample_ppp_empty_window():
    out = sample_ppp(1e-3, Window(0.0, 0.0, 0.0, 10.0), np.random.default_rng(0))
    assert out.shape == (0, 2)


def test_cdf_rb_rejects_nonpositive_density():
    with pytest.raises(GeometryError):
        cdf_rb(PathGeometry(L1=0.0, L2=1000.0, theta=0.0), 0.0, 10.0)


@pytest.mark.parametrize(
    "L1, theta", [(500.0, math.pi / 2), (200.0, math.pi / 6), (1000.0, 5 * math.pi / 6)]
)
def test_cdf_rb_matches_simulated_nearest_distance(L1, theta):
    path = PathGeometry(L1=L1, L2=1000.0, theta=theta)
    lam = 1e-6
    rng = np.random.default_rng(7)
    r_max = 1200.0
    samples = empirical_rb_samples(path, lam, 20_000, rng, r_max)
    radii = np.linspace(25.0, r_max, 40)
    gap = np.max(np.abs(cdf_rb(path, lam, radii) - empirical_cdf(samples, radii)))
    assert gap < 0.02


def test_hole_excludes_points_near_cluster():
    path = PathGeometry(L1=500.0, L2=1000.0, theta=math.pi / 2, r_hole=300.0)
    plain = PathGeometry(L1=500.0, L2=1000.0, theta=math.pi / 2)
    r = np.array([50.0, 200.0, 400.0])
    assert np.all(cdf_rb(path, 1e-6, r) < cdf_rb(plain, 1e-6, r))

    rng = np.random.default_rng(5)
    samples = empirical_rb_samples(path, 1e-6, 20_000, rng, 1500.0)
    radii = np.linspace(25.0, 1500.0, 30)
    gap = np.max(np.abs(cdf_rb(path, 1e-6, radii) - empirical_cdf(samples, radii)))
    assert gap < 0.02
