import math
import os

import numpy as np
import pytest

from skyrelay.exceptions import ConfigError, SimulationError
from skyrelay.geometry import Point2, distance_to_polyline
from skyrelay.montecarlo import (
    STATUS_INFEASIBLE,
    STATUS_OK,
    STATUS_SKIPPED,
    EmpiricalCdf,
    aggregate,
    bound_instance,
    cdf_quantile,
    compare_methods,
    direct_instance,
    dispatch_trials,
    inverse_cdf_sample,
    run_bound_study,
    run_direct_study,
    run_trial_block,
    study_context,
    tabulate_cdf,
    tbs_contour,
    trial_rng,
    worst_case_tbs,
)
from skyrelay.params import serialize, with_overrides
from skyrelay.planner import plan_route

FAST_RUN = {"cdf_points": 16, "hover_grid": 256, "grid_step_m": 100.0, "tbs_candidates": 8}
slow = pytest.mark.skipif(os.environ.get("RUN_SLOW_STUDIES") != "1", reason="full-size study")


def _exponential(r):
    return 1.0 - math.exp(-r / 100.0)


@pytest.fixture
def fast(table1):
    return with_overrides(table1, run=FAST_RUN)


def test_inverse_cdf_handles_flat_steps():
    cdf = EmpiricalCdf(x=np.array([0.0, 1.0, 2.0, 3.0]), F=np.array([0.0, 0.5, 0.5, 1.0]))
    assert inverse_cdf_sample(cdf, 0.0) == 0.0
    assert inverse_cdf_sample(cdf, 0.5) == 1.0
    assert inverse_cdf_sample(cdf, 0.75) == pytest.approx(2.0)
    assert inverse_cdf_sample(cdf, 1.0) == 3.0

    out = inverse_cdf_sample(cdf, np.linspace(0.0, 1.0, 11))
    assert np.all(np.diff(out) >= 0)


@pytest.mark.parametrize("u", [-0.1, 1.5, float("nan")])
def test_inverse_cdf_rejects_bad_levels(u):
    cdf = EmpiricalCdf(x=np.array([0.0, 1.0]), F=np.array([0.0, 1.0]))
    with pytest.raises(SimulationError):
        inverse_cdf_sample(cdf, u)


def test_empirical_cdf_validation():
    with pytest.raises(SimulationError):
        EmpiricalCdf(x=np.array([0.0, 1.0, 2.0]), F=np.array([0.0, 0.6, 0.4]))
    with pytest.raises(SimulationError):
        EmpiricalCdf(x=np.array([0.0, 1.0]), F=np.array([0.0, 0.9]))
    with pytest.raises(SimulationError):
        EmpiricalCdf(x=np.array([0.0]), F=np.array([1.0]))


def test_quantile_of_exponential():
    assert cdf_quantile(_exponential, 0.5) == pytest.approx(100.0 * math.log(2.0), rel=1e-5)


def test_tabulated_cdf_shape():
    cdf = tabulate_cdf(_exponential, points=128)
    assert cdf.x[0] == 0.0 and cdf.F[0] == 0.0
    assert cdf.F[-1] == 1.0
    assert cdf.x[-1] == pytest.approx(100.0 * math.log(1e6), rel=1e-5)
    assert len(cdf.x) == 129


def test_inverse_transform_reproduces_distribution():
    cdf = tabulate_cdf(_exponential)
    rng = np.random.default_rng(17)
    samples = np.sort(inverse_cdf_sample(cdf, rng.uniform(size=20_000)))
    empirical = np.arange(1, len(samples) + 1) / len(samples)
    analytic = 1.0 - np.exp(-samples / 100.0)
    assert np.max(np.abs(empirical - analytic)) < 0.02


def test_trial_streams_are_independent_and_repeatable():
    a = trial_rng(7, 3).uniform(size=4)
    assert np.array_equal(a, trial_rng(7, 3).uniform(size=4))
    assert not np.array_equal(a, trial_rng(7, 4).uniform(size=4))
    assert not np.array_equal(a, trial_rng(8, 3).uniform(size=4))


def test_study_context_with_table1(table1):
    ctx = study_context(table1)
    assert ctx.r_t == 1.0
    assert ctx.lambda_i_prime == pytest.approx(
        table1.lambda_i * math.exp(-math.pi * table1.lambda_t)
    )


def test_study_context_needs_rate_threshold(table1):
    with pytest.raises(ConfigError):
        study_context(with_overrides(table1, c_t=0.0))


CONTOUR = (Point2(0.0, 0.0), Point2(5000.0, 0.0), Point2(2000.0, 300.0))


def _planned_cost(plan):
    return (-plan.M_t_over_bw, plan.T_total, plan.E_total)


def test_tbs_contour_sits_at_sampled_distance():
    S, D, iot = CONTOUR
    cand = tbs_contour(S, D, iot, 200.0, 1.0, count=48)
    assert len(cand) >= 8
    dist = distance_to_polyline(cand, [iot, D, S])
    assert dist == pytest.approx(np.full(len(cand), 200.0), rel=1e-6)

    # points just past either end of the IoT-D leg are always offered
    u = (iot.as_array() - D.as_array()) / iot.distance_to(D)
    for point in (iot.as_array() + 200.0 * u, D.as_array() - 200.0 * u):
        assert np.min(np.hypot(*(cand - point).T)) < 1e-9


def test_tbs_contour_respects_hole():
    S, D, iot = CONTOUR
    cand = tbs_contour(S, D, iot, 200.0, 400.0, count=48)
    assert len(cand) > 0
    assert np.all(np.hypot(*(cand - iot.as_array()).T) >= 400.0)


def test_worst_case_tbs_is_the_costliest_planned_candidate(fast):
    S, D, iot = CONTOUR
    params = with_overrides(fast, M_over_bw=1000.0, run={"tbs_candidates": 12})
    worst = worst_case_tbs(S, D, iot, 200.0, 1.0, params, step=100.0)
    worst_cost = _planned_cost(plan_route(S, D, iot, worst, params, step=100.0))

    cand = tbs_contour(S, D, iot, 200.0, 1.0, count=12)
    assert any(Point2.from_array(row) == worst for row in cand)
    for row in cand:
        other = plan_route(S, D, iot, Point2.from_array(row), params, step=100.0)
        assert worst_cost >= _planned_cost(other)


def test_worst_case_tbs_without_candidates_falls_back(fast):
    S, D, iot = CONTOUR
    p = worst_case_tbs(S, D, iot, 200.0, 1e6, fast)
    assert p == Point2(-200.0, 0.0)


def test_bound_instance_is_seeded(fast):
    iot, tbs = bound_instance(fast, trial_rng(1, 0))
    again = bound_instance(fast, trial_rng(1, 0))
    assert (iot, tbs) == again
    assert 0.0 <= iot.x <= fast.L2
    assert iot.y >= 0.0


def test_direct_instance_is_seeded(fast):
    first = direct_instance(fast, trial_rng(5, 2))
    assert first is not None
    assert first == direct_instance(fast, trial_rng(5, 2))


def test_no_data_task_leaves_delivery_time_alone(fast):
    doc = serialize(with_overrides(fast, M_over_bw=0.0))
    records = run_trial_block("direct", doc, 0, 3, 11, {"step": 100.0})
    assert [r["trial"] for r in records] == [0, 1, 2]
    for r in records:
        assert r["status"] == STATUS_OK
        assert r["xi"] == pytest.approx(1.0)
        assert r["route"] == 0


def test_unknown_study_rejected(fast):
    with pytest.raises(SimulationError, match="unknown study"):
        run_trial_block("oracle", serialize(fast), 0, 1, 1)


def test_aggregate_counts_and_means(fast):
    records = [
        {
            "trial": 0,
            "status": STATUS_OK,
            "T_total": 100.0,
            "E_total": 1e5,
            "M_t_over_bw": 1000.0,
            "T_delivery": 40.0,
            "route": 1,
            "full": True,
            "xi": 1.0,
        },
        {
            "trial": 1,
            "status": STATUS_OK,
            "T_total": 300.0,
            "E_total": 3e5,
            "M_t_over_bw": 500.0,
            "T_delivery": 60.0,
            "route": 3,
            "full": False,
            "xi": 1.5,
        },
        {"trial": 2, "status": STATUS_INFEASIBLE},
        {"trial": 3, "status": STATUS_SKIPPED},
    ]
    agg = aggregate("direct", fast, records, seed=9)
    assert (agg.trials, agg.completed, agg.infeasible, agg.skipped) == (4, 2, 1, 1)
    assert agg.failed_fraction == 0.5
    assert agg.means["T_total"] == pytest.approx(200.0)
    assert agg.std_errors["T_total"] == pytest.approx(100.0)
    assert agg.xi == {"mean": 1.25, "se": pytest.approx(0.25), "min": 1.0, "max": 1.5}
    assert agg.full_delivery_fraction == 0.5
    assert agg.route_counts == {1: 1, 3: 1}
    assert sum(agg.histograms["xi"]["counts"]) == 2

    row = agg.as_row()
    assert row["T_delivery_mean"] == pytest.approx(50.0)
    assert row["xi_max"] == 1.5


def test_aggregate_with_nothing_completed(fast):
    agg = aggregate("bound", fast, [{"trial": 0, "status": STATUS_SKIPPED}], seed=1)
    assert agg.completed == 0
    assert agg.means["E_total"] is None
    assert agg.xi["mean"] is None
    assert agg.histograms["T_delivery"] == {"edges": [], "counts": []}


def test_direct_study_repeatable_across_batch_sizes(fast, settings):
    first = run_direct_study(fast, 5000.0, 1000.0, trials=4, seed=3)
    settings.SKYRELAY_BATCH_SIZE = 1
    second = run_direct_study(fast, 5000.0, 1000.0, trials=4, seed=3)
    assert first.as_row() == second.as_row()
    assert first.xi["min"] >= 1.0 - 1e-9


def test_bound_study_runs(fast):
    agg = run_bound_study(fast, 3000.0, 1000.0, trials=2, seed=4)
    assert agg.trials == 2
    assert agg.completed + agg.infeasible + agg.skipped == 2
    if agg.completed:
        assert agg.xi["min"] >= 1.0 - 1e-9


def test_optimal_never_loses_to_deliver_first(fast):
    rows = compare_methods(fast, 5000.0, [1000.0, 4000.0], trials=6, seed=6)
    assert [row["M_over_bw"] for row in rows] == [1000.0, 4000.0]
    for row in rows:
        if row["completed"]:
            assert row["data_dominance_rate"] == 1.0
        assert row["time_dominance_rate"] in (None, 1.0)


@slow
@pytest.mark.parametrize("study", [run_bound_study, run_direct_study])
def test_full_size_studies(table1, study):
    agg = study(table1, 5000.0, 6000.0, trials=200, seed=7)
    assert agg.failed_fraction < 0.5
    assert agg.xi["min"] >= 1.0 - 1e-9
    assert agg.means["E_total"] <= table1.B_max


def _no_worse_than(upper, lower, name):
    slack = 2.0 * math.hypot(upper.std_errors[name] or 0.0, lower.std_errors[name] or 0.0)
    return upper.means[name] >= lower.means[name] - slack


@slow
def test_bound_study_dominates_direct_study(table1):
    bound = run_bound_study(table1, 7000.0, 1000.0, trials=300, seed=11)
    direct = run_direct_study(table1, 7000.0, 1000.0, trials=300, seed=11)
    assert bound.completed and direct.completed
    assert _no_worse_than(bound, direct, "T_total")
    assert _no_worse_than(bound, direct, "E_total")


@slow
def test_optimal_dominates_deliver_first_over_many_instances(table1):
    rows = compare_methods(table1, 5000.0, [1000.0, 6000.0], trials=200, seed=3)
    for row in rows:
        assert row["completed"] >= 100
        assert row["data_dominance_rate"] >= 0.95
        if row["both_full"]:
            assert row["time_dominance_rate"] >= 0.95


# Deliver-first mean energies (J) on the default document, 60 instances, seed 7.
DELIVER_FIRST_ENERGY = {1000.0: 2.796e5, 4000.0: 5.624e5}


@slow
def test_deliver_first_energy_band(table1):
    rows = compare_methods(table1, 5000.0, [1000.0, 4000.0, 6000.0, 10000.0], trials=60, seed=7)
    by_m = {row["M_over_bw"]: row for row in rows}
    for M, energy in DELIVER_FIRST_ENERGY.items():
        assert by_m[M]["df_E_total_mean"] == pytest.approx(energy, rel=0.01)
    for M in (6000.0, 10000.0):
        assert by_m[M]["df_E_total_mean"] == pytest.approx(table1.B_max, rel=0.01)
        assert by_m[M]["opt_E_total_mean"] <= table1.B_max * (1.0 + 1e-9)


@slow
def test_delivery_time_splits_at_large_data_task(table1):
    records = dispatch_trials("direct", with_overrides(table1, M_over_bw=6000.0), 200, 7)
    xi = np.array([r["xi"] for r in records if r["status"] == STATUS_OK])
    on_time = np.isclose(xi, 1.0, rtol=0.0, atol=1e-9)
    assert 0 < on_time.sum() < len(xi)
