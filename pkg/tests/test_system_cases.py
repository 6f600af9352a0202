import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_fleet
from tariffsim.scenarios import off_peak_demand_fleet, plateau_fleet, proportional_fleet
from tariffsim.errors import ConfigurationError, RejectedInput
from tariffsim.model_core import FlexibilityParams, LoadSeries, SpotPriceSeries, build_time_index
from tariffsim.system_cases import (
    CaseKind,
    CaseSpec,
    merged_consumer,
    peak_metrics,
    run_case,
    solve_sor,
    with_peak_days,
)
from tariffsim.tariffs import DemandCharge, DynamicToU, FlatEnergy, StaticToU, SubscribedCapacity


def test_peak_metrics_examples():
    assert peak_metrics([10, 40], [10, 39]) == pytest.approx((40, 39, 0.025))
    assert peak_metrics([1, 2], [1, 2])[2] == 0.0
    with pytest.raises(RejectedInput):
        peak_metrics([], [])
    with pytest.raises(RejectedInput):
        peak_metrics([1, 2], [1])


def test_sor_flat_load():
    idx = build_time_index("2021-01-04", 1)
    res = solve_sor([LoadSeries("a", np.full(24, 10.0))], FlexibilityParams(), idx)
    assert res.new_peak == pytest.approx(9.75, abs=1e-7)
    assert res.reduction == pytest.approx(0.025, abs=1e-8)


def test_sor_spike_hits_hourly_cap():
    idx = build_time_index("2021-01-04", 1)
    L = np.ones(24)
    L[5] = 10.0
    res = solve_sor([LoadSeries("a", L)], FlexibilityParams(e_flex=1.0), idx)
    assert res.new_peak == pytest.approx(7.5, abs=1e-7)


def test_sor_avoids_gratuitous_reduction():
    idx = build_time_index("2021-01-04", 2)
    L = np.full(48, 2.0)
    L[30] = 4.0  # only day 1 has a peak worth shaving
    res = solve_sor([LoadSeries("a", L)], FlexibilityParams(), idx)
    assert res.results[0].reduction[:24].sum() == 0.0
    assert res.results[0].reduction.sum() == pytest.approx(4.0 - res.new_peak, abs=1e-7)


def test_sor_decomposed_serial_parallel_and_monolithic_agree(rng):
    idx = build_time_index("2021-01-04", 5)
    fleet = random_fleet(rng, idx, 6)
    a = solve_sor(fleet, FlexibilityParams(), idx)
    b = solve_sor(fleet, FlexibilityParams(), idx, jobs=2)
    c = solve_sor(fleet, FlexibilityParams(), idx, decompose=False)
    assert np.array_equal(a.response, b.response)
    assert a.new_peak == pytest.approx(c.new_peak, abs=1e-7)


def test_merged_consumer_never_worse_than_fleet(rng):
    # pooling the daily budgets relaxes the per-consumer limits
    idx = build_time_index("2021-01-04", 2)
    fleet = random_fleet(rng, idx, 5)
    fleet_peak = solve_sor(fleet, FlexibilityParams(), idx).new_peak
    merged_peak = solve_sor([merged_consumer(fleet)], FlexibilityParams(), idx).new_peak
    assert merged_peak <= fleet_peak + 1e-7


def test_pooling_can_strictly_help():
    idx = build_time_index("2021-01-04", 1)
    spiky = np.zeros(24)
    spiky[0] = 10.0
    fleet = [LoadSeries("a", spiky), LoadSeries("b", np.ones(24))]
    fleet_peak = solve_sor(fleet, FlexibilityParams(), idx).new_peak
    merged_peak = solve_sor([merged_consumer(fleet)], FlexibilityParams(), idx).new_peak
    assert merged_peak < fleet_peak - 0.1


@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 3))
def test_sor_aggregation_equivalence(seed, n_consumers, days):
    fleet, idx = proportional_fleet(np.random.default_rng(seed), n_consumers, days)
    flex = FlexibilityParams()
    fleet_peak = solve_sor(fleet, flex, idx).new_peak
    merged_peak = solve_sor([merged_consumer(fleet)], flex, idx).new_peak
    assert abs(fleet_peak - merged_peak) <= 1e-7


def test_sp_reduction_lands_on_the_dearest_hour():
    idx = build_time_index("2021-01-04", 1, hours_per_day=3)
    spec = CaseSpec("SP", spot=SpotPriceSeries([0.1, 0.5, 1.0]), flexibility=FlexibilityParams(0.25, 0.025, 0.2),
                    include_energy_term=False)
    # equal loads keep the peak in the untouched hours
    assert run_case(spec, [LoadSeries("a", [10.0, 10.0, 10.0])], idx).reduction == pytest.approx(0.0, abs=1e-12)
    L = [8.0, 9.0, 10.0]
    res = run_case(spec, [LoadSeries("a", L)], idx)
    assert res.results[0].reduction[2] == pytest.approx(0.025 * sum(L), abs=1e-9)
    assert res.reduction == pytest.approx(0.025 * sum(L) / 10.0, abs=1e-9)


def test_gt_flat_energy_gives_no_response(week_index, rng):
    fleet = random_fleet(rng, week_index, 3)
    res = run_case(CaseSpec("GT", FlatEnergy()), fleet, week_index)
    assert res.reduction == 0.0
    assert np.array_equal(res.response, res.baseline)


def test_identical_consumers_double_the_metrics(week_index, rng):
    L = rng.uniform(0.5, 3, week_index.hour_count)
    spec = CaseSpec("GT", StaticToU())
    one = run_case(spec, [LoadSeries("a", L)], week_index)
    two = run_case(spec, [LoadSeries("a", L), LoadSeries("b", L)], week_index)
    assert two.baseline_peak == 2 * one.baseline_peak
    assert two.new_peak == pytest.approx(2 * one.new_peak, rel=1e-12)
    assert two.costs.total == pytest.approx(2 * one.costs.total, rel=1e-12)


def test_case_result_invariants(week_index, rng):
    fleet = random_fleet(rng, week_index, 4)
    spot = SpotPriceSeries(rng.uniform(0.2, 2.0, week_index.hour_count))
    res = run_case(CaseSpec("GT_SP", DemandCharge(), spot), fleet, week_index)
    assert np.allclose(res.response, sum(r.new_load for r in res.results))
    assert res.reduction == pytest.approx((res.baseline_peak - res.new_peak) / res.baseline_peak)
    assert res.tariff_name == "demand_charge" and res.kind is CaseKind.GT_SP


def test_parallel_run_is_bit_identical(week_index, rng):
    fleet = random_fleet(rng, week_index, 4)
    spec = CaseSpec("GT", SubscribedCapacity())
    a = run_case(spec, fleet, week_index, jobs=1)
    b = run_case(spec, fleet, week_index, jobs=2)
    assert np.array_equal(a.response, b.response)
    assert a.costs == b.costs


def test_fleet_order_does_not_matter(week_index, rng):
    fleet = random_fleet(rng, week_index, 4)
    spec = CaseSpec("GT", StaticToU())
    a = run_case(spec, fleet, week_index)
    b = run_case(spec, fleet[::-1], week_index)
    assert np.array_equal(a.response, b.response)


def test_case_spec_requirements():
    with pytest.raises(ConfigurationError):
        CaseSpec("GT")
    with pytest.raises(ConfigurationError):
        CaseSpec("GT_SP", StaticToU())
    with pytest.raises(ConfigurationError):
        CaseSpec("SP")
    with pytest.raises(ValueError):
        CaseSpec("XX")


def test_sp_energy_term_switch():
    spot = SpotPriceSeries(np.ones(24))
    assert CaseSpec("SP", spot=spot).effective_tariff == FlatEnergy(0.25)
    assert CaseSpec("SP", spot=spot, include_energy_term=False).effective_tariff == FlatEnergy(0.0)


def test_duplicate_ids_rejected(day_index):
    fleet = [LoadSeries("a", np.ones(24)), LoadSeries("a", np.ones(24))]
    with pytest.raises(RejectedInput):
        run_case(CaseSpec("GT", StaticToU()), fleet, day_index)


def test_with_peak_days(week_index, rng):
    fleet = random_fleet(rng, week_index, 3)
    tariff = with_peak_days(DynamicToU(), fleet, week_index, 2)
    assert len(tariff.active_days) == 2
    assert with_peak_days(StaticToU(), fleet, week_index, 2) == StaticToU()


def test_sor_dominates_on_fixtures():
    for make in (plateau_fleet, off_peak_demand_fleet):
        fleet, spot, idx = make(n_consumers=8, days=7)
        sor = solve_sor(fleet, FlexibilityParams(), idx).reduction
        for tariff in (StaticToU(), with_peak_days(DynamicToU(), fleet, idx, 2), DemandCharge(), SubscribedCapacity()):
            for kind in ("GT", "GT_SP"):
                res = run_case(CaseSpec(kind, tariff, spot), fleet, idx)
                assert sor >= res.reduction - 1e-9
        assert sor >= run_case(CaseSpec("SP", spot=spot), fleet, idx).reduction - 1e-9


def test_winter_diagnostics():
    fleet, spot, idx = plateau_fleet(n_consumers=3, days=2)
    res = run_case(CaseSpec("GT", StaticToU()), fleet, idx)
    assert res.winter_baseline_peak == res.baseline_peak
    assert res.winter_reduction == pytest.approx(res.reduction)
    summer = build_time_index("2021-07-05", 1)
    res = run_case(CaseSpec("GT", StaticToU()), [LoadSeries("a", np.ones(24))], summer)
    assert np.isnan(res.winter_reduction)


def test_c_red_override_per_consumer(week_index, rng):
    fleet = random_fleet(rng, week_index, 3)
    base = run_case(CaseSpec("GT", StaticToU()), fleet, week_index)
    spec = CaseSpec("GT", StaticToU(), c_red_overrides={"c001": 50.0})
    res = run_case(spec, fleet, week_index)
    by_id = {r.consumer_id: r for r in res.results}
    assert by_id["c001"].reduction.sum() == 0.0
    assert np.array_equal(by_id["c000"].reduction, base.results[0].reduction)
    sor = run_case(CaseSpec("SOR", c_red_overrides={"c001": 2.0}), fleet, week_index)
    q = [r.reduction.sum() for r in sor.results]
    assert sor.costs.flexibility == pytest.approx(0.30 * (q[0] + q[2]) + 2.0 * q[1])


def test_c_red_override_validation(week_index, rng):
    fleet = random_fleet(rng, week_index, 2)
    with pytest.raises(ConfigurationError):
        CaseSpec("GT", StaticToU(), c_red_overrides={"c000": -1})
    with pytest.raises(RejectedInput):
        run_case(CaseSpec("GT", StaticToU(), c_red_overrides={"zzz": 1.0}), fleet, week_index)
