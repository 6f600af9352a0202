"""Fleet-level cases: coordinated peak minimization and decentralized responses.

``SOR`` reduces the aggregate peak directly with everybody's flexibility.
``GT`` lets every consumer react to a grid tariff alone, ``GT_SP`` to the
tariff plus the spot price and ``SP`` to the spot price plus a flat energy
term.  All cases share one result type so they can be tabulated together.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import lp_engine
from .demand_response import ConsumerProblem, optimal_subscription, solve_consumer
from .errors import ConfigurationError, RejectedInput, SolverError
from .lp_engine import LinearProgram, Sense
from .model_core import (
    CostBreakdown,
    FlexibilityParams,
    LoadSeries,
    ResponseResult,
    SpotPriceSeries,
    TimeIndex,
    check_response,
)
from .tariffs import (
    DynamicToU,
    FlatEnergy,
    SubscribedCapacity,
    TariffSpec,
    monthly_peaks,
    select_peak_days,
)

WINTER_MONTHS = frozenset({11, 12, 1, 2, 3})
# slack on the peak cap in the second SOR pass [relative]
SOR_CAP_SLACK = 1e-10


class CaseKind(str, enum.Enum):
    SOR = "SOR"
    GT = "GT"
    GT_SP = "GT_SP"
    SP = "SP"


@dataclass(frozen=True, eq=False)
class CaseSpec:
    """One case to run over a fleet.

    ``include_energy_term`` only matters for ``SP``: when set, consumers also
    pay the flat ``energy_term`` so the grid revenue stays comparable.
    ``c_red_overrides`` maps consumer ids to their own discomfort cost; the
    hourly and daily limits stay common to the fleet.
    """

    kind: CaseKind
    tariff: TariffSpec | None = None
    spot: SpotPriceSeries | None = None
    flexibility: FlexibilityParams = field(default_factory=FlexibilityParams)
    energy_term: float = 0.25
    include_energy_term: bool = True
    c_red_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", CaseKind(self.kind))
        overrides = {str(k): float(v) for k, v in dict(self.c_red_overrides).items()}
        for cid, value in overrides.items():
            if not value >= 0:
                raise ConfigurationError(f"c_red override for {cid} must be non-negative")
        object.__setattr__(self, "c_red_overrides", overrides)
        if self.kind in (CaseKind.GT, CaseKind.GT_SP) and self.tariff is None:
            raise ConfigurationError(f"case {self.kind.value} needs a tariff")
        if self.kind in (CaseKind.GT_SP, CaseKind.SP) and self.spot is None:
            raise ConfigurationError(f"case {self.kind.value} needs a spot price series")

    @property
    def effective_tariff(self) -> TariffSpec | None:
        """Tariff the consumers actually face (None for SOR)."""
        if self.kind is CaseKind.SOR:
            return None
        if self.kind is CaseKind.SP:
            return FlatEnergy(self.energy_term if self.include_energy_term else 0.0)
        return self.tariff

    def flexibility_for(self, consumer_id: str) -> FlexibilityParams:
        c_red = self.c_red_overrides.get(consumer_id)
        return self.flexibility if c_red is None else replace(self.flexibility, c_red=c_red)

    @property
    def effective_spot(self) -> SpotPriceSeries | None:
        return None if self.kind in (CaseKind.SOR, CaseKind.GT) else self.spot

    @property
    def label(self) -> str:
        tariff = self.effective_tariff
        if self.kind is CaseKind.SOR:
            return "none"
        return tariff.name


@dataclass(frozen=True, eq=False)
class CaseResult:
    kind: CaseKind
    tariff_name: str
    results: tuple[ResponseResult, ...]
    baseline: np.ndarray
    response: np.ndarray
    baseline_peak: float
    new_peak: float
    reduction: float
    costs: CostBreakdown
    winter_baseline_peak: float = math.nan
    winter_new_peak: float = math.nan
    baseline_monthly_peaks: np.ndarray | None = None
    new_monthly_peaks: np.ndarray | None = None

    @property
    def winter_reduction(self) -> float:
        if not self.winter_baseline_peak > 0:
            return math.nan
        return (self.winter_baseline_peak - self.winter_new_peak) / self.winter_baseline_peak


def peak_metrics(baseline, response) -> tuple[float, float, float]:
    """(baseline peak, new peak, relative reduction) over the whole horizon."""
    baseline = np.asarray(baseline, dtype=float)
    response = np.asarray(response, dtype=float)
    if baseline.size == 0 or response.size == 0:
        raise RejectedInput("peak metrics need non-empty series")
    if baseline.shape != response.shape:
        raise RejectedInput("baseline and response lengths differ")
    before = float(baseline.max())
    after = float(response.max())
    if before <= 0:
        raise RejectedInput("baseline peak must be positive")
    return before, after, (before - after) / before


def _ordered_fleet(fleet, index: TimeIndex, overrides=()) -> list[LoadSeries]:
    fleet = list(fleet)
    if not fleet:
        raise RejectedInput("fleet is empty")
    ids = [c.consumer_id for c in fleet]
    if len(set(ids)) != len(ids):
        raise RejectedInput("consumer ids must be unique")
    unknown = sorted(set(overrides) - set(ids))
    if unknown:
        raise RejectedInput(f"c_red overrides name unknown consumers: {', '.join(unknown)}")
    for c in fleet:
        if len(c) != index.hour_count:
            raise RejectedInput(f"consumer {c.consumer_id} does not match the time index")
    return sorted(fleet, key=lambda c: c.consumer_id)


def _aggregate(rows) -> np.ndarray:
    # fixed summation order keeps serial and parallel runs bit-identical
    total = np.zeros_like(np.asarray(rows[0], dtype=float))
    for row in rows:
        total = total + row
    return total


def _assemble(kind, tariff_name, fleet, results, index: TimeIndex) -> CaseResult:
    baseline = _aggregate([c.values for c in fleet])
    response = _aggregate([r.new_load for r in results])
    before, after, reduction = peak_metrics(baseline, response)
    costs = CostBreakdown()
    for r in results:
        costs = costs + r.costs
    winter = np.isin(index.calendar_month_of_hour, sorted(WINTER_MONTHS))
    if not index.month_labels:
        winter = np.zeros(index.hour_count, dtype=bool)
    return CaseResult(
        kind=CaseKind(kind),
        tariff_name=tariff_name,
        results=tuple(results),
        baseline=baseline,
        response=response,
        baseline_peak=before,
        new_peak=after,
        reduction=reduction,
        costs=costs,
        winter_baseline_peak=float(baseline[winter].max()) if winter.any() else math.nan,
        winter_new_peak=float(response[winter].max()) if winter.any() else math.nan,
        baseline_monthly_peaks=monthly_peaks(baseline, index),
        new_monthly_peaks=monthly_peaks(response, index),
    )


def _consumer_task(args) -> ResponseResult:
    load, flex, tariff, index, spot = args
    sub = optimal_subscription(load, tariff, index) if isinstance(tariff, SubscribedCapacity) else None
    return solve_consumer(ConsumerProblem(load, flex, tariff, index, spot, sub))


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def run_case(spec: CaseSpec, fleet, index: TimeIndex, jobs: int = 1) -> CaseResult:
    """Run one case; per-consumer solves may be spread over ``jobs`` processes."""
    fleet = _ordered_fleet(fleet, index, spec.c_red_overrides)
    if spec.kind is CaseKind.SOR:
        return solve_sor(fleet, spec.flexibility, index, jobs=jobs, c_red_overrides=spec.c_red_overrides)
    tariff = spec.effective_tariff
    spot = spec.effective_spot
    if spot is not None and len(spot) != index.hour_count:
        raise RejectedInput("spot series does not match the time index")
    tasks = [(c, spec.flexibility_for(c.consumer_id), tariff, index, spot) for c in fleet]
    results = _map(_consumer_task, tasks, jobs)
    return _assemble(spec.kind, spec.label, fleet, results, index)


def _sor_day_lp(loads: np.ndarray, flex: FlexibilityParams, peak_cap: float | None):
    """Coordinated LP for one or more days of a fleet.

    ``loads`` has shape (consumers, days, hours).  Without ``peak_cap`` the
    program minimizes the common peak P; with it, P is capped and the total
    reduction is minimized.  Returns (lp, q index array, P index or None).
    Hours that can never bind are left out: with every consumer at its hourly
    cap, an hour below the peak lower bound stays below it.
    """
    n_cons, n_days, hpd = loads.shape
    agg = loads.sum(axis=0)
    floor = float(((1.0 - flex.q_flex) * agg).max())
    if peak_cap is not None:
        floor = max(floor, peak_cap)
    active = agg > floor
    lp = LinearProgram()
    q = -np.ones((n_cons, n_days, hpd), dtype=np.int64)
    for i in range(n_cons):
        for d in range(n_days):
            hours = np.flatnonzero(active[d] & (loads[i, d] > 0))
            if hours.size:
                cost = 0.0 if peak_cap is None else 1.0
                q[i, d, hours] = lp.add_variables(np.full(hours.size, cost), 0.0, flex.q_flex * loads[i, d, hours])
    p = None
    if peak_cap is None:
        p = int(lp.add_variables([1.0], floor, np.inf)[0])
    for d in range(n_days):
        for h in np.flatnonzero(active[d]):
            cols = q[:, d, h]
            cols = cols[cols >= 0]
            if p is None:
                lp.add_row(cols, 1.0, Sense.GE, agg[d, h] - peak_cap)
            else:
                lp.add_row(np.append(cols, p), np.append(np.ones(cols.size), 1.0), Sense.GE, agg[d, h])
    budgets = flex.e_flex * loads.sum(axis=2)
    for i in range(n_cons):
        for d in range(n_days):
            cols = q[i, d][q[i, d] >= 0]
            if cols.size:
                lp.add_row(cols, 1.0, Sense.LE, budgets[i, d])
    return lp, q, p


def _solve_sor_lp(loads, flex, peak_cap=None):
    lp, q_idx, p = _sor_day_lp(loads, flex, peak_cap)
    q = np.zeros(loads.shape)
    if lp.n == 0:
        return q, float(loads.sum(axis=0).max())
    sol = lp_engine.solve(lp)
    if not sol.optimal:
        raise SolverError(f"coordinated peak LP reported {sol.status.value}")
    mask = q_idx >= 0
    q[mask] = np.clip(sol.x[q_idx[mask]], 0.0, flex.q_flex * loads[mask])
    peak = sol.x[p] if p is not None else float((loads - q).sum(axis=0).max())
    return q, float(peak)


def _sor_pass1(args):
    day_loads, flex = args
    return _solve_sor_lp(day_loads[:, None, :], flex)[1]


def _sor_pass2(args):
    day_loads, flex, cap = args
    return _solve_sor_lp(day_loads[:, None, :], flex, peak_cap=cap)[0][:, 0, :]


def solve_sor(
    fleet,
    flexibility: FlexibilityParams,
    index: TimeIndex,
    jobs: int = 1,
    decompose: bool = True,
    c_red_overrides=None,
) -> CaseResult:
    """System-optimal response: the lowest aggregate peak the fleet can reach.

    A first pass finds the smallest achievable peak; a second pass finds the
    least total reduction that keeps the aggregate at that peak.  Days are
    independent except through the common peak, so the first pass solves each
    day for its own minimum and takes the largest, skipping days whose
    untouched peak is already below the running maximum.  Discomfort costs
    (``c_red_overrides`` per consumer) only enter the reported costs.
    """
    overrides = dict(c_red_overrides or {})
    fleet = _ordered_fleet(fleet, index, overrides)
    flex = flexibility
    hpd = index.hours_per_day
    loads = np.stack([c.values for c in fleet]).reshape(len(fleet), index.day_count, hpd)

    if not decompose:
        _, peak = _solve_sor_lp(loads, flex)
        cap = peak + SOR_CAP_SLACK * (1.0 + abs(peak))
        q, _ = _solve_sor_lp(loads, flex, peak_cap=cap)
    else:
        agg_peaks = loads.sum(axis=0).max(axis=1)
        order = np.lexsort((np.arange(index.day_count), -agg_peaks))
        peak = 0.0
        if jobs <= 1:
            for d in order:
                if agg_peaks[d] <= peak:
                    break
                peak = max(peak, _sor_pass1((loads[:, d, :], flex)))
        else:
            # without the running bound every day is a candidate; a lower
            # bound from the hourly caps still prunes most of them
            lower = ((1.0 - flex.q_flex) * loads.sum(axis=0)).max(axis=1)
            best_lower = float(lower.max())
            days = [int(d) for d in order if agg_peaks[d] > best_lower]
            peaks = _map(_sor_pass1, [(loads[:, d, :], flex) for d in days], jobs)
            peak = max([best_lower, *peaks])
        cap = peak + SOR_CAP_SLACK * (1.0 + abs(peak))
        q = np.zeros(loads.shape)
        days = [d for d in range(index.day_count) if agg_peaks[d] > cap]
        parts = _map(_sor_pass2, [(loads[:, d, :], flex, cap) for d in days], jobs)
        for d, part in zip(days, parts):
            q[:, d, :] = part

    q = q.reshape(len(fleet), index.hour_count)
    results = []
    for c, qi in zip(fleet, q):
        res = ResponseResult(
            consumer_id=c.consumer_id,
            new_load=c.values - qi,
            reduction=qi,
            costs=CostBreakdown(flexibility=overrides.get(c.consumer_id, flex.c_red) * float(qi.sum())),
            monthly_peaks=monthly_peaks(c.values - qi, index),
        )
        check_response(c.values, res, flex, index)
        results.append(res)
    return _assemble(CaseKind.SOR, "none", fleet, results, index)


def merged_consumer(fleet, consumer_id: str = "merged") -> LoadSeries:
    """Single consumer whose load is the fleet aggregate."""
    fleet = list(fleet)
    return LoadSeries(consumer_id, _aggregate([c.values for c in fleet]))


def with_peak_days(tariff: TariffSpec, fleet, index: TimeIndex, n_days: int) -> TariffSpec:
    """Dynamic ToU activated on the ``n_days`` highest baseline aggregate days.

    Other tariffs are returned unchanged.
    """
    if not isinstance(tariff, DynamicToU):
        return tariff
    aggregate = _aggregate([c.values for c in fleet])
    days = select_peak_days(aggregate, index, min(n_days, index.day_count))
    return DynamicToU(tariff.c_et, tariff.c_dyn, tariff.peak_start, tariff.peak_end, frozenset(days))

