"""Per-consumer cost-minimizing response to a grid tariff and spot price.

The consumer picks hourly reductions ``q_t`` inside the flexibility envelope
to minimize electricity + grid + discomfort cost.  The new load ``L_t - q_t``
is substituted everywhere, so ``q`` is the only per-hour decision for the
volumetric tariffs.  Among cost-optimal responses, a second LP stage picks
the one spreading reductions evenly (equal ``q_t / L_t``) over hours that
are equally attractive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp_engine
from .errors import AssemblyError, ConfigurationError, InvariantViolation, RejectedInput
from .lp_engine import LinearProgram, Sense
from .model_core import (
    CostBreakdown,
    FlexibilityParams,
    LoadSeries,
    ResponseResult,
    SpotPriceSeries,
    TimeIndex,
    check_response,
    daily_energies,
)
from .tariffs import (
    DemandCharge,
    SubscribedCapacity,
    TariffSpec,
    grid_cost,
    is_volumetric,
    monthly_peaks,
    restrict_tariff,
    subscription_share,
    volumetric_rates,
)

# relative slack on the cost-fixing row of the tie-break stage
TIE_BREAK_EPS = 1e-12
# loads below this are treated as zero: no reduction, no share [kWh/h]
LOAD_FLOOR = 1e-9
# hours below this share of the day's peak load stay out of the share balancing
SHARE_FLOOR_REL = 1e-4
# relative agreement required between LP objective and direct re-pricing
COST_MATCH_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class ConsumerProblem:
    load: LoadSeries
    flexibility: FlexibilityParams
    tariff: TariffSpec
    index: TimeIndex
    spot: SpotPriceSeries | None = None
    fixed_subscription: float | None = None

    def __post_init__(self):
        n = self.index.hour_count
        if len(self.load) != n:
            raise AssemblyError(f"load of {self.load.consumer_id} has {len(self.load)} hours, index {n}")
        if self.spot is not None and len(self.spot) != n:
            raise AssemblyError(f"spot series has {len(self.spot)} hours, index {n}")
        if self.fixed_subscription is not None and not isinstance(self.tariff, SubscribedCapacity):
            raise AssemblyError("a fixed subscription only applies to subscribed-capacity tariffs")

    @property
    def spot_values(self) -> np.ndarray:
        return np.zeros(self.index.hour_count) if self.spot is None else self.spot.values

    def restrict(self, first_day: int, day_count: int) -> ConsumerProblem:
        idx = self.index
        hours = slice(first_day * idx.hours_per_day, (first_day + day_count) * idx.hours_per_day)
        return ConsumerProblem(
            load=LoadSeries(self.load.consumer_id, self.load.values[hours], self.load.consumer_type),
            flexibility=self.flexibility,
            tariff=restrict_tariff(self.tariff, first_day, day_count),
            index=idx.subset(first_day, day_count),
            spot=None if self.spot is None else SpotPriceSeries(self.spot.values[hours]),
            fixed_subscription=self.fixed_subscription,
        )


@dataclass
class VariableLayout:
    """Where each model quantity lives in the assembled LP.

    ``offset`` is the constant part of the cost that the substitution
    ``x = L - q`` moves out of the objective.
    """

    q: np.ndarray
    offset: float
    x_high: np.ndarray | None = None
    x_max: np.ndarray | None = None
    daily_rows: list[int] = field(default_factory=list)
    peak_rows: list[int] = field(default_factory=list)


def optimal_subscription(load, tariff: SubscribedCapacity, index: TimeIndex) -> float:
    """Cost-minimizing capacity subscription for a load without flexibility [kW].

    Subscribing one more kW costs ``c_sub`` (prorated to the horizon) and
    saves ``c_h - c_et`` in every hour whose load exceeds the level, so the
    optimum sits on the load-duration curve where that many hours remain
    above; flat stretches resolve to the lowest level.
    """
    if not isinstance(tariff, SubscribedCapacity):
        raise ConfigurationError("optimal_subscription needs a subscribed-capacity tariff")
    if not tariff.c_h > tariff.c_et:
        raise ConfigurationError("c_h must exceed c_et")
    values = load.values if isinstance(load, LoadSeries) else np.asarray(load, dtype=float)
    if values.shape != (index.hour_count,):
        raise RejectedInput("load length does not match the time index")
    hours_above = tariff.c_sub * subscription_share(index) / (tariff.c_h - tariff.c_et)
    desc = np.sort(values)[::-1]
    j = int(math.floor(hours_above))
    return float(desc[j]) if j < desc.size else 0.0


def subscription_lp(load, tariff: SubscribedCapacity, index: TimeIndex, form: str = "primal"):
    """Stage-1 subscription choice as an LP; returns (subscription, total grid cost).

    ``primal`` keeps the subscription as a variable with the below/above split
    of every hour.  ``dual`` solves the one-row dual, whose multiplier is the
    subscription; it scales to a full year where the primal basis does not.
    """
    values = load.values if isinstance(load, LoadSeries) else np.asarray(load, dtype=float)
    T = values.size
    fee = tariff.c_sub * subscription_share(index)
    spread = tariff.c_h - tariff.c_et
    if form == "primal":
        lp = LinearProgram([fee], [0.0], [np.inf])
        x_low = lp.add_variables(np.full(T, tariff.c_et))
        x_high = lp.add_variables(np.full(T, tariff.c_h))
        for t in range(T):
            lp.add_row([x_low[t], x_high[t]], [1.0, 1.0], Sense.EQ, values[t])
            lp.add_row([x_low[t], 0], [1.0, -1.0], Sense.LE, 0.0)
        sol = lp_engine.solve(lp)
        return float(sol.x[0]), sol.objective
    if form == "dual":
        # max sum_t L_t mu_t  s.t.  sum_t mu_t <= fee,  0 <= mu_t <= spread
        lp = LinearProgram(-values, np.zeros(T), np.full(T, spread))
        lp.add_row(np.arange(T), np.ones(T), Sense.LE, fee)
        sol = lp_engine.solve(lp)
        return float(-sol.duals[0]), tariff.c_et * float(values.sum()) - sol.objective
    raise RejectedInput(f"unknown form {form!r}")


def build_problem(problem: ConsumerProblem, prune: bool = True) -> tuple[LinearProgram, VariableLayout]:
    """Assemble the consumer LP over the problem's whole horizon.

    With ``prune`` the program is shrunk without changing its optimum:
    reductions that cannot save more than they cost get an upper bound of
    zero, and demand-charge peak rows are only written for hours that could
    still set the monthly peak after every hour is cut by its cap.
    """
    idx = problem.index
    flex = problem.flexibility
    tariff = problem.tariff
    L = problem.load.values
    T = idx.hour_count
    spot = problem.spot_values

    if isinstance(tariff, SubscribedCapacity) and problem.fixed_subscription is None:
        raise AssemblyError("subscribed-capacity problem assembled without a fixed subscription")

    rates = volumetric_rates(tariff, idx)
    coef = flex.c_red - spot - rates
    cap = np.where(L > LOAD_FLOOR, flex.q_flex * L, 0.0)
    # best marginal value of reducing each hour, on top of the volumetric price
    best = coef.copy()
    peak_hours = np.ones(T, dtype=bool)
    if isinstance(tariff, SubscribedCapacity):
        best = best - (tariff.c_h - tariff.c_et) * (L > problem.fixed_subscription)
    elif isinstance(tariff, DemandCharge):
        floor = np.maximum.reduceat((L - cap), _month_starts(idx))[idx.month_of_hour]
        peak_hours = L > floor
        best = np.where(peak_hours, -np.inf, best)
    if prune:
        cap = np.where(best < 0, cap, 0.0)
    else:
        peak_hours[:] = True

    lp = LinearProgram()
    q = lp.add_variables(coef, 0.0, cap)
    layout = VariableLayout(q=q, offset=float((spot + rates) @ L))

    if isinstance(tariff, SubscribedCapacity):
        # energy above the subscription pays c_h - c_et extra; hours already
        # at or below it can only move further down, so they need no excess
        sub = float(problem.fixed_subscription)
        over = np.flatnonzero(L > sub)
        layout.x_high = lp.add_variables(np.full(over.size, tariff.c_h - tariff.c_et), 0.0, np.inf)
        for k, t in enumerate(over):
            lp.add_row([q[t], layout.x_high[k]], [-1.0, -1.0], Sense.LE, sub - L[t])
        layout.offset += sub * tariff.c_sub * subscription_share(idx)
    elif isinstance(tariff, DemandCharge):
        layout.x_max = lp.add_variables(np.full(idx.month_count, tariff.c_peak), 0.0, np.inf)
        for t in np.flatnonzero(peak_hours):
            xm = layout.x_max[idx.month_of_hour[t]]
            layout.peak_rows.append(lp.add_row([q[t], xm], [-1.0, -1.0], Sense.LE, -L[t]))

    budgets = flex.e_flex * daily_energies(L, idx)
    for d in range(idx.day_count):
        hours = q[idx.hours_of_day(d)]
        hours = hours[lp.upper[hours] > 0] if prune else hours
        if hours.size:
            layout.daily_rows.append(lp.add_row(hours, 1.0, Sense.LE, budgets[d]))
    return lp, layout


def _month_starts(idx: TimeIndex) -> np.ndarray:
    return np.flatnonzero(np.diff(idx.month_of_hour, prepend=-1))


def _add_tie_break(lp: LinearProgram, layout: VariableLayout, problem: ConsumerProblem) -> np.ndarray:
    """Append min-max share variables; return the secondary objective.

    Within each day, hours whose reduction has the same cost coefficient form
    a class.  A class of several hours gets an auxiliary ``m >= q_t / (Q L_t)``
    and the secondary objective sums these maxima, which among cost-optimal
    solutions spreads the class's reduction in proportion to load.
    Single-hour classes get their share directly in the objective.
    """
    flex = problem.flexibility
    L = problem.load.values
    idx = problem.index
    secondary = np.zeros(lp.n)
    if flex.q_flex == 0:
        return secondary
    pending_rows = []
    coef = lp.c[layout.q]
    for d in range(idx.day_count):
        hours = np.arange(idx.hours_of_day(d).start, idx.hours_of_day(d).stop)
        hours = hours[lp.upper[layout.q[hours]] > 0]
        if hours.size:
            hours = hours[L[hours] >= SHARE_FLOOR_REL * L[hours].max()]
        keys = np.round(coef[hours], 12)
        for key in np.unique(keys):
            members = hours[keys == key]
            if members.size == 1:
                t = members[0]
                secondary[layout.q[t]] = 1.0 / (flex.q_flex * L[t])
            else:
                pending_rows.append(members)
    if pending_rows:
        aux = lp.add_variables(np.zeros(len(pending_rows)), 0.0, 1.0)
        secondary = np.concatenate([secondary, np.ones(len(pending_rows))])
        for m_var, members in zip(aux, pending_rows):
            for t in members:
                lp.add_row([m_var, layout.q[t]], [1.0, -1.0 / (flex.q_flex * L[t])], Sense.GE, 0.0)
    return secondary


def _blocks(problem: ConsumerProblem) -> list[tuple[int, int]]:
    idx = problem.index
    if isinstance(problem.tariff, DemandCharge):
        return [(r.start, len(r)) for r in (idx.days_of_month(m) for m in range(idx.month_count))]
    return [(d, 1) for d in range(idx.day_count)]


def _solve_block(problem: ConsumerProblem) -> tuple[np.ndarray, float]:
    lp, layout = build_problem(problem)
    if not np.any(lp.upper[layout.q] > 0):
        # no reduction can pay off: the response is the baseline
        q = np.zeros(problem.index.hour_count)
        return q, price_response(problem, q).costs.total
    secondary = _add_tie_break(lp, layout, problem)
    sol = lp_engine.solve_lexicographic(lp, secondary, epsilon_rel=TIE_BREAK_EPS)
    if not sol.optimal:
        raise lp_engine.SolverError(f"consumer problem reported {sol.status.value}")
    return sol.x[layout.q], sol.primary_objective + layout.offset


def price_response(problem: ConsumerProblem, q: np.ndarray, lp_objective: float | None = None) -> ResponseResult:
    """Package a reduction vector: clip to bounds, re-price, check invariants."""
    L = problem.load.values
    flex = problem.flexibility
    q = np.clip(q, 0.0, flex.q_flex * L)
    new_load = L - q
    electricity = float(problem.spot.values @ new_load) if problem.spot is not None else 0.0
    grid = grid_cost(problem.tariff, new_load, problem.index, problem.fixed_subscription)
    costs = CostBreakdown(electricity, grid, flex.c_red * float(q.sum()))
    peaks = monthly_peaks(new_load, problem.index)
    result = ResponseResult(
        consumer_id=problem.load.consumer_id,
        new_load=new_load,
        reduction=q,
        costs=costs,
        subscription=problem.fixed_subscription,
        monthly_peaks=peaks,
        lp_objective=lp_objective,
    )
    check_response(L, result, flex, problem.index)
    return result


def solve_consumer(problem: ConsumerProblem, decompose: bool = True) -> ResponseResult:
    """Cost-optimal response of one consumer, with the equal-share tie-break.

    Volumetric and subscribed-capacity problems separate by day, demand
    charges by month; ``decompose=False`` solves the horizon as one LP.
    """
    try:
        if decompose:
            blocks = _blocks(problem)
            parts = [_solve_block(problem.restrict(first, count)) for first, count in blocks]
            q = np.concatenate([p[0] for p in parts])
            lp_total = sum(p[1] for p in parts)
        else:
            q, lp_total = _solve_block(problem)
    except lp_engine.SolverError as exc:
        raise lp_engine.SolverError(f"consumer {problem.load.consumer_id}: {exc}") from None
    result = price_response(problem, q, lp_total)
    direct = result.costs.total
    if abs(direct - lp_total) > COST_MATCH_TOL * (1.0 + abs(direct)):
        raise InvariantViolation(
            f"consumer {problem.load.consumer_id}: LP cost {lp_total!r} != re-priced cost {direct!r}"
        )
    return result


def zero_response(problem: ConsumerProblem) -> ResponseResult:
    return price_response(problem, np.zeros(problem.index.hour_count))


def greedy_volumetric_oracle(problem: ConsumerProblem) -> ResponseResult:
    """Closed-form optimum for tariffs without capacity coupling.

    Each day, hours are filled to their cap in decreasing order of net
    saving ``price - c_red`` until the daily budget is spent; hours with
    equal saving share their portion in proportion to load.
    """
    if not is_volumetric(problem.tariff):
        raise RejectedInput(f"greedy oracle cannot price {problem.tariff.name}")
    idx = problem.index
    flex = problem.flexibility
    L = problem.load.values
    price = problem.spot_values + volumetric_rates(problem.tariff, idx)
    gain = price - flex.c_red
    budgets = flex.e_flex * daily_energies(L, idx)
    q = np.zeros(idx.hour_count)
    for d in range(idx.day_count):
        hours = np.arange(idx.hours_of_day(d).start, idx.hours_of_day(d).stop)
        left = budgets[d]
        for level in sorted(set(gain[hours].tolist()), reverse=True):
            if level <= 0 or left <= 0:
                break
            group = hours[(gain[hours] == level) & (L[hours] > LOAD_FLOOR)]
            energy = L[group].sum()
            if energy <= 0:
                continue
            take = min(left, flex.q_flex * energy)
            q[group] = take * L[group] / energy
            left -= take
    return price_response(problem, q)
