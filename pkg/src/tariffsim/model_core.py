"""Domain types shared by every other module.

All containers are frozen dataclasses over read-only numpy arrays, so they can
be handed to worker processes and shared without copying defensively.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, RejectedInput

HOURS_PER_YEAR = 8760
# absolute residual allowed on flexibility constraints [kWh]
ENVELOPE_TOL = 1e-7


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeIndex:
    """Hourly horizon partitioned into contiguous days and calendar months."""

    hour_count: int
    hours_per_day: int
    day_of_hour: np.ndarray
    month_of_hour: np.ndarray
    weekday_of_day: np.ndarray
    holiday_days: frozenset[int]
    start_date: dt.date | None = None
    # (year, month) of every month id, in order
    month_labels: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.hours_per_day < 1 or self.hour_count < 1:
            raise RejectedInput("time index needs at least one hour and one hour per day")
        if self.hour_count % self.hours_per_day:
            raise RejectedInput("hour_count must be a whole number of days")
        for name in ("day_of_hour", "month_of_hour", "weekday_of_day"):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=np.int64))
        object.__setattr__(self, "holiday_days", frozenset(int(d) for d in self.holiday_days))

    @property
    def day_count(self) -> int:
        return self.hour_count // self.hours_per_day

    @property
    def month_count(self) -> int:
        return int(self.month_of_hour[-1]) + 1

    @property
    def hour_of_day(self) -> np.ndarray:
        return np.arange(self.hour_count) % self.hours_per_day

    @property
    def calendar_month_of_hour(self) -> np.ndarray:
        """Calendar month number (1-12) of every hour."""
        if not self.month_labels:
            return np.ones(self.hour_count, dtype=np.int64)
        months = np.array([m for _, m in self.month_labels], dtype=np.int64)
        return months[self.month_of_hour]

    def hours_of_day(self, day: int) -> slice:
        if not 0 <= day < self.day_count:
            raise IndexError(f"day {day} outside horizon of {self.day_count} days")
        return slice(day * self.hours_per_day, (day + 1) * self.hours_per_day)

    def days_of_month(self, month: int) -> range:
        hours = np.flatnonzero(self.month_of_hour == month)
        if hours.size == 0:
            raise IndexError(f"month {month} outside horizon")
        return range(hours[0] // self.hours_per_day, hours[-1] // self.hours_per_day + 1)

    def is_workday(self) -> np.ndarray:
        """Per-day flag: Monday-Friday and not a configured holiday."""
        flags = self.weekday_of_day < 5
        for d in self.holiday_days:
            flags[d] = False
        return flags

    def date_of_day(self, day: int) -> dt.date | None:
        if self.start_date is None:
            return None
        return self.start_date + dt.timedelta(days=day)

    def timestamps(self) -> list[dt.datetime]:
        if self.start_date is None or self.hours_per_day != 24:
            raise RejectedInput("timestamps need a calendar-anchored 24-hour index")
        t0 = dt.datetime.combine(self.start_date, dt.time())
        return [t0 + dt.timedelta(hours=h) for h in range(self.hour_count)]

    def subset(self, first_day: int, day_count: int) -> TimeIndex:
        """Index restricted to ``day_count`` days starting at ``first_day``.

        Month ids are renumbered from zero; holiday ids are shifted.
        """
        if first_day < 0 or day_count < 1 or first_day + day_count > self.day_count:
            raise IndexError("day range outside horizon")
        h0 = first_day * self.hours_per_day
        h1 = h0 + day_count * self.hours_per_day
        months = self.month_of_hour[h0:h1]
        m0 = int(months[0])
        labels = self.month_labels[m0 : int(months[-1]) + 1] if self.month_labels else ()
        return TimeIndex(
            hour_count=h1 - h0,
            hours_per_day=self.hours_per_day,
            day_of_hour=self.day_of_hour[h0:h1] - first_day,
            month_of_hour=months - m0,
            weekday_of_day=self.weekday_of_day[first_day : first_day + day_count],
            holiday_days=frozenset(
                d - first_day for d in self.holiday_days if first_day <= d < first_day + day_count
            ),
            start_date=self.date_of_day(first_day),
            month_labels=labels,
        )


def build_time_index(
    start_date: dt.date | str,
    day_count: int,
    holidays=(),
    hours_per_day: int = 24,
) -> TimeIndex:
    """Calendar-anchored index of ``day_count`` days starting at ``start_date``.

    Holidays outside the horizon are ignored.
    """
    try:
        if isinstance(start_date, str):
            start_date = dt.date.fromisoformat(start_date)
        holiday_dates = {
            dt.date.fromisoformat(h) if isinstance(h, str) else h for h in holidays
        }
    except ValueError as exc:
        raise RejectedInput(f"invalid date: {exc}") from None
    if not isinstance(start_date, dt.date):
        raise RejectedInput(f"invalid start date {start_date!r}")
    if int(day_count) < 1:
        raise RejectedInput("day_count must be >= 1")
    day_count = int(day_count)

    dates = [start_date + dt.timedelta(days=d) for d in range(day_count)]
    labels: list[tuple[int, int]] = []
    month_of_day = np.empty(day_count, dtype=np.int64)
    for d, date in enumerate(dates):
        key = (date.year, date.month)
        if not labels or labels[-1] != key:
            labels.append(key)
        month_of_day[d] = len(labels) - 1

    days = np.repeat(np.arange(day_count), hours_per_day)
    return TimeIndex(
        hour_count=day_count * hours_per_day,
        hours_per_day=hours_per_day,
        day_of_hour=days,
        month_of_hour=month_of_day[days],
        weekday_of_day=np.array([date.weekday() for date in dates]),
        holiday_days=frozenset(d for d, date in enumerate(dates) if date in holiday_dates),
        start_date=start_date,
        month_labels=tuple(labels),
    )


@dataclass(frozen=True, eq=False)
class LoadSeries:
    """Hourly metered consumption of one consumer [kWh/h]."""

    consumer_id: str
    values: np.ndarray
    consumer_type: str = "household"

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise RejectedInput("load series must be one-dimensional")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise RejectedInput(f"load series {self.consumer_id!r} has negative or non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "consumer_id", str(self.consumer_id))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class SpotPriceSeries:
    """Hourly day-ahead price [NOK/kWh]; negative prices are allowed."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise RejectedInput("spot prices must be a finite one-dimensional series")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class FlexibilityParams:
    """Generic demand-response envelope.

    ``q_flex`` caps the hourly reduction as a share of that hour's load,
    ``e_flex`` caps the daily reduced energy as a share of the daily energy,
    and ``c_red`` is the discomfort cost per reduced kWh.
    """

    q_flex: float = 0.25
    e_flex: float = 0.025
    c_red: float = 0.30

    def __post_init__(self):
        if not (0.0 <= self.q_flex <= 1.0 and 0.0 <= self.e_flex <= 1.0):
            raise RejectedInput("q_flex and e_flex must lie in [0, 1]")
        if not (self.c_red >= 0.0 and np.isfinite(self.c_red)):
            raise RejectedInput("c_red must be a finite non-negative cost")


@dataclass(frozen=True)
class CostBreakdown:
    electricity: float = 0.0
    grid: float = 0.0
    flexibility: float = 0.0

    @property
    def total(self) -> float:
        return self.electricity + self.grid + self.flexibility

    def __add__(self, other: CostBreakdown) -> CostBreakdown:
        return CostBreakdown(
            self.electricity + other.electricity,
            self.grid + other.grid,
            self.flexibility + other.flexibility,
        )


@dataclass(frozen=True, eq=False)
class ResponseResult:
    consumer_id: str
    new_load: np.ndarray
    reduction: np.ndarray
    costs: CostBreakdown
    subscription: float | None = None
    monthly_peaks: np.ndarray | None = None
    lp_objective: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "new_load", _frozen(self.new_load))
        object.__setattr__(self, "reduction", _frozen(self.reduction))
        if self.monthly_peaks is not None:
            object.__setattr__(self, "monthly_peaks", _frozen(self.monthly_peaks))


def daily_energy(load: LoadSeries | np.ndarray, index: TimeIndex, day: int) -> float:
    """Energy consumed on ``day`` [kWh]."""
    values = load.values if isinstance(load, LoadSeries) else np.asarray(load, dtype=float)
    return float(values[index.hours_of_day(day)].sum())


def daily_energies(values: np.ndarray, index: TimeIndex) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(index.day_count, index.hours_per_day).sum(axis=1)


def envelope_residuals(
    load: np.ndarray, result: ResponseResult, flex: FlexibilityParams, index: TimeIndex
) -> dict[str, float]:
    """Largest violation of each flexibility constraint (0 when satisfied)."""
    load = np.asarray(load, dtype=float)
    q = result.reduction
    return {
        "balance": float(np.max(np.abs(result.new_load - (load - q)), initial=0.0)),
        "hourly_lower": float(np.max(-q, initial=0.0)),
        "hourly_cap": float(np.max(q - flex.q_flex * load, initial=0.0)),
        "daily_cap": float(
            np.max(daily_energies(q, index) - flex.e_flex * daily_energies(load, index), initial=0.0)
        ),
    }


def check_response(
    load: np.ndarray,
    result: ResponseResult,
    flex: FlexibilityParams,
    index: TimeIndex,
    tol: float = ENVELOPE_TOL,
) -> None:
    """Raise InvariantViolation if the result leaves the flexibility envelope."""
    residuals = envelope_residuals(load, result, flex, index)
    bad = {k: v for k, v in residuals.items() if v > tol}
    if bad:
        raise InvariantViolation(f"consumer {result.consumer_id}: envelope violated {bad}")
