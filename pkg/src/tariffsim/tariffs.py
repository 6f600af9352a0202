"""Grid tariff designs, their cost of a load path, and revenue calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import ClassVar, Union

import numpy as np

from .errors import CalibrationError, ConfigurationError, RejectedInput
from .model_core import HOURS_PER_YEAR, LoadSeries, TimeIndex

WINTER_MONTHS = frozenset({11, 12, 1, 2, 3})


def _nonnegative(**params):
    for key, value in params.items():
        if not (value >= 0 and math.isfinite(value)):
            raise ConfigurationError(f"{key} must be a finite non-negative cost, got {value!r}")


@dataclass(frozen=True)
class FlatEnergy:
    c_et: float = 0.25

    name: ClassVar[str] = "flat"

    def __post_init__(self):
        _nonnegative(c_et=self.c_et)


@dataclass(frozen=True)
class StaticToU:
    c_et: float = 0.25
    c_tou: float = 1.2
    peak_start: int = 6
    peak_end: int = 22
    winter_months: frozenset = WINTER_MONTHS
    applies_weekends_holidays: bool = False

    name: ClassVar[str] = "static_tou"
    design_parameter: ClassVar[str] = "c_tou"

    def __post_init__(self):
        _nonnegative(c_et=self.c_et, c_tou=self.c_tou)
        if self.c_tou < self.c_et:
            raise ConfigurationError("c_tou must not be below c_et")
        object.__setattr__(self, "winter_months", frozenset(int(m) for m in self.winter_months))


@dataclass(frozen=True)
class DynamicToU:
    c_et: float = 0.25
    c_dyn: float = 4.5
    peak_start: int = 6
    peak_end: int = 22
    active_days: frozenset = field(default_factory=frozenset)

    name: ClassVar[str] = "dynamic_tou"
    design_parameter: ClassVar[str] = "c_dyn"

    def __post_init__(self):
        _nonnegative(c_et=self.c_et, c_dyn=self.c_dyn)
        if self.c_dyn < self.c_et:
            raise ConfigurationError("c_dyn must not be below c_et")
        object.__setattr__(self, "active_days", frozenset(int(d) for d in self.active_days))


@dataclass(frozen=True)
class DemandCharge:
    c_et: float = 0.25
    c_peak: float = 75.0

    name: ClassVar[str] = "demand_charge"
    design_parameter: ClassVar[str] = "c_peak"

    def __post_init__(self):
        _nonnegative(c_et=self.c_et, c_peak=self.c_peak)


@dataclass(frozen=True)
class SubscribedCapacity:
    c_et: float = 0.25
    c_h: float = 1.65
    c_sub: float = 1000.0

    name: ClassVar[str] = "subscribed_capacity"
    design_parameter: ClassVar[str] = "c_sub"

    def __post_init__(self):
        _nonnegative(c_et=self.c_et, c_h=self.c_h, c_sub=self.c_sub)
        if not self.c_h > self.c_et:
            raise ConfigurationError("c_h must exceed c_et for a subscribed-capacity tariff")


TariffSpec = Union[FlatEnergy, StaticToU, DynamicToU, DemandCharge, SubscribedCapacity]
TARIFF_TYPES = {cls.name: cls for cls in (FlatEnergy, StaticToU, DynamicToU, DemandCharge, SubscribedCapacity)}
DESIGNS = ("static_tou", "dynamic_tou", "demand_charge", "subscribed_capacity")


def is_volumetric(tariff: TariffSpec) -> bool:
    return isinstance(tariff, (FlatEnergy, StaticToU, DynamicToU))


def subscription_share(index: TimeIndex) -> float:
    """Fraction of the annual subscription fee charged over this horizon."""
    return index.hour_count / HOURS_PER_YEAR


def restrict_tariff(tariff: TariffSpec, first_day: int, day_count: int) -> TariffSpec:
    """Same tariff seen from a sub-horizon starting at ``first_day``.

    Only day-indexed state changes: dynamic peak days are renumbered.
    """
    if isinstance(tariff, DynamicToU):
        days = {d - first_day for d in tariff.active_days if first_day <= d < first_day + day_count}
        return replace(tariff, active_days=frozenset(days))
    return tariff


def peak_window(tariff: TariffSpec, index: TimeIndex) -> np.ndarray:
    """Boolean mask of hours carrying the time-of-use premium."""
    if isinstance(tariff, StaticToU):
        hod = index.hour_of_day
        in_hours = (hod >= tariff.peak_start) & (hod < tariff.peak_end)
        winter = np.isin(index.calendar_month_of_hour, sorted(tariff.winter_months))
        if tariff.applies_weekends_holidays:
            return in_hours & winter
        return in_hours & winter & index.is_workday()[index.day_of_hour]
    if isinstance(tariff, DynamicToU):
        hod = index.hour_of_day
        in_hours = (hod >= tariff.peak_start) & (hod < tariff.peak_end)
        active = np.isin(index.day_of_hour, sorted(tariff.active_days))
        return in_hours & active
    return np.zeros(index.hour_count, dtype=bool)


def volumetric_rates(tariff: TariffSpec, index: TimeIndex) -> np.ndarray:
    """Hourly per-kWh grid rate; for capacity tariffs the base energy term."""
    rates = np.full(index.hour_count, float(tariff.c_et))
    if isinstance(tariff, StaticToU):
        rates[peak_window(tariff, index)] = tariff.c_tou
    elif isinstance(tariff, DynamicToU):
        rates[peak_window(tariff, index)] = tariff.c_dyn
    return rates


def monthly_peaks(load: np.ndarray, index: TimeIndex) -> np.ndarray:
    starts = np.flatnonzero(np.r_[True, np.diff(index.month_of_hour) != 0])
    return np.maximum.reduceat(np.asarray(load, dtype=float), starts)


def _check_load(load, index: TimeIndex) -> np.ndarray:
    values = load.values if isinstance(load, LoadSeries) else np.asarray(load, dtype=float)
    if values.shape != (index.hour_count,):
        raise RejectedInput(f"load has {values.size} hours, index has {index.hour_count}")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise RejectedInput("load must be finite and non-negative")
    return values


def _need_subscription(tariff: TariffSpec, subscription):
    if isinstance(tariff, SubscribedCapacity):
        if subscription is None:
            raise ConfigurationError("a subscribed-capacity tariff needs a subscription level")
        if not (subscription >= 0 and math.isfinite(subscription)):
            raise ConfigurationError(f"invalid subscription {subscription!r}")
        return float(subscription)
    return None


def grid_cost(tariff: TariffSpec, load, index: TimeIndex, subscription: float | None = None) -> float:
    """Grid tariff cost [NOK] of a load path over the horizon."""
    values = _check_load(load, index)
    sub = _need_subscription(tariff, subscription)
    if isinstance(tariff, SubscribedCapacity):
        below = np.minimum(values, sub)
        above = values - below
        return float(
            sub * tariff.c_sub * subscription_share(index)
            + tariff.c_et * below.sum()
            + tariff.c_h * above.sum()
        )
    energy = float(volumetric_rates(tariff, index) @ values)
    if isinstance(tariff, DemandCharge):
        return energy + tariff.c_peak * float(monthly_peaks(values, index).sum())
    return energy


@dataclass(frozen=True, eq=False)
class PriceSignal:
    """Marginal grid cost of one more kWh in each hour [NOK/kWh].

    ``capacity_based`` flags hours whose signal comes from a peak charge
    rather than a volumetric rate.
    """

    values: np.ndarray
    capacity_based: np.ndarray


def marginal_price_signal(
    tariff: TariffSpec, baseline_load, index: TimeIndex, subscription: float | None = None
) -> PriceSignal:
    values = _check_load(baseline_load, index)
    sub = _need_subscription(tariff, subscription)
    flags = np.zeros(index.hour_count, dtype=bool)
    if isinstance(tariff, SubscribedCapacity):
        signal = np.where(values >= sub, tariff.c_h, tariff.c_et)
        return PriceSignal(signal.astype(float), flags)
    signal = volumetric_rates(tariff, index)
    if isinstance(tariff, DemandCharge):
        for m in range(index.month_count):
            hours = np.flatnonzero(index.month_of_hour == m)
            t = hours[int(np.argmax(values[hours]))]
            signal[t] += tariff.c_peak
            flags[t] = True
    return PriceSignal(signal, flags)


def daily_peaks(aggregate_load, index: TimeIndex) -> np.ndarray:
    values = np.asarray(aggregate_load, dtype=float)
    return values.reshape(index.day_count, index.hours_per_day).max(axis=1)


def select_peak_days(aggregate_load, index: TimeIndex, n_days: int) -> list[int]:
    """The ``n_days`` days with the highest hourly aggregate load, ascending.

    Ties go to the earlier day.
    """
    if n_days < 0 or n_days > index.day_count:
        raise RejectedInput(f"cannot pick {n_days} peak days out of {index.day_count}")
    peaks = daily_peaks(aggregate_load, index)
    order = np.lexsort((np.arange(index.day_count), -peaks))
    return sorted(int(d) for d in order[:n_days])


# -- revenue calibration -------------------------------------------------------


def _subscription_revenue_fn(tariff: SubscribedCapacity, loads, index: TimeIndex):
    """Revenue as a function of c_sub with each consumer re-subscribing optimally."""
    share = subscription_share(index)
    prepared = []
    for values in loads:
        desc = np.sort(values)[::-1]
        # tail[j] = sum of desc[j:], head[j] = sum of desc[:j]
        head = np.concatenate([[0.0], np.cumsum(desc)])
        prepared.append((desc, head))
    spread = tariff.c_h - tariff.c_et

    def revenue(c_sub: float) -> float:
        total = 0.0
        k = c_sub * share / spread
        for desc, head in prepared:
            j = min(int(math.floor(k)), desc.size)
            x = desc[j] if j < desc.size else 0.0
            exceed = head[j] - j * x
            energy = head[-1]
            total += x * c_sub * share + tariff.c_et * (energy - exceed) + tariff.c_h * exceed
        return total

    return revenue


def tariff_revenue(tariff: TariffSpec, loads, index: TimeIndex) -> float:
    """Total grid revenue over all consumers' loads without any response.

    Subscribed-capacity consumers are assumed to hold their optimal
    subscription for these loads.
    """
    arrays = [_check_load(load, index) for load in loads]
    if isinstance(tariff, SubscribedCapacity):
        return _subscription_revenue_fn(tariff, arrays, index)(tariff.c_sub)
    return sum(grid_cost(tariff, values, index) for values in arrays)


def calibrate(
    tariff: TariffSpec,
    baseline_loads,
    index: TimeIndex,
    reference: FlatEnergy,
    upper_scale: float = 1e6,
    rel_width: float = 1e-12,
) -> TariffSpec:
    """Scale the design parameter so baseline revenue equals the reference.

    The energy term ``c_et`` stays fixed; the root is bracketed on
    ``[0, upper_scale]`` and bisected to ``rel_width``.
    """
    if isinstance(tariff, FlatEnergy):
        return tariff
    arrays = [_check_load(load, index) for load in baseline_loads]
    if not arrays:
        raise RejectedInput("calibration needs at least one baseline load")
    if not reference.c_et > 0:
        raise CalibrationError("reference energy term must be positive")
    target = reference.c_et * sum(float(v.sum()) for v in arrays)
    param = tariff.design_parameter
    base_value = getattr(tariff, param)
    if base_value <= 0:
        raise CalibrationError(f"{tariff.name}: {param} is zero, nothing to scale")

    if isinstance(tariff, SubscribedCapacity):
        sub_rev = _subscription_revenue_fn(tariff, arrays, index)

        def revenue(s):
            return sub_rev(s * base_value)

    else:
        total = sum(arrays)
        if isinstance(tariff, DemandCharge):
            fixed = tariff.c_et * float(total.sum())
            variable = base_value * sum(float(monthly_peaks(v, index).sum()) for v in arrays)
        else:
            window = peak_window(tariff, index)
            fixed = tariff.c_et * float(total[~window].sum())
            variable = base_value * float(total[window].sum())

        def revenue(s):
            return fixed + s * variable

    lo, hi = 0.0, float(upper_scale)
    r_lo, r_hi = revenue(lo), revenue(hi)
    if r_lo > target:
        raise CalibrationError(
            f"{tariff.name}: revenue {r_lo:.6g} NOK already exceeds reference {target:.6g} NOK "
            f"with {param}=0 (gap {r_lo - target:.6g} NOK)"
        )
    if r_hi < target:
        raise CalibrationError(
            f"{tariff.name}: revenue {r_hi:.6g} NOK stays below reference {target:.6g} NOK "
            f"(gap {target - r_hi:.6g} NOK)"
        )
    while hi - lo > rel_width * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if revenue(mid) < target:
            lo = mid
        else:
            hi = mid
    # pick the bracket end whose revenue is closer to the target
    scale = lo if abs(revenue(lo) - target) <= abs(revenue(hi) - target) else hi
    try:
        return replace(tariff, **{param: base_value * scale})
    except ConfigurationError as exc:
        raise CalibrationError(f"{tariff.name}: calibrated {param} is invalid ({exc})") from None


def revenue_ratio(tariff: TariffSpec, baseline_loads, index: TimeIndex, reference: FlatEnergy) -> float:
    arrays = [_check_load(load, index) for load in baseline_loads]
    target = reference.c_et * sum(float(v.sum()) for v in arrays)
    return tariff_revenue(tariff, arrays, index) / target
