"""Constructed fleets that isolate one tariff effect each."""

from __future__ import annotations

import numpy as np

from .model_core import LoadSeries, SpotPriceSeries, build_time_index


def plateau_fleet(n_consumers=50, days=5, seed=0, start="2021-01-04"):
    """Consumers whose load sits on a plateau from 08:00 through 21:00.

    The default horizon is one winter work week, so a static time-of-use
    window covers every day.  The spot price is high only in the afternoon
    (13:00-16:00) and near zero elsewhere, so spot-driven reductions miss
    most of the plateau.
    """
    rng = np.random.default_rng(seed)
    idx = build_time_index(start, days)
    hour = idx.hour_of_day
    shape = np.where((hour >= 8) & (hour <= 21), 1.0, 0.3)
    fleet = []
    for i in range(n_consumers):
        level = rng.uniform(1.0, 3.0)
        day_scale = np.repeat(rng.uniform(0.9, 1.1, days), 24)
        fleet.append(LoadSeries(f"p{i:03d}", level * shape * day_scale))
    spot = np.where((hour >= 13) & (hour <= 16), 2.0, 0.02)
    return fleet, SpotPriceSeries(spot), idx


def off_peak_demand_fleet(n_consumers=50, days=28, seed=0, start="2021-02-01"):
    """Each consumer peaks on a private day; the system peaks elsewhere.

    Every consumer has a sharp personal spike on its own day, tall enough to
    be its monthly peak, while the aggregate peak is on day 0 in the
    afternoon where the spot price is highest.
    """
    rng = np.random.default_rng(seed)
    idx = build_time_index(start, days)
    hour = idx.hour_of_day
    day = idx.day_of_hour
    base = np.where((hour >= 8) & (hour <= 21), 1.0, 0.4)
    afternoon = (hour >= 13) & (hour <= 16)
    fleet = []
    for i in range(n_consumers):
        level = rng.uniform(1.0, 2.0)
        load = level * base.copy()
        load[(day == 0) & afternoon] = 1.6 * level
        own_day = 1 + i % (days - 1)
        load[(day == own_day) & (hour == 3 + i % 4)] = 2.5 * level
        fleet.append(LoadSeries(f"d{i:03d}", load))
    spot = np.where(afternoon, 2.0, 0.02)
    return fleet, SpotPriceSeries(spot), idx


def proportional_fleet(rng, n_consumers, days):
    """Every consumer follows the same hourly shape within a day.

    Per-consumer, per-day scale factors vary freely, which keeps the fleet
    exactly equivalent to a single merged consumer under coordinated control.
    """
    idx = build_time_index("2021-01-04", days)
    shape = rng.uniform(0.2, 3.0, idx.hour_count)
    fleet = []
    for i in range(n_consumers):
        scale = np.repeat(rng.uniform(0.1, 5.0, days), 24)
        fleet.append(LoadSeries(f"u{i:03d}", shape * scale))
    return fleet, idx
