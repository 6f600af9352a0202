"""CSV ingestion, a synthetic fleet generator and result writers.

File layouts (UTF-8, comma separated, '.' decimals, one header line):

``loads.csv``          timestamp,consumer_id,consumer_type,load_kwh
``spot.csv``           timestamp,price_nok_per_kwh
``results.csv``        case,tariff,baseline_peak_kw,new_peak_kw,reduction_pct,total_cost_nok
``peak_day_loads.csv`` timestamp, then per (case, tariff) the pair
                       ``<case>:<tariff>:baseline``, ``<case>:<tariff>:new``
``price_signals.csv``  timestamp, spot, then one load-weighted grid signal
                       column per tariff design

Timestamps are naive local hours written as ``YYYY-MM-DDTHH:MM``.  The
generator draws from numpy's PCG64 seeded through ``SeedSequence``; the fleet
and the spot noise use separate child streams.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, OutputError, RejectedInput
from .model_core import LoadSeries, SpotPriceSeries, TimeIndex, build_time_index

LOAD_HEADER = ("timestamp", "consumer_id", "consumer_type", "load_kwh")
SPOT_HEADER = ("timestamp", "price_nok_per_kwh")
RESULTS_HEADER = ("case", "tariff", "baseline_peak_kw", "new_peak_kw", "reduction_pct", "total_cost_nok")
CONSUMER_TYPES = ("household", "commercial")
TIME_FORMAT = "%Y-%m-%dT%H:%M"


def format_time(t: dt.datetime) -> str:
    return t.strftime(TIME_FORMAT)


def _parse_time(text: str, line: int, path) -> dt.datetime:
    try:
        t = dt.datetime.fromisoformat(text.strip())
    except ValueError:
        raise IngestionError(f"{path}:{line}: bad timestamp {text!r}") from None
    if t.tzinfo is not None or t.minute or t.second or t.microsecond:
        raise IngestionError(f"{path}:{line}: timestamp {text!r} is not a naive whole hour")
    return t


def _parse_float(text: str, what: str, line: int, path) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"{path}:{line}: bad {what} {text!r}") from None
    if not math.isfinite(value):
        raise IngestionError(f"{path}:{line}: {what} is not finite")
    return value


def _rows(path, header):
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"{path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first is None or tuple(h.strip() for h in first) != header:
            raise IngestionError(f"{path}:1: expected header {','.join(header)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def _hour_grid(start: dt.datetime, end: dt.datetime, path) -> int:
    """Number of hours from ``start`` through ``end``; must be whole days."""
    if start.hour:
        raise IngestionError(f"{path}: data must start at midnight, starts {format_time(start)}")
    hours = int((end - start).total_seconds() // 3600) + 1
    if hours % 24:
        raise IngestionError(f"{path}: data must cover whole days, ends {format_time(end)}")
    return hours


def read_load_csv(path, holidays=()) -> tuple[list[LoadSeries], TimeIndex]:
    """Load series per consumer, aligned on a common hourly index.

    Consumers are returned in order of first appearance.
    """
    series: dict[str, dict[dt.datetime, float]] = {}
    types: dict[str, str] = {}
    last_line: dict[str, int] = {}
    for line, (ts, cid, ctype, value) in _rows(path, LOAD_HEADER):
        t = _parse_time(ts, line, path)
        cid = cid.strip()
        ctype = ctype.strip()
        if not cid:
            raise IngestionError(f"{path}:{line}: empty consumer id")
        if ctype not in CONSUMER_TYPES:
            raise IngestionError(f"{path}:{line}: unknown consumer type {ctype!r}")
        load = _parse_float(value, "load", line, path)
        if load < 0:
            raise IngestionError(f"{path}:{line}: negative load {load} for consumer {cid}")
        hours = series.setdefault(cid, {})
        if t in hours:
            raise IngestionError(f"{path}:{line}: duplicate hour {format_time(t)} for consumer {cid}")
        if types.setdefault(cid, ctype) != ctype:
            raise IngestionError(f"{path}:{line}: consumer {cid} changes type to {ctype}")
        hours[t] = load
        last_line[cid] = line
    if not series:
        raise IngestionError(f"{path}: no data rows")

    start = min(min(h) for h in series.values())
    end = max(max(h) for h in series.values())
    n = _hour_grid(start, end, path)
    grid = [start + dt.timedelta(hours=k) for k in range(n)]
    fleet = []
    for cid, hours in series.items():
        missing = next((t for t in grid if t not in hours), None)
        if missing is not None:
            raise IngestionError(
                f"{path}:{last_line[cid]}: consumer {cid} is missing hour {format_time(missing)}"
            )
        fleet.append(LoadSeries(cid, np.array([hours[t] for t in grid]), types[cid]))
    index = build_time_index(start.date(), n // 24, holidays=holidays)
    return fleet, index


def read_spot_csv(path, index: TimeIndex | None = None) -> SpotPriceSeries:
    """Hourly spot prices; negative prices are accepted.

    With ``index`` the series must start on its first day and match its length.
    """
    prices: dict[dt.datetime, float] = {}
    for line, (ts, value) in _rows(path, SPOT_HEADER):
        t = _parse_time(ts, line, path)
        if t in prices:
            raise IngestionError(f"{path}:{line}: duplicate hour {format_time(t)}")
        prices[t] = _parse_float(value, "price", line, path)
    if not prices:
        raise IngestionError(f"{path}: no data rows")
    start, end = min(prices), max(prices)
    n = int((end - start).total_seconds() // 3600) + 1
    grid = [start + dt.timedelta(hours=k) for k in range(n)]
    missing = next((t for t in grid if t not in prices), None)
    if missing is not None:
        raise IngestionError(f"{path}: missing hour {format_time(missing)}")
    if index is not None:
        if index.start_date is not None and start != dt.datetime.combine(index.start_date, dt.time()):
            raise IngestionError(f"{path}: prices start {format_time(start)}, loads start {index.start_date}")
        if n != index.hour_count:
            raise IngestionError(f"{path}: {n} price hours, loads cover {index.hour_count}")
    return SpotPriceSeries(np.array([prices[t] for t in grid]))


def write_load_csv(path, fleet, index: TimeIndex) -> None:
    stamps = [format_time(t) for t in index.timestamps()]
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LOAD_HEADER)
        for c in fleet:
            for stamp, value in zip(stamps, c.values):
                writer.writerow((stamp, c.consumer_id, c.consumer_type, repr(float(value))))


def write_spot_csv(path, spot: SpotPriceSeries, index: TimeIndex) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SPOT_HEADER)
        for t, value in zip(index.timestamps(), spot.values):
            writer.writerow((format_time(t), repr(float(value))))


# -- synthetic data ------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticFleetConfig:
    """Knobs of the synthetic fleet and spot-price generator.

    Loads are in kW; ``household_mean_kw`` and ``commercial_mean_kw`` are the
    typical annual-average demand of one consumer of each class.
    """

    consumer_count: int = 50
    household_fraction: float = 0.85
    seed: int = 42
    seasonal_amplitude: float = 0.35
    morning_peak_hour: float = 8.0
    evening_peak_hour: float = 18.5
    peak_width: float = 1.5
    noise: float = 0.10
    price_load_correlation: float = 0.8
    household_mean_kw: float = 1.6
    commercial_mean_kw: float = 9.0
    spot_base: float = 0.6
    spot_noise: float = 0.05

    def __post_init__(self):
        if int(self.consumer_count) < 1:
            raise RejectedInput("consumer_count must be positive")
        if not 0.0 <= self.household_fraction <= 1.0:
            raise RejectedInput("household_fraction must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise RejectedInput("seed must be an unsigned 64-bit integer")
        if not -1.0 <= self.price_load_correlation <= 1.0:
            raise RejectedInput("price_load_correlation must lie in [-1, 1]")
        for name in ("seasonal_amplitude", "peak_width", "noise", "household_mean_kw",
                     "commercial_mean_kw", "spot_noise"):
            if not getattr(self, name) >= 0:
                raise RejectedInput(f"{name} must be non-negative")

    @property
    def household_count(self) -> int:
        return int(round(self.consumer_count * self.household_fraction))


def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    # periodic gaussian bump over the 24-hour clock
    delta = (hours - center + 12.0) % 24.0 - 12.0
    return np.exp(-0.5 * (delta / max(width, 1e-9)) ** 2)


def _season(index: TimeIndex) -> np.ndarray:
    """+1 in mid-January, -1 in mid-July, per hour."""
    if index.start_date is None:
        doy = index.day_of_hour.astype(float)
    else:
        first = index.start_date.timetuple().tm_yday - 1
        doy = (first + index.day_of_hour).astype(float)
    return np.cos(2.0 * np.pi * (doy - 15.0) / 365.25)


def household_shape(config: SyntheticFleetConfig, hour: np.ndarray, shift: float = 0.0) -> np.ndarray:
    return (
        0.45
        + 0.55 * _bump(hour, config.morning_peak_hour + shift, config.peak_width)
        + 0.85 * _bump(hour, config.evening_peak_hour + shift, 1.4 * config.peak_width)
    )


def commercial_shape(hour: np.ndarray, workday: np.ndarray) -> np.ndarray:
    ramp_up = 1.0 / (1.0 + np.exp(-(hour - 7.0) * 2.0))
    ramp_down = 1.0 / (1.0 + np.exp((hour - 17.5) * 2.0))
    return 0.3 + np.where(workday, 1.0, 0.25) * ramp_up * ramp_down


def generate_fleet(config: SyntheticFleetConfig, index: TimeIndex) -> tuple[list[LoadSeries], SpotPriceSeries]:
    """Synthetic consumer loads and a spot price loosely following them."""
    fleet_seq, spot_seq = np.random.SeedSequence(int(config.seed)).spawn(2)
    fleet_rng = np.random.Generator(np.random.PCG64(fleet_seq))
    spot_rng = np.random.Generator(np.random.PCG64(spot_seq))

    hour = index.hour_of_day.astype(float)
    workday = index.is_workday()[index.day_of_hour]
    season = _season(index)
    n_house = config.household_count
    fleet = []
    for k in range(config.consumer_count):
        is_house = k < n_house
        scale = fleet_rng.lognormal(0.0, 0.35)
        shift = fleet_rng.normal(0.0, 0.75)
        eps = fleet_rng.standard_normal(index.hour_count)
        if is_house:
            shape = household_shape(config, hour, shift) * (1.0 + config.seasonal_amplitude * season)
            base = config.household_mean_kw * scale * shape / 0.85
            cid = f"h{k + 1:05d}"
        else:
            shape = commercial_shape(hour - shift / 2.0, workday)
            shape = shape * (1.0 + 0.5 * config.seasonal_amplitude * season)
            base = config.commercial_mean_kw * scale * shape / 0.6
            cid = f"c{k - n_house + 1:05d}"
        values = np.maximum(base * (1.0 + config.noise * eps), 0.0)
        fleet.append(LoadSeries(cid, values, "household" if is_house else "commercial"))

    # spot: winter-peaking level with an afternoon hump, pulled towards load
    curve = config.spot_base * (1.0 + 0.4 * season) + 0.15 * _bump(hour, 16.0, 2.5)
    spot = curve
    if config.price_load_correlation != 0.0:
        total = np.zeros(index.hour_count)
        for c in fleet:
            total = total + c.values
        z = (total - total.mean()) / (total.std() or 1.0)
        spot = spot + config.price_load_correlation * 0.25 * z
    spot = spot + config.spot_noise * spot_rng.standard_normal(index.hour_count)
    return fleet, SpotPriceSeries(spot)


# -- result files --------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    case: str
    tariff: str
    baseline_peak_kw: float
    new_peak_kw: float
    reduction_pct: float
    total_cost_nok: float


@dataclass
class ResultsTable:
    rows: list[ResultRow] = field(default_factory=list)

    def add(self, row: ResultRow) -> None:
        self.rows.append(row)

    def render(self) -> str:
        """Fixed-width text table for terminals."""
        lines = [f"{'case':<6} {'tariff':<20} {'base kW':>12} {'new kW':>12} {'red. %':>8} {'cost NOK':>16}"]
        for r in self.rows:
            lines.append(
                f"{r.case:<6} {r.tariff:<20} {r.baseline_peak_kw:>12.3f} {r.new_peak_kw:>12.3f} "
                f"{r.reduction_pct:>8.3f} {r.total_cost_nok:>16.2f}"
            )
        return "\n".join(lines)


@dataclass
class PlotData:
    """Hourly series behind the peak-day and price-signal figures.

    ``peak_day_loads`` maps a ``case:tariff`` label to the (baseline, new)
    aggregate load on ``peak_day_stamps``; ``price_signals`` maps a column
    name to an hourly series over ``signal_stamps``.
    """

    peak_day_stamps: list[str] = field(default_factory=list)
    peak_day_loads: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    signal_stamps: list[str] = field(default_factory=list)
    price_signals: dict[str, np.ndarray] = field(default_factory=dict)


def _num(value: float, digits: int = 6) -> str:
    if math.isnan(value):
        return "nan"
    text = f"{value:.{digits}f}"
    return "0." + "0" * digits if text == "-0." + "0" * digits else text


def read_results_csv(path) -> ResultsTable:
    """Parse a results.csv back; errors carry the offending line number."""
    table = ResultsTable()
    for line, row in _rows(path, RESULTS_HEADER):
        nums = [_parse_float(v, name, line, path) for v, name in zip(row[2:], RESULTS_HEADER[2:])]
        table.add(ResultRow(row[0], row[1], *nums))
    return table


def write_results(table: ResultsTable, plot_data: PlotData | None, out_dir) -> list[Path]:
    """Write results.csv and, when ``plot_data`` is given, the figure data."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "results.csv"
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(RESULTS_HEADER)
            for r in table.rows:
                writer.writerow((
                    r.case, r.tariff, _num(r.baseline_peak_kw), _num(r.new_peak_kw),
                    _num(r.reduction_pct), _num(r.total_cost_nok, 2),
                ))
        written.append(path)
        if plot_data is None:
            return written

        path = out / "peak_day_loads.csv"
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            labels = list(plot_data.peak_day_loads)
            writer.writerow(["timestamp"] + [f"{lab}:{part}" for lab in labels for part in ("baseline", "new")])
            for h, stamp in enumerate(plot_data.peak_day_stamps):
                row = [stamp]
                for lab in labels:
                    before, after = plot_data.peak_day_loads[lab]
                    row += [_num(before[h]), _num(after[h])]
                writer.writerow(row)
        written.append(path)

        path = out / "price_signals.csv"
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            names = list(plot_data.price_signals)
            writer.writerow(["timestamp"] + names)
            for h, stamp in enumerate(plot_data.signal_stamps):
                writer.writerow([stamp] + [_num(plot_data.price_signals[k][h]) for k in names])
        written.append(path)
    except OSError as exc:
        raise OutputError(f"cannot write results to {exc.filename or out}: {exc.strerror}") from None
    return written
