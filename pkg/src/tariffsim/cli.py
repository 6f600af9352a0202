"""Command-line entry point: ``tariffsim {generate-data,calibrate,run,report}``.

Settings come from a YAML file; command-line flags win over the file, and the
file wins over built-in defaults.  Results go to files, the summary table to
stdout and diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import data_io
from .demand_response import optimal_subscription
from .errors import ConfigurationError, TariffSimError
from .model_core import FlexibilityParams, build_time_index
from .system_cases import CaseKind, CaseSpec, run_case, with_peak_days
from .tariffs import (
    DESIGNS,
    DemandCharge,
    DynamicToU,
    FlatEnergy,
    StaticToU,
    SubscribedCapacity,
    calibrate,
    marginal_price_signal,
    revenue_ratio,
)

# every design plus the flat reference, which has no time-varying signal
TARIFF_CHOICES = ("flat", *DESIGNS)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


@dataclass
class DataConfig:
    """Where loads and prices come from.

    With ``load_csv`` unset the synthetic generator is used; ``spot_csv`` may
    still point at real prices.  Relative paths resolve against the config file.
    """

    load_csv: str | None = None
    spot_csv: str | None = None
    start_date: str = "2021-01-01"
    day_count: int = 365
    holidays: list[str] = field(default_factory=list)
    generator: dict = field(default_factory=dict)


@dataclass
class TariffConfig:
    energy_term: float = 0.25
    c_tou: float = 1.2
    tou_peak_start: int = 6
    tou_peak_end: int = 22
    winter_months: list[int] = field(default_factory=lambda: [11, 12, 1, 2, 3])
    c_dyn: float = 4.5
    peak_days: int = 20
    c_peak: float = 75.0
    c_h: float = 1.65
    c_sub: float = 1000.0


@dataclass
class FlexibilityConfig:
    q_flex: float = 0.25
    e_flex: float = 0.025
    c_red: float = 0.30
    # consumer id -> discomfort cost for consumers that differ from c_red
    c_red_overrides: dict = field(default_factory=dict)


@dataclass
class CalibrationConfig:
    enabled: bool = False
    reference_c_et: float = 0.45


@dataclass
class RunConfig:
    seed: int = 42
    output_dir: str = "results"
    jobs: int = 1
    cases: list[str] = field(default_factory=lambda: ["GT", "GT_SP", "SOR", "SP"])
    tariffs: list[str] = field(default_factory=lambda: list(DESIGNS))
    sp_include_energy_term: bool = True
    data: DataConfig = field(default_factory=DataConfig)
    tariff: TariffConfig = field(default_factory=TariffConfig)
    flexibility: FlexibilityConfig = field(default_factory=FlexibilityConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    base_dir: str = field(default=".", metadata={"internal": True})

    def validate(self) -> None:
        if not self.cases:
            raise ConfigurationError("case list is empty")
        for c in self.cases:
            if c not in CaseKind.__members__:
                raise ConfigurationError(f"unknown case {c!r}; choose from {', '.join(CaseKind.__members__)}")
        for t in self.tariffs:
            if t not in TARIFF_CHOICES:
                raise ConfigurationError(f"unknown tariff {t!r}; choose from {', '.join(TARIFF_CHOICES)}")
        if any(c in ("GT", "GT_SP") for c in self.cases) and not self.tariffs:
            raise ConfigurationError("GT cases need at least one tariff")
        if int(self.jobs) < 1:
            raise ConfigurationError("jobs must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        for name in ("load_csv", "spot_csv"):
            value = getattr(self.data, name)
            if value is not None and not self.resolve(value).is_file():
                raise ConfigurationError(f"data.{name}: file {self.resolve(value)} does not exist")
        overrides = self.flexibility.c_red_overrides
        if not isinstance(overrides, dict):
            raise ConfigurationError("flexibility.c_red_overrides must map consumer ids to costs")
        for cid, value in overrides.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not value >= 0:
                raise ConfigurationError(f"flexibility.c_red_overrides.{cid} must be a non-negative number")
        try:
            self.flexibility_params()
            self.tariff_specs()
            build_time_index(self.data.start_date, self.data.day_count, holidays=self.data.holidays)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from None

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def flexibility_params(self) -> FlexibilityParams:
        f = self.flexibility
        return FlexibilityParams(float(f.q_flex), float(f.e_flex), float(f.c_red))

    def tariff_specs(self) -> dict:
        """Uncalibrated tariff per design name (dynamic peak days still unset)."""
        t = self.tariff
        return {
            "flat": FlatEnergy(t.energy_term),
            "static_tou": StaticToU(t.energy_term, t.c_tou, t.tou_peak_start, t.tou_peak_end, frozenset(t.winter_months)),
            "dynamic_tou": DynamicToU(t.energy_term, t.c_dyn, t.tou_peak_start, t.tou_peak_end),
            "demand_charge": DemandCharge(t.energy_term, t.c_peak),
            "subscribed_capacity": SubscribedCapacity(t.energy_term, t.c_h, t.c_sub),
        }


def _build(cls, data: dict, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        sub = known[name].default_factory if known[name].default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {p} is not valid YAML: {exc}") from None
    config = _build(RunConfig, data or {}, "")
    config.base_dir = str(p.parent)
    return config


def config_to_dict(config: RunConfig) -> dict:
    data = dataclasses.asdict(config)
    data.pop("base_dir")
    return data


def _set_path(config: RunConfig, dotted: str, raw: str) -> None:
    """Apply one ``key.sub=value`` override; the value is parsed as YAML."""
    target = config
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not dataclasses.is_dataclass(target) or not hasattr(target, part):
            raise ConfigurationError(f"unknown setting {dotted!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    value = yaml.safe_load(raw)
    if isinstance(target, dict):
        target[leaf] = value
        return
    if not dataclasses.is_dataclass(target) or not hasattr(target, leaf) or leaf == "base_dir":
        raise ConfigurationError(f"unknown setting {dotted!r}")
    if dataclasses.is_dataclass(getattr(target, leaf)):
        raise ConfigurationError(f"{dotted!r} is a section, set one of its keys")
    setattr(target, leaf, value)


def apply_overrides(config: RunConfig, args) -> RunConfig:
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        _set_path(config, key.strip(), raw)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        config.jobs = args.jobs
    if getattr(args, "out", None) is not None:
        config.output_dir = args.out
    if getattr(args, "case", None):
        config.cases = list(args.case)
    if getattr(args, "tariff", None):
        config.tariffs = list(args.tariff)
    return config


# -- pipeline steps --------------------------------------------------------------


def generator_config(config: RunConfig) -> data_io.SyntheticFleetConfig:
    gen = dict(config.data.generator)
    gen["seed"] = int(config.seed)
    try:
        return data_io.SyntheticFleetConfig(**gen)
    except (TypeError, TariffSimError) as exc:
        raise ConfigurationError(f"data.generator: {exc}") from None


def load_data(config: RunConfig):
    """(fleet, spot, index) from CSV files or the generator."""
    d = config.data
    if d.load_csv is not None:
        fleet, index = data_io.read_load_csv(config.resolve(d.load_csv), holidays=d.holidays)
        spot = None
    else:
        index = build_time_index(d.start_date, d.day_count, holidays=d.holidays)
        fleet, spot = data_io.generate_fleet(generator_config(config), index)
    if d.spot_csv is not None:
        spot = data_io.read_spot_csv(config.resolve(d.spot_csv), index)
    return fleet, spot, index


def prepare_tariffs(config: RunConfig, fleet, index, calibrated: bool | None = None) -> dict:
    """Tariffs in config order, with peak days and optional calibration applied."""
    specs = config.tariff_specs()
    out = {}
    reference = FlatEnergy(float(config.calibration.reference_c_et))
    do_calibrate = config.calibration.enabled if calibrated is None else calibrated
    for name in config.tariffs:
        tariff = with_peak_days(specs[name], fleet, index, int(config.tariff.peak_days))
        if do_calibrate:
            tariff = calibrate(tariff, [c.values for c in fleet], index, reference)
        out[name] = tariff
    return out


def case_plan(config: RunConfig, tariffs: dict, spot, flex) -> list[CaseSpec]:
    plan = []
    energy_term = float(config.tariff.energy_term)
    include = bool(config.sp_include_energy_term)
    overrides = dict(config.flexibility.c_red_overrides or {})
    for kind in config.cases:
        kind = CaseKind(kind)
        if kind in (CaseKind.GT, CaseKind.GT_SP):
            for tariff in tariffs.values():
                plan.append(CaseSpec(kind, tariff, spot, flex, energy_term, include, overrides))
        else:
            plan.append(CaseSpec(kind, None, spot, flex, energy_term, include, overrides))
    return plan


def weighted_signal(tariff, fleet, index) -> np.ndarray:
    """Grid price signal averaged over consumers, weighted by hourly load."""
    num = np.zeros(index.hour_count)
    den = np.zeros(index.hour_count)
    for c in fleet:
        sub = optimal_subscription(c.values, tariff, index) if isinstance(tariff, SubscribedCapacity) else None
        num = num + c.values * marginal_price_signal(tariff, c.values, index, sub).values
        den = den + c.values
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def plot_data(results, tariffs, fleet, spot, index) -> data_io.PlotData:
    stamps = [data_io.format_time(t) for t in index.timestamps()]
    baseline = results[0].baseline if results else sum(c.values for c in fleet)
    day = int(np.argmax(baseline)) // index.hours_per_day
    hours = index.hours_of_day(day)
    pd = data_io.PlotData(peak_day_stamps=stamps[hours], signal_stamps=stamps)
    for r in results:
        pd.peak_day_loads[f"{r.kind.value}:{r.tariff_name}"] = (r.baseline[hours], r.response[hours])
    if spot is not None:
        pd.price_signals["spot"] = spot.values
    for name, tariff in tariffs.items():
        pd.price_signals[name] = weighted_signal(tariff, fleet, index)
    return pd


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# -- subcommands -------------------------------------------------------------------


def cmd_generate_data(config: RunConfig) -> int:
    d = config.data
    index = build_time_index(d.start_date, d.day_count, holidays=d.holidays)
    fleet, spot = data_io.generate_fleet(generator_config(config), index)
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _log(f"error: cannot create {out}: {exc.strerror}")
        return EXIT_FAILURE
    try:
        data_io.write_load_csv(out / "loads.csv", fleet, index)
        data_io.write_spot_csv(out / "spot.csv", spot, index)
    except OSError as exc:
        _log(f"error: cannot write to {out}: {exc.strerror}")
        return EXIT_FAILURE
    _log(f"wrote {len(fleet)} consumers x {index.hour_count} hours to {out}")
    return EXIT_OK


def cmd_calibrate(config: RunConfig, write_config: str | None = None) -> int:
    fleet, _, index = load_data(config)
    reference = FlatEnergy(float(config.calibration.reference_c_et))
    if not reference.c_et > 0:
        _log("error: calibration reference c_et must be positive")
        return EXIT_FAILURE
    loads = [c.values for c in fleet]
    failed = False
    calibrated = {}
    print(f"{'tariff':<20} {'parameter':<10} {'value':>16} {'revenue ratio':>16}")
    print(f"{'flat':<20} {'c_et':<10} {reference.c_et:>16.10g} {revenue_ratio(reference, loads, index, reference):>16.12f}")
    for name in config.tariffs:
        tariff = with_peak_days(config.tariff_specs()[name], fleet, index, int(config.tariff.peak_days))
        try:
            tariff = calibrate(tariff, loads, index, reference)
        except TariffSimError as exc:
            _log(f"error: {exc}")
            failed = True
            continue
        if isinstance(tariff, FlatEnergy):
            continue
        param = tariff.design_parameter
        calibrated[param] = float(getattr(tariff, param))
        ratio = revenue_ratio(tariff, loads, index, reference)
        print(f"{name:<20} {param:<10} {calibrated[param]:>16.10g} {ratio:>16.12f}")
    if write_config and not failed:
        data = config_to_dict(config)
        data["tariff"].update(calibrated)
        data["calibration"]["enabled"] = False
        try:
            Path(write_config).write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        except OSError as exc:
            _log(f"error: cannot write {write_config}: {exc.strerror}")
            return EXIT_FAILURE
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_run(config: RunConfig) -> int:
    fleet, spot, index = load_data(config)
    unknown = sorted(set(map(str, config.flexibility.c_red_overrides)) - {c.consumer_id for c in fleet})
    if unknown:
        raise ConfigurationError(f"flexibility.c_red_overrides names unknown consumers: {', '.join(unknown)}")
    if spot is None and any(c in ("GT_SP", "SP") for c in config.cases):
        raise ConfigurationError("spot cases need spot prices (data.spot_csv or the generator)")
    flex = config.flexibility_params()
    tariffs = prepare_tariffs(config, fleet, index)
    table = data_io.ResultsTable()
    results = []
    for spec in case_plan(config, tariffs, spot, flex):
        _log(f"running {spec.kind.value} {spec.label} over {len(fleet)} consumers")
        try:
            res = run_case(spec, fleet, index, jobs=int(config.jobs))
        except TariffSimError as exc:
            _log(f"error: case {spec.kind.value} {spec.label}: {exc}")
            data_io.write_results(table, None, config.output_dir)
            return EXIT_FAILURE
        results.append(res)
        table.add(
            data_io.ResultRow(
                res.kind.value, res.tariff_name, res.baseline_peak, res.new_peak,
                100.0 * res.reduction, res.costs.total,
            )
        )
    data_io.write_results(table, plot_data(results, tariffs, fleet, spot, index), config.output_dir)
    print(table.render())
    return EXIT_OK


def cmd_report(results_dir: str) -> int:
    path = Path(results_dir) / "results.csv"
    if not path.is_file():
        _log(f"error: {path} not found")
        return EXIT_FAILURE
    table = data_io.read_results_csv(path)
    if not table.rows:
        _log(f"error: {path} has no result rows")
        return EXIT_FAILURE
    print(table.render())
    by_case: dict[str, list] = {}
    for r in table.rows:
        by_case.setdefault(r.case, []).append(r)
    print()
    print(f"{'case':<6} {'rows':>4} {'min red. %':>11} {'max red. %':>11} {'best tariff':<20}")
    for case, rows in by_case.items():
        best = max(rows, key=lambda r: r.reduction_pct)
        lo = min(r.reduction_pct for r in rows)
        print(f"{case:<6} {len(rows):>4} {lo:>11.3f} {best.reduction_pct:>11.3f} {best.tariff:<20}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tariffsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", help=out_help)
        p.add_argument("--seed", type=int, help="generator seed (unsigned 64-bit)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config scalar, e.g. flexibility.c_red=0.4")

    p = sub.add_parser("generate-data", help="write synthetic loads.csv and spot.csv")
    common(p, "output directory for the CSV files")

    p = sub.add_parser("calibrate", help="scale tariff parameters to the reference revenue")
    common(p, "unused")
    p.add_argument("--tariff", action="append", choices=TARIFF_CHOICES)
    p.add_argument("--write-config", help="write a config copy with calibrated parameters")

    p = sub.add_parser("run", help="run all configured cases and write result files")
    common(p, "results directory")
    p.add_argument("--jobs", type=int, help="worker processes for consumer solves")
    p.add_argument("--case", action="append", choices=list(CaseKind.__members__))
    p.add_argument("--tariff", action="append", choices=TARIFF_CHOICES)

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("results_dir", nargs="?", help="directory holding results.csv")
    p.add_argument("--out", help="same as results_dir")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            target = args.results_dir or args.out
            if target is None:
                _log("error: report needs a results directory")
                return EXIT_USAGE
            return cmd_report(target)
        config = apply_overrides(load_config(args.config), args)
        config.validate()
        if args.command == "generate-data":
            return cmd_generate_data(config)
        if args.command == "calibrate":
            return cmd_calibrate(config, args.write_config)
        return cmd_run(config)
    except ConfigurationError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (TariffSimError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
