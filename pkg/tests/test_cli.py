import csv
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from tariffsim.cli import RunConfig, apply_overrides, build_parser, load_config, main
from tariffsim.data_io import write_load_csv
from tariffsim.model_core import LoadSeries, build_time_index

ROOT = Path(__file__).resolve().parents[1]
TOY = ROOT / "configs" / "toy.yaml"


def _write_config(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def _flat_toy(tmp_path, **extra):
    idx = build_time_index("2021-01-04", 1)
    write_load_csv(tmp_path / "loads.csv", [LoadSeries("a", np.full(24, 10.0))], idx)
    data = {"data": {"load_csv": "loads.csv"}, "output_dir": str(tmp_path / "out")}
    data.update(extra)
    return _write_config(tmp_path / "cfg.yaml", data)


def _results(out):
    with open(Path(out) / "results.csv", newline="") as f:
        return list(csv.DictReader(f))


def _small(tmp_path, days=3, consumers=3):
    data = {
        "data": {"start_date": "2021-01-04", "day_count": days, "generator": {"consumer_count": consumers}},
        "tariff": {"peak_days": 1},
    }
    return _write_config(tmp_path / "small.yaml", data)


def test_generate_data_writes_two_files(tmp_path):
    cfg = _small(tmp_path)
    assert main(["generate-data", "--config", cfg, "--out", str(tmp_path / "d1")]) == 0
    assert sorted(p.name for p in (tmp_path / "d1").iterdir()) == ["loads.csv", "spot.csv"]
    assert main(["generate-data", "--config", cfg, "--out", str(tmp_path / "d2")]) == 0
    for name in ("loads.csv", "spot.csv"):
        assert (tmp_path / "d1" / name).read_bytes() == (tmp_path / "d2" / name).read_bytes()
    main(["generate-data", "--config", cfg, "--out", str(tmp_path / "d3"), "--seed", "43"])
    assert (tmp_path / "d1" / "spot.csv").read_bytes() != (tmp_path / "d3" / "spot.csv").read_bytes()


def test_generate_data_unwritable_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["generate-data", "--config", _small(tmp_path), "--out", str(blocker / "x")]) != 0
    assert "error" in capsys.readouterr().err


def test_calibrate_flat_reference(tmp_path, capsys):
    cfg = _flat_toy(tmp_path)
    assert main(["calibrate", "--config", cfg, "--tariff", "flat", "--set", "calibration.reference_c_et=0.25"]) == 0
    out = capsys.readouterr().out
    flat = [line for line in out.splitlines() if line.startswith("flat")]
    assert flat and float(flat[0].split()[-1]) == 1.0


def test_calibrate_degenerate_reference(tmp_path, capsys):
    cfg = _flat_toy(tmp_path)
    assert main(["calibrate", "--config", cfg, "--set", "calibration.reference_c_et=0"]) != 0
    assert "reference" in capsys.readouterr().err


def test_calibrate_writes_config(tmp_path):
    cfg = _small(tmp_path)
    target = tmp_path / "calibrated.yaml"
    assert main(["calibrate", "--config", cfg, "--write-config", str(target)]) == 0
    calibrated = load_config(str(target))
    assert calibrated.tariff.c_tou != RunConfig().tariff.c_tou
    assert calibrated.data.day_count == 3


def test_run_sor_flat_toy(tmp_path):
    cfg = _flat_toy(tmp_path, cases=["SOR"])
    assert main(["run", "--config", cfg]) == 0
    (row,) = _results(tmp_path / "out")
    assert row["case"] == "SOR"
    assert float(row["reduction_pct"]) == pytest.approx(2.5, abs=1e-6)


def test_run_gt_flat_tariff(tmp_path):
    cfg = _flat_toy(tmp_path)
    assert main(["run", "--config", cfg, "--case", "GT", "--tariff", "flat"]) == 0
    (row,) = _results(tmp_path / "out")
    assert (row["case"], row["tariff"], float(row["reduction_pct"])) == ("GT", "flat", 0.0)


def test_spot_cases_need_prices(tmp_path, capsys):
    cfg = _flat_toy(tmp_path, cases=["SP"])
    assert main(["run", "--config", cfg]) == 2
    assert "spot" in capsys.readouterr().err


def test_full_case_list_gives_ten_rows(tmp_path, capsys):
    out = tmp_path / "toy"
    assert main(["run", "--config", str(TOY), "--out", str(out)]) == 0
    rows = _results(out)
    assert [r["case"] for r in rows] == ["GT"] * 4 + ["GT_SP"] * 4 + ["SOR", "SP"]
    header = (out / "peak_day_loads.csv").read_text().splitlines()[0].split(",")
    labels = [f"{r['case']}:{r['tariff']}" for r in rows]
    assert header[1:] == [f"{lab}:{part}" for lab in labels for part in ("baseline", "new")]
    sor = float(rows[8]["reduction_pct"])
    assert all(sor >= float(r["reduction_pct"]) - 1e-9 for r in rows)
    printed = capsys.readouterr().out
    assert printed.count("\n") == 11

    # report on the same directory reproduces the rows
    assert main(["report", str(out)]) == 0
    report = capsys.readouterr().out.splitlines()
    assert report[1].split()[:2] == ["GT", "static_tou"]
    assert float(report[9].split()[4]) == pytest.approx(sor, abs=1e-3)


def test_report_errors(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) != 0
    (tmp_path / "results.csv").write_text(
        "case,tariff,baseline_peak_kw,new_peak_kw,reduction_pct,total_cost_nok\nGT,static_tou,10.0,9.0\n"
    )
    assert main(["report", str(tmp_path)]) != 0
    assert "results.csv:2" in capsys.readouterr().err


def test_overrides_take_precedence(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", {"seed": 5, "jobs": 3, "flexibility": {"c_red": 0.2}})
    args = build_parser().parse_args(["run", "--config", cfg, "--seed", "9", "--set", "flexibility.c_red=0.4"])
    config = apply_overrides(load_config(cfg), args)
    assert (config.seed, config.jobs, config.flexibility.c_red) == (9, 3, 0.4)
    assert RunConfig().flexibility.c_red == 0.30


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--set", "flexibility.nope=1"],
        ["run", "--set", "flexibility=1"],
        ["run", "--set", "cases=[]"],
        ["run", "--set", "flexibility.q_flex=2"],
        ["run", "--set", "data.load_csv=/does/not/exist.csv"],
        ["generate-data", "--set", "data.generator.colour=1"],
        ["generate-data", "--set", "data.generator.consumer_count=0"],
    ],
)
def test_bad_settings_are_usage_errors(argv):
    assert main(argv) == 2


def test_c_red_override_from_config(tmp_path, capsys):
    cfg = _flat_toy(tmp_path, cases=["SOR"], flexibility={"c_red_overrides": {"a": 1.0}})
    assert main(["run", "--config", cfg]) == 0
    (row,) = _results(tmp_path / "out")
    # 2.5 % of 240 kWh cut at 1 NOK/kWh
    assert float(row["total_cost_nok"]) == pytest.approx(6.0, abs=0.01)
    cfg = _flat_toy(tmp_path, cases=["SOR"], flexibility={"c_red_overrides": {"b": 1.0}})
    assert main(["run", "--config", cfg]) == 2
    assert "unknown consumers" in capsys.readouterr().err
    assert main(["run", "--config", cfg, "--set", "flexibility.c_red_overrides={a: -1}"]) == 2


def test_unknown_config_key(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", {"tariffz": {}})
    assert main(["run", "--config", cfg]) == 2


def test_console_script_module_entry(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run(
        [sys.executable, "-m", "tariffsim", "generate-data", "--config", _small(tmp_path), "--out", str(tmp_path / "g")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert proc.stdout == ""  # diagnostics only on stderr
    assert "wrote 3 consumers" in proc.stderr
