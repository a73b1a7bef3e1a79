import csv
import json

import numpy as np
import pytest

from apsems.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main
from apsems.forecast import TimeSeries, write_timeseries_csv
from apsems.freqres import min_damping, min_inertia
from apsems.solver import read_mps, solve_mip


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def constant_csv(tmp_path):
    path = tmp_path / "flat.csv"
    write_timeseries_csv(path, TimeSeries.regular(np.full(120, 4.2)),
                         TimeSeries.regular(np.full(120, 0.5)))
    return path


def test_forecast_on_constant_series(tmp_path, constant_csv, data_dir):
    out = tmp_path / "fc"
    code = main(["forecast", "--config", str(data_dir / "system_small.json"),
                 "--data", str(constant_csv), "--out", str(out)])
    assert code == EXIT_OK
    rows = _read(out / "forecast_k1.csv")
    assert list(rows[0]) == ["tau", "value_mw"]
    assert all(float(r["value_mw"]) == 4.2 for r in rows)
    taus = [float(r["tau"]) for r in rows]
    assert taus == sorted(taus)
    assert (out / "forecast_k3.csv").exists() and not (out / "forecast_k4.csv").exists()


def test_missing_inputs_exit_one(tmp_path, data_dir, capsys):
    base = ["schedule", "--config", str(data_dir / "system_small.json"), "--out", str(tmp_path)]
    assert main(base + ["--data", str(tmp_path / "nope.csv")]) == EXIT_CONFIG
    assert "nope.csv" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"generators": []}')
    assert main(["schedule", "--config", str(bad), "--data", str(data_dir / "canonical.csv"),
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def test_too_many_steps_is_an_input_error(tmp_path, constant_csv, data_dir):
    assert main(["schedule", "--config", str(data_dir / "system_small.json"), "--data",
                 str(constant_csv), "--steps", "500", "--out", str(tmp_path)]) == EXIT_CONFIG


def _simulate(tmp_path, m, d, step):
    return main(["simulate", "--m-total", repr(m), "--d-total", repr(d), "--step-pu",
                 repr(step), "--dt", "0.01", "--duration", "30", "--out", str(tmp_path)])


def test_simulate_exit_codes(tmp_path):
    m, d = min_inertia(0.4, 0.1), min_damping(0.4, 0.03, 0.1)
    assert _simulate(tmp_path, m, d, 0.4) == EXIT_OK
    assert _read(tmp_path / "trace.csv")[0].keys() == {"t_s", "x", "rocof", "p_ess_pu",
                                                       "energy_dev_pu_s"}
    assert _simulate(tmp_path, m, d, 0.0) == EXIT_OK
    assert _simulate(tmp_path, m, 0.5 * d, 0.4) == EXIT_VIOLATION
    report = json.loads((tmp_path / "bounds.json").read_text())
    assert report["steady_state_ok"] is False


def test_simulate_rejects_bad_split(tmp_path):
    code = main(["simulate", "--m-total", "4", "--d-total", "10", "--d-b", "12",
                 "--step-pu", "0.1", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG


def _schedule(tmp_path, data_dir, variant, extra=()):
    out = tmp_path / variant
    code = main(["schedule", "--config", str(data_dir / "system_small.json"), "--data",
                 str(data_dir / "canonical.csv"), "--variant", variant, "--steps", "2",
                 "--n-override", "5", "--out", str(out), *extra])
    return code, out


def test_schedule_and_exported_model(tmp_path, data_dir):
    mps = tmp_path / "step0.mps"
    code, out = _schedule(tmp_path, data_dir, "III", ["--export-model", str(mps)])
    assert code == EXIT_OK
    kpi = json.loads((out / "kpi.json").read_text())
    assert kpi["n_steps"] == 2 and kpi["bound_violations"] == 0
    rows = _read(out / "schedule.csv")
    assert len(rows) == 2 * 3
    first = float(next(r["objective"] for r in rows if r["step"] == "0" and r["k"] == "0"))
    res = solve_mip(read_mps(mps))
    assert res.status == "optimal"
    assert res.objective == pytest.approx(first, rel=1e-6)
    assert sorted(p.name for p in (out / "traces").iterdir()) == ["step_0.csv", "step_1.csv"]


def test_variant_one_is_cheapest_on_first_step(tmp_path, data_dir):
    objs = {}
    for v in ("I", "III"):
        code, out = _schedule(tmp_path, data_dir, v)
        assert code == EXIT_OK
        objs[v] = float(_read(out / "schedule.csv")[0]["objective"])
    assert objs["I"] <= objs["III"] + 1e-9


def test_compare_writes_variant_table(tmp_path, data_dir, capsys):
    out = tmp_path / "cmp"
    code = main(["compare", "--config", str(data_dir / "system_small.json"), "--data",
                 str(data_dir / "canonical.csv"), "--steps", "2", "--n-override", "5",
                 "--out", str(out)])
    assert code == EXIT_OK
    rows = _read(out / "variants.csv")
    assert {r["section"] for r in rows} == {"trajectory", "kpi", "kpi_delta_vs_I",
                                           "same_inputs_objective"}
    same = {(r["step"], r["variant"]): float(r["value"]) for r in rows
            if r["section"] == "same_inputs_objective"}
    for step in ("0", "1"):
        assert same[step, "I"] <= same[step, "II"] + 1e-9 <= same[step, "III"] + 2e-9
    assert "variant III" in capsys.readouterr().out
