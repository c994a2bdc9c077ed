import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from vshp.cli import main


def read_table(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array(rows[1:], dtype=float)


def test_simulate_load_rejection(tmp_path):
    assert main(["simulate", "--model", "euler", "--scenario", "fig6.scn",
                 "--out", str(tmp_path)]) == 0
    header, data = read_table(tmp_path / "fig6_euler.csv")
    om = data[:, header.index("omega")]
    assert om.max() > 1.0 and abs(om[-1] - 1.0) < 1e-3
    meta = json.loads((tmp_path / "fig6_euler.meta.json").read_text())
    assert meta["schema_version"] == 1 and meta["model"] == "euler"
    assert meta["dt"] == 0.001 and len(meta["params_sha256"]) == 64
    assert meta["penstock_mode"] == "lumped"
    ev = json.loads((tmp_path / "fig6_euler.events.json").read_text())
    assert ev["events"][0]["value"] == 0.3


def test_simulate_linearised_reverse_response(tmp_path):
    assert main(["simulate", "--model", "linearised", "--scenario", "fig6.scn",
                 "--out", str(tmp_path)]) == 0
    header, data = read_table(tmp_path / "fig6_linearised.csv")
    t, pm = data[:, 0], data[:, header.index("P_m")]
    k = int(np.searchsorted(t, 5.0))
    # power first moves against the falling opening, then follows it down
    assert pm[k + 1] > pm[k]
    assert pm[-1] < pm[k]


def test_missing_scenario(tmp_path, capsys):
    assert main(["simulate", "--scenario", str(tmp_path / "nope.scn")]) == 2
    assert "nope.scn" in capsys.readouterr().err


def test_simulation_failure_exit_code(tmp_path):
    scn = tmp_path / "stall.scn"
    scn.write_text("model = euler\nt_end = 300\nP_star = 0.9\nrecord_every = 100\n"
                   "t=5 set P_star 1.2\n")
    assert main(["simulate", "--scenario", str(scn), "--out", str(tmp_path)]) == 1
    assert (tmp_path / "stall_euler.csv").stat().st_size > 0
    meta = json.loads((tmp_path / "stall_euler.meta.json").read_text())
    assert "integration stopped" in meta["status"]


def test_trim_hygov_inverse_example(tmp_path):
    assert main(["trim", "--model", "hygov", "--pstar", "0.46225", "--wstar", "1.0",
                 "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "trim_hygov.json").read_text())
    assert data["state"]["g"] == pytest.approx(0.5, abs=1e-10)


def test_trim_lossless_flag(tmp_path):
    assert main(["trim", "--model", "hygov", "--lossless", "--pstar", "0.5",
                 "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "trim_hygov.json").read_text())
    assert data["state"]["g"] == pytest.approx(0.5, abs=1e-10)
    assert data["outputs"]["h"] == pytest.approx(1.0)


def test_trim_infeasible(tmp_path):
    assert main(["trim", "--model", "euler", "--pstar", "1.0", "--out", str(tmp_path)]) == 1


def test_modes_governor_pair(tmp_path):
    assert main(["modes", "--model", "euler", "--pstar", "0.6", "--wstar", "1.0",
                 "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "modes_euler.json").read_text())
    gov = [m for m in data["modes"] if m["group"] == "governor" and m["imag"] > 0]
    assert any(0.01 <= m["frequency_hz"] <= 0.04 for m in gov)


def test_linearize_output(tmp_path):
    assert main(["linearize", "--model", "ieee", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "linear_ieee.json").read_text())
    n = len(data["states"])
    assert np.array(data["A"]).shape == (n, n)
    assert np.array(data["B"]).shape == (n, 2)
    assert main(["linearize", "--model", "ieee", "--penstock-mode", "delay",
                 "--out", str(tmp_path)]) == 1


def test_sweep_ieee_pstar(tmp_path):
    assert main(["sweep", "--model", "ieee", "--grid", "pstar", "--out", str(tmp_path)]) == 0
    path = tmp_path / "sweep_ieee_pstar.csv"
    text = path.read_text()
    assert "# grid" in text and "params_sha256" in text
    header, _ = read_table_any(path)
    assert "damping" in header


def read_table_any(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def test_efficiency_map(tmp_path):
    assert main(["efficiency-map", "--out", str(tmp_path)]) == 0
    header, data = read_table(tmp_path / "efficiency_vs_speed.csv")
    ieee = data[:, header.index("eta_ieee")]
    hygov = data[:, header.index("eta_hygov")]
    euler = data[:, header.index("eta_euler")]
    assert np.array_equal(ieee, hygov)
    assert np.all(np.diff(ieee) < 0)
    k = int(np.nanargmax(euler))
    assert 0 < k < len(euler) - 1
    header, data = read_table(tmp_path / "efficiency_vs_power.csv")
    tot = data[:, header.index("eta_total_ieee")]
    assert tot[-1] < np.nanmax(tot)


def test_efficiency_map_linearised(tmp_path, capsys):
    assert main(["efficiency-map", "--models", "linearised", "--out", str(tmp_path)]) == 2
    assert "not defined" in capsys.readouterr().err


def test_bad_override(tmp_path):
    assert main(["trim", "--model", "euler", "--set", "turbine.T_e=1", "--out",
                 str(tmp_path)]) == 2
    assert main(["trim", "--model", "euler", "--set", "noequals", "--out",
                 str(tmp_path)]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["trim"])
    assert exc.value.code == 2


def test_outputs_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["modes", "--model", "ieee", "--out", str(out)]) == 0
        assert main(["simulate", "--scenario", "fig7.scn", "--out", str(out)]) == 0
    for name in ("modes_ieee.json", "fig7_euler.csv", "fig7_euler.meta.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "vshp.cli", "trim", "--model", "hygov",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "g = " in res.stdout
