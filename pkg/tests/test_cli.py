import json
import math
import subprocess
import sys

import numpy as np
import pytest

from me_neuron.characterization import AxisKind, BasisAngles, LifetimeGrid, read_angles_report, write_grid_csv
from me_neuron.cli import main, parse_axis
from me_neuron.neuron import Drive, read_spike_csv, write_drive_csv

AXIS = np.linspace(-0.3, 0.3, 7)


def planted_grid(alpha, beta, kind=AxisKind.ME_I):
    """log tau_AP grows against (cos a, sin a), log tau_P against (cos b, sin b)."""
    A, B = np.meshgrid(AXIS, AXIS, indexing="ij")
    tau_ap = 1e-9 * np.exp(-4 * (math.cos(alpha) * A + math.sin(alpha) * B))
    tau_p = 1e-9 * np.exp(-4 * (math.cos(beta) * A + math.sin(beta) * B))
    return LifetimeGrid.from_arrays(AXIS, AXIS, tau_p, tau_ap, axis_kind=kind)


def test_parse_axis():
    assert parse_axis("-0.1:0.1:3", "x").tolist() == [-0.1, 0.0, 0.1]
    assert parse_axis("0,0.5", "x").tolist() == [0.0, 0.5]


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "me_neuron.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout


def test_simulate_zero_bias(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--bias", "0,0", "--t-max", "8e-7", "--seed", "5", "--out", str(out)]) == 0
    lif = next(out.glob("lifetimes_*.csv")).read_text().splitlines()[1:]
    means = {row.split(",")[2]: float(row.split(",")[3]) for row in lif}
    counts = {row.split(",")[2]: int(row.split(",")[5]) for row in lif}
    assert min(counts.values()) >= 200
    assert 0.8 <= means["P"] / means["AP"] <= 1.25
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 5
    assert {o["path"] for o in manifest["outputs"]} >= {"config.resolved.ini"}
    assert (out / "traj_5_0.000_0.000.csv").exists()


def test_simulate_missing_config(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nonexist.ini"), "--out", str(tmp_path)]) == 2
    assert "nonexist.ini" in capsys.readouterr().err


def test_simulate_unstable_dt(tmp_path, capsys):
    assert main(["simulate", "--dt", "1e-10", "--t-max", "1e-8", "--out", str(tmp_path)]) == 3
    assert "step 0" in capsys.readouterr().err


def test_sweep_bad_axis(tmp_path):
    assert main(["sweep", "--v-me", "0.1,0.0", "--v-i", "0", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--v-me", "0,0.9", "--v-i", "0", "--out", str(tmp_path)]) == 2


def test_sweep_toy_grid_deterministic(tmp_path):
    args = ["sweep", "--v-me=-0.2:0.2:3", "--v-i=-0.2:0.2:3", "--min-dwells", "200", "--seed", "11"]
    assert main(args + ["--threads", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--threads", "4", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "grid_ME_I.csv").read_bytes()
    assert a == (tmp_path / "b" / "grid_ME_I.csv").read_bytes()
    rows = [r.split(",") for r in a.decode().splitlines()[1:]]
    assert len(rows) == 9 and all(r[3] != "nan" and r[6] != "nan" for r in rows)
    tau_ap = np.array([float(r[6]) for r in rows]).reshape(3, 3)
    assert np.all(np.diff(tau_ap, axis=0) < 0)  # tau_AP falls along v_me
    # rerun from the resolved config reproduces the grid
    assert main(["sweep", str(tmp_path / "a" / "config.resolved.ini"), "--v-me=-0.2:0.2:3",
                 "--v-i=-0.2:0.2:3", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "grid_ME_I.csv").read_bytes() == a


def test_calibrate_planted_angles(tmp_path):
    alpha, beta = math.radians(-12.0), math.radians(71.0)
    path = write_grid_csv(planted_grid(alpha, beta), tmp_path / "g.csv")
    assert main(["calibrate", str(path), "--out", str(tmp_path)]) == 0
    ang = read_angles_report(tmp_path / "angles.txt")
    # the fitted rows point along the steepest increase; the planted field decreases along them
    assert abs(math.degrees(math.remainder(ang.alpha_basis - alpha, math.pi))) < 1.0
    assert abs(math.degrees(math.remainder(ang.beta_basis - beta, math.pi))) < 1.0


def test_calibrate_degenerate(tmp_path, capsys):
    path = write_grid_csv(planted_grid(0.3, 0.3), tmp_path / "g.csv")
    assert main(["calibrate", str(path), "--out", str(tmp_path)]) == 4


def test_calibrate_bad_grid(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["calibrate", str(bad), "--out", str(tmp_path)]) == 2


def test_kfactors_command(tmp_path):
    path = write_grid_csv(planted_grid(0.0, math.pi / 2), tmp_path / "g.csv")
    assert main(["kfactors", str(path), "--at", "0,0", "--out", str(tmp_path)]) == 0
    line = (tmp_path / "kfactors.csv").read_text().splitlines()[1].split(",")
    # h = 0.1 central difference of exp(-4 v): truncation (4h)^2 / 6 ~ 2.7 %
    assert float(line[2]) == pytest.approx(-4e-9, rel=0.03)
    assert main(["kfactors", str(path), "--at=-0.3,0", "--out", str(tmp_path)]) == 2


def _v1v2_grid(tmp_path):
    A, B = np.meshgrid(AXIS, AXIS, indexing="ij")
    g = LifetimeGrid.from_arrays(AXIS, AXIS, 1e-9 * np.exp(-2 * B), 1e-9 * np.exp(-2 * A),
                                 axis_kind=AxisKind.V1_V2)
    return write_grid_csv(g, tmp_path / "grid_V1_V2.csv")


def test_neuron_zero_image(tmp_path):
    grid = _v1v2_grid(tmp_path)
    drive = write_drive_csv(Drive.constant(0.0, 0.0), tmp_path / "drive.csv")
    args = ["neuron", str(grid), str(drive), "--duration", "2e-5", "--seed", "3"]
    assert main(args + ["--states", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "spikes.csv").read_bytes()
    assert a == (tmp_path / "b" / "spikes.csv").read_bytes()
    assert read_spike_csv(tmp_path / "a" / "spikes.csv").size > 5000
    lines = (tmp_path / "a" / "states.csv").read_text().splitlines()[1:]
    t = np.array([float(x.split(",")[0]) for x in lines] + [2e-5])
    s = [x.split(",")[1] for x in lines]
    duty = sum(d for d, st in zip(np.diff(t), s) if st == "AP") / 2e-5
    assert duty == pytest.approx(0.5, abs=0.02)


def test_neuron_outside_domain(tmp_path, capsys):
    grid = _v1v2_grid(tmp_path)
    drive = write_drive_csv(Drive([0.0, 1e-6], [0.0, 0.9], [0.0, 0.0]), tmp_path / "drive.csv")
    assert main(["neuron", str(grid), str(drive), "--duration", "2e-6", "--out", str(tmp_path)]) == 5
    assert "1e-06" in capsys.readouterr().err


def test_neuron_rejects_physical_grid(tmp_path):
    path = write_grid_csv(planted_grid(0.0, 1.5), tmp_path / "g.csv")
    drive = write_drive_csv(Drive.constant(0.0, 0.0), tmp_path / "drive.csv")
    assert main(["neuron", str(path), str(drive), "--out", str(tmp_path)]) == 2


def test_transformed_sweep_command(tmp_path):
    ang = tmp_path / "angles.txt"
    from me_neuron.characterization import write_angles_report
    write_angles_report(BasisAngles(-0.5, 1.2), ang)
    assert main(["sweep", "--transformed", str(ang), "--v1=-0.05,0.05", "--v2", "0", "--min-dwells", "20",
                 "--out", str(tmp_path)]) == 0
    header, *rows = (tmp_path / "grid_V1_V2.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[0].startswith("V1_V2,")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["angles_file"] == str(ang)


def test_selftest_command(capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out
