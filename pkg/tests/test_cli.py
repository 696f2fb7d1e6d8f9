import csv
import json
import math
import os

import numpy as np
import pytest

from qbounce import cli, estimators
from qbounce.bouncer import eigenstates
from qbounce.fileio import format_real, read_curve_csv, sha256_file
from qbounce.exceptions import DomainError
from qbounce.slitmodels import AbsorberModel, modesum_transmission

from oracles import count_local_maxima


def run(tmp_path, *argv, env=None):
    return cli.main(["--out", str(tmp_path)] + list(argv), environ=env or {})


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_format_real():
    assert format_real(1 / 3) == "0.333333333333"
    assert format_real(-0.0) == "0"
    assert format_real(1e-20) == "1e-20"


def test_eigen_table(tmp_path):
    assert run(tmp_path, "eigen", "--n-max", "4") == 0
    header, rows = read(tmp_path / "eigen.csv")
    assert header == ["n", "a_n", "z_n_um", "E_n_peV"]
    assert rows.shape == (4, 4)
    assert np.all(np.diff(rows[:, 2]) > 0)
    assert rows[0, 2] == pytest.approx(13.72, abs=0.01)
    assert 1.0 < rows[0, 3] < 10.0
    raw = (tmp_path / "eigen.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")


def test_eigen_bad_n(tmp_path):
    assert run(tmp_path, "eigen", "--n-max", "0") == 2


def test_density_columns(tmp_path):
    assert run(tmp_path, "density", "--n-max", "4", "--z-top-um", "150",
               "--samples", "6001") == 0
    header, rows = read(tmp_path / "density.csv")
    assert header == ["z_um", "P_1", "P_2", "P_3", "P_4", "P_sum"]
    z = rows[:, 0]
    for n in range(1, 5):
        col = rows[:, n]
        assert np.trapezoid(col, z) == pytest.approx(1.0, abs=1e-6)
        assert count_local_maxima(col) == n
    np.testing.assert_allclose(rows[:, 1:5].sum(axis=1), rows[:, 5], rtol=1e-10, atol=1e-15)


def test_classical_scan(tmp_path):
    assert run(tmp_path, "transmission", "--model", "classical", "--points", "50",
               "--scale", "2.5") == 0
    header, rows = read(tmp_path / "transmission_classical.csv")
    assert header == ["z_a", "counts"] and rows.shape == (50, 2)
    np.testing.assert_allclose(rows[:, 1], 2.5 * rows[:, 0] ** 1.5, rtol=1e-11)


def test_stepwise_jumps_at_levels(tmp_path):
    assert run(tmp_path, "transmission", "--model", "stepwise", "--z-min-um", "1",
               "--z-max-um", "50", "--points", "4901") == 0
    _, rows = read(tmp_path / "transmission_stepwise.csv")
    z, c = rows[:, 0], rows[:, 1]
    jumps = z[1:][np.diff(c) != 0]
    levels = [s.z_n * 1e6 for s in eigenstates(4)]
    assert len(jumps) == 4
    for zj, zn in zip(jumps, levels):
        # the first grid point past z_n carries the step
        assert zj - 0.01 - 1e-9 <= zn < zj
    assert set(np.unique(c)) == {0.0, 1.0, 2.0, 3.0, 4.0}


def test_mc_runs_are_byte_identical(tmp_path):
    args = ["transmission", "--model", "mc", "--points", "3", "--particles", "3000",
            "--seed", "7"]
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args) == 0
    a = (tmp_path / "a" / "transmission_mc.csv").read_bytes()
    b = (tmp_path / "b" / "transmission_mc.csv").read_bytes()
    assert a == b
    header, _ = read(tmp_path / "a" / "transmission_mc.csv")
    assert header == ["z_a", "counts", "err"]
    assert run(tmp_path / "c", *args[:-1], "8") == 0
    assert (tmp_path / "c" / "transmission_mc.csv").read_bytes() != a


def test_tdse_curve_and_snapshot(tmp_path):
    assert run(tmp_path, "transmission", "--model", "tdse", "--z-min-um", "7",
               "--z-max-um", "40", "--points", "3", "--init", "eigen:1",
               "--grid-points", "512", "--snapshot-um", "20") == 0
    _, rows = read(tmp_path / "transmission_tdse.csv")
    assert np.all(np.diff(rows[:, 1]) >= -1e-6)
    assert rows[0, 1] < 1e-2 and rows[-1, 1] > 0.9
    header, snap = read(tmp_path / "snapshot_20um.csv")
    assert header == ["z_um", "density_per_um"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert "tdse" in manifest["config"]["derived"]


def test_bad_model_is_usage_error(tmp_path):
    assert run(tmp_path, "transmission", "--model", "quantum") == 2


def write_curve(path, z_um, counts, err=None):
    with open(path, "w") as fh:
        fh.write("z_a,counts" + (",err" if err is not None else "") + "\n")
        for i, (z, c) in enumerate(zip(z_um, counts)):
            fh.write(f"{z:.17g},{c:.17g}" + (f",{err[i]:.17g}" if err is not None else "") + "\n")


def test_fit_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    z = np.linspace(10, 600, 30)
    y = 3.0 * z ** 1.5 * (1 + 0.01 * rng.normal(size=z.size))
    write_curve(tmp_path / "data.csv", z, y)
    assert run(tmp_path, "fit", str(tmp_path / "data.csv"), "--model", "classical") == 0
    rep = json.loads((tmp_path / "fit_classical.json").read_text())
    assert rep["params"]["scale"] == pytest.approx(3.0, rel=0.05)
    assert rep["converged"] and rep["weighted"] is False
    assert set(rep) >= {"params", "residual", "covariance"}


def test_fit_weighted_flag(tmp_path):
    z = np.linspace(10, 600, 10)
    y = 2.0 * z ** 1.5
    write_curve(tmp_path / "data.csv", z, y, err=0.01 * y)
    assert run(tmp_path, "fit", str(tmp_path / "data.csv"), "--model", "classical") == 0
    rep = json.loads((tmp_path / "fit_classical.json").read_text())
    assert rep["weighted"] is True


def test_fit_too_few_rows(tmp_path):
    write_curve(tmp_path / "one.csv", [20.0], [5.0])
    code = run(tmp_path, "fit", str(tmp_path / "one.csv"), "--model", "modesum",
               "--free", "scale,kappa")
    assert code == 2


def test_malformed_csv_diagnostics(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("z_a,counts\n10,1\n20,abc\n")
    assert run(tmp_path, "fit", str(tmp_path / "bad.csv"), "--model", "classical") == 2
    err = capsys.readouterr().err
    assert "row 3" in err and "counts" in err
    (tmp_path / "hdr.csv").write_text("height,counts\n10,1\n")
    with pytest.raises(DomainError, match="row 1"):
        read_curve_csv(tmp_path / "hdr.csv")
    (tmp_path / "short.csv").write_text("z_a,counts,err\n10,1\n")
    with pytest.raises(DomainError, match="row 2"):
        read_curve_csv(tmp_path / "short.csv")


def test_fit_non_convergence_writes_partial_report(tmp_path, monkeypatch):
    z = np.linspace(10, 80, 12)
    counts = 2.0 * modesum_transmission(z * 1e-6, 4, absorber=AbsorberModel(kappa=0.4))
    write_curve(tmp_path / "data.csv", z, counts)
    monkeypatch.setattr(estimators, "MAX_ITER", 1)
    code = run(tmp_path, "fit", str(tmp_path / "data.csv"), "--model", "modesum")
    assert code == 3
    rep = json.loads((tmp_path / "fit_modesum.json").read_text())
    assert rep["converged"] is False and "params" in rep


def test_fig1(tmp_path):
    assert run(tmp_path, "scenario", "fig1") == 0
    header, rows = read(tmp_path / "fig1.csv")
    assert header == ["s", "Ai", "Ai_prime"]
    assert rows[0, 0] == -15 and rows[-1, 0] == 5
    row0 = rows[rows[:, 0] == 0][0]
    assert row0[1] == pytest.approx(0.3550280539, abs=1e-10)


def test_fig3(tmp_path):
    assert run(tmp_path, "scenario", "fig3") == 0
    header, rows = read(tmp_path / "fig3.csv")
    assert header[1:5] == ["P_1", "P_2", "P_3", "P_4"]


def test_fig4_shared_grid_and_classical_bound(tmp_path):
    assert run(tmp_path, "scenario", "fig4", "--z-min-um", "10", "--z-max-um", "120",
               "--points", "5", "--particles", "5000") == 0
    header, rows = read(tmp_path / "fig4.csv")
    assert header == ["z_a", "classical", "semiclassical", "modesum", "tdse", "mc"]
    assert rows.shape == (5, 6)
    np.testing.assert_allclose(rows[:, 0], np.linspace(10, 120, 5))
    norm = rows / rows[-1]
    # mc is a classical simulation; the bound is for the quantum curves
    for k in range(2, 5):
        assert np.all(norm[:, 1] >= norm[:, k] - 1e-9), header[k]
    derived = json.loads((tmp_path / "manifest.json").read_text())["config"]["derived"]
    assert derived["fig4"]["mc_theta_max"] == 0.05


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"beam": {"speed": 3}}))
    assert run(tmp_path, "--config", str(cfg), "eigen") == 2
    assert "speed" in capsys.readouterr().err
    cfg.write_text(json.dumps({"colour": 1}))
    assert run(tmp_path, "--config", str(cfg), "eigen") == 2
    cfg.write_text("{not json")
    assert run(tmp_path, "--config", str(cfg), "eigen") == 2


def test_non_numeric_config_value(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"absorber": {"kappa": "high"}}))
    assert run(tmp_path, "--config", str(cfg), "transmission", "--model", "modesum") == 2


def test_manifest_checksums(tmp_path):
    assert run(tmp_path, "scenario", "fig1") == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["seed"] == 12345 and m["command"][:3] == ["qbounce", "--out", str(tmp_path)]
    assert m["version"] and m["wall_time_s"] >= 0
    for entry in m["outputs"]:
        assert sha256_file(tmp_path / entry["path"]) == entry["sha256"]
    assert [e["path"] for e in m["outputs"]] == ["fig1.csv"]
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".tmp")]


def test_precedence_flag_env_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"output_dir": str(tmp_path / "file"), "seed": 5}))
    env = {cli.OUT_ENV: str(tmp_path / "env")}
    assert cli.main(["--config", str(cfg), "eigen"], environ={}) == 0
    assert (tmp_path / "file" / "eigen.csv").exists()
    assert cli.main(["--config", str(cfg), "eigen"], environ=env) == 0
    assert (tmp_path / "env" / "eigen.csv").exists()
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "flag"), "--seed", "9",
                     "eigen"], environ=env) == 0
    m = json.loads((tmp_path / "flag" / "manifest.json").read_text())
    assert m["seed"] == 9
    assert m["config"]["sources"]["output_dir"] == "flag"
    assert m["config"]["sources"]["seed"] == "flag"
    m = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert m["seed"] == 5 and m["config"]["sources"]["seed"] == "file"


def test_io_errors(tmp_path):
    assert run(tmp_path, "fit", str(tmp_path / "missing.csv"), "--model", "classical") == 4
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    assert cli.main(["--out", str(blocker / "sub"), "eigen"], environ={}) == 4


def test_usage_errors_exit_two(tmp_path):
    assert cli.main([], environ={}) == 2
    assert run(tmp_path, "scenario", "fig9") == 2
