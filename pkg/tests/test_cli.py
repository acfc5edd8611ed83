import json

import numpy as np
import pytest

from bhdos import cli, reporting
from bhdos.model import BoseHubbardModel

SQRT2 = np.sqrt(2.0)


@pytest.fixture()
def model_file(tmp_path):
    m = BoseHubbardModel(
        L=2, H=np.array([[0.0, -1.0], [-1.0, 0.0]]),
        U={(0, 0, 0, 0): 0.1, (1, 1, 1, 1): 0.1},
    )
    path = tmp_path / "dimer.json"
    reporting.save_model(path, m)
    return str(path)


@pytest.fixture()
def free_model_file(tmp_path):
    m = BoseHubbardModel(L=2, H=np.diag([1.0, SQRT2]))
    path = tmp_path / "free.json"
    reporting.save_model(path, m)
    return str(path)


def test_basis_command(capsys):
    assert cli.main(["basis", "--L", "2", "--N", "5"]) == 0
    assert "6" in capsys.readouterr().out


def test_ed_writes_levels_density_and_figure(model_file, tmp_path):
    out = tmp_path / "ed"
    assert cli.main(["ed", "--model", model_file, "--N", "6", "--out", str(out)]) == 0
    cols, meta = reporting.read_table(out / "levels.csv")
    assert len(cols["E"]) == 7
    dos, _ = reporting.read_table(out / "dos_ed.csv")
    assert set(dos) >= {"E", "rho_exact_smoothed"}
    assert (out / "levels.png").exists()
    assert (out / "manifest_ed.json").exists()


def test_weyl_estimate_and_stderr_columns(free_model_file, tmp_path):
    out = tmp_path / "weyl"
    assert cli.main(["weyl", "--model", free_model_file, "--N", "6",
                     "--samples", "20000", "--out", str(out)]) == 0
    cols, meta = reporting.read_table(out / "dos_weyl.csv")
    assert np.all(cols["rho_weyl_stderr"] >= 0)
    assert (out / "dos_weyl.png").exists()


def test_evolve_writes_trajectory(model_file, tmp_path):
    out = tmp_path / "ev"
    assert cli.main(["evolve", "--model", model_file, "--psi0", "2,0;1,0.5",
                     "--tmax", "3", "--nt", "50", "--out", str(out)]) == 0
    cols, _ = reporting.read_table(out / "trajectory.csv")
    assert len(cols["t"]) == 50
    n_tot = cols["q1"] ** 2 + cols["p1"] ** 2 + cols["q2"] ** 2 + cols["p2"] ** 2
    assert np.max(np.abs(n_tot - n_tot[0])) < 1e-9


def test_freefield_dos_report(free_model_file, tmp_path):
    out = tmp_path / "ffd"
    assert cli.main(["freefield-dos", "--model", free_model_file, "--N", "4",
                     "--samples", "20000", "--out", str(out)]) == 0
    cols, _ = reporting.read_table(out / "dos.csv")
    for name in ("E", "rho_exact_smoothed", "rho_weyl", "rho_weyl_stderr",
                 "rho_osc", "rho_total"):
        assert name in cols


def test_freefield_check_reports_small_gaps(free_model_file, tmp_path, capsys):
    out = tmp_path / "ffc"
    assert cli.main(["freefield-check", "--model", free_model_file,
                     "--trials", "3", "--out", str(out)]) == 0
    rows = json.loads((out / "identity_check.json").read_text())
    assert len(rows) == 3
    assert all(r["gap"] < 1e-6 for r in rows)


def test_repeated_runs_write_identical_tables(free_model_file, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        cli.main(["freefield-dos", "--model", free_model_file, "--N", "3",
                  "--samples", "10000", "--seed", "7", "--out", str(out)])
        outs.append((out / "dos.csv").read_bytes())
    assert outs[0] == outs[1]


def test_rejects_interacting_model_for_freefield(model_file, tmp_path, capsys):
    with pytest.raises(ValueError):
        cli.main(["freefield-dos", "--model", model_file, "--N", "3",
                  "--out", str(tmp_path / "x")])


def test_table_roundtrip_preserves_floats(tmp_path):
    path = tmp_path / "t.csv"
    x = np.array([1.0 / 3.0, np.pi, 1e-17])
    reporting.write_table(path, {"x": x}, {"note": "check"})
    cols, meta = reporting.read_table(path)
    assert np.array_equal(cols["x"], x)
    assert meta["note"] == "check"


def test_config_hash_is_order_insensitive():
    a = reporting.config_hash({"x": 1, "y": 2})
    b = reporting.config_hash({"y": 2, "x": 1})
    assert a == b
