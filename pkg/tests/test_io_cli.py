import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from landau_lab import io as lio
from landau_lab.cli import ExperimentConfig, fit_decay_exponent, main, run_subcommand
from landau_lab.errors import ConfigError, LandauLabError

SMALL = """
[grid]
N = 16
L = 8.0
Nv = 16
V = 8.0

[time]
T = 0.5
dt = 0.05
T0 = 0.25
window = 0.1, 0.5

[initial_data]
epsilon = 1e-3
x_width = 1.0
"""


@given(N=st.sampled_from([8, 16]), t=st.floats(0, 100), L=st.floats(0.5, 50))
@settings(max_examples=10, deadline=None)
def test_vpf2_round_trip(tmp_path_factory, N, t, L):
    path = tmp_path_factory.mktemp("v") / "a.vpf2"
    vals = np.random.default_rng(N).standard_normal((N, N))
    lio.write_vpf2(path, vals, L, t)
    back, L2, t2 = lio.read_vpf2(path)
    assert np.array_equal(back, vals) and L2 == L and t2 == t


def test_vpf4_round_trip_and_dispatch(tmp_path):
    vals = np.random.default_rng(1).standard_normal((8, 8, 4, 4))
    lio.write_vpf4(tmp_path / "f.vpf4", vals, 4.0, 8.0, 1.5)
    snap = lio.read_snapshot(tmp_path / "f.vpf4")
    assert snap["kind"] == "VPF4" and np.array_equal(snap["values"], vals)
    assert (snap["L"], snap["v_max"], snap["time"]) == (4.0, 8.0, 1.5)


def test_snapshot_corruption_detected(tmp_path):
    p = tmp_path / "bad.vpf2"
    lio.write_vpf2(p, np.zeros((8, 8)), 1.0)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(LandauLabError) as e:
        lio.read_vpf2(p)
    assert e.value.code == "snapshot-invalid"
    p.write_bytes(b"XXXX" + b"\0" * 40)
    with pytest.raises(LandauLabError):
        lio.read_snapshot(p)
    with pytest.raises(LandauLabError):
        lio.write_vpf2(p, np.zeros((4, 5)), 1.0)


def test_csv_round_trip(tmp_path):
    lio.write_csv(tmp_path / "a.csv", ["t", "x"], [(0.5, 1e-9), (1.0, 2)])
    cols, rows = lio.read_csv(tmp_path / "a.csv")
    assert cols == ["t", "x"] and [[float(c) for c in r] for r in rows] == [[0.5, 1e-9], [1.0, 2.0]]
    (tmp_path / "b.csv").write_text("t,x\n")
    with pytest.raises(LandauLabError):
        lio.read_csv(tmp_path / "b.csv")


def test_config_round_trip():
    cfg = ExperimentConfig.from_text(SMALL)
    again = ExperimentConfig.from_text(cfg.to_text())
    assert again == cfg and again.digest() == cfg.digest()
    assert cfg.grid.N == 16 and cfg.time.window == (0.1, 0.5)


@pytest.mark.parametrize("text,field", [
    ("[grid]\nN = -4\n", "grid.N"),
    ("[grid]\nN = 12\n", "grid.N"),
    ("[grid]\nNv = 7\n", "grid.Nv"),
    ("[time]\nT0 = 0.33\n", "time.T0"),
    ("[norms]\na = 1.5\n", "norms.a"),
    ("[grid]\nsize = 3\n", "grid.size"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[grid]\nN = many\n", "grid.N"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_text(text)
    assert e.value.field == field


@given(p=st.floats(-3.0, 0.5), c=st.floats(0.1, 10.0))
@settings(max_examples=25, deadline=None)
def test_fit_recovers_power_law(p, c):
    t = np.linspace(1, 50, 60)
    slope, width = fit_decay_exponent(t, c * t**p, (5, 50))
    assert abs(slope - p) < 1e-9 and width < 1e-6


def test_fit_needs_samples():
    with pytest.raises(LandauLabError):
        fit_decay_exponent([1, 2, 3], [1, 1, 1], (5, 50))


def test_simulate_and_norms_subcommands(tmp_path, capsys):
    cfg = ExperimentConfig.from_text(SMALL)
    code, rep = run_subcommand("simulate", cfg, tmp_path / "s")
    assert code == 0 and rep.constants["bootstrap_status"][0] == "converged"
    assert rep.constants["mass_drift_rel"][0] < 1e-6
    cols, rows = lio.read_csv(tmp_path / "s" / "rho_norms.csv")
    assert len(rows) == 11 and cols[0] == "t"
    assert (tmp_path / "s" / "report.txt").read_text().startswith("command = simulate")
    code = main(["norms", "--snapshot", str(tmp_path / "s" / "rho_t0.5.vpf2"), "--out", str(tmp_path / "n")])
    assert code == 0 and "Binf" in capsys.readouterr().out


def test_cli_reports_invalid_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nN = -4\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "grid.N" in capsys.readouterr().err


def test_norms_needs_snapshot(tmp_path):
    code, rep = run_subcommand("norms", ExperimentConfig.from_text(SMALL), tmp_path)
    assert code == 2 and "--snapshot" in rep.status
