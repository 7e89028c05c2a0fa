import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from larmorclock import cli
from larmorclock.config import ConfigError, Report, RunConfig, parse_config


def test_defaults():
    c = RunConfig()
    assert (c.m, c.k0, c.d, c.k_av, c.y0) == (1.0, 10.0, 2.0, 9.9, -15.0)
    assert c.delta == pytest.approx(math.sqrt(2))
    assert c.barrier.V0 == 50.0


def test_parse_with_comments_and_overrides():
    text = "# physics\nk0 = 8   # lower barrier\n\nd = 1.5\ncheckpoints = 1,2\n"
    c = parse_config(text, ["y0=-20", "n_k = 4096"])
    assert c.k0 == 8.0 and c.d == 1.5 and c.y0 == -20.0 and c.n_k == 4096
    assert c.checkpoint_times == [1.0, 2.0]


@pytest.mark.parametrize(
    "text,word",
    [("d = 0\n", "d > 0"), ("bogus = 1\n", "unknown"), ("m = abc\n", "cannot parse"), ("y0 = -3\n", "y0"),
     ("omega1 = 0.001\n", "omega1")],
)
def test_bad_config(text, word):
    with pytest.raises(ConfigError, match=word):
        parse_config(text)


def test_config_echo_round_trip():
    c = RunConfig(k0=7.5, y0=-21.0)
    assert parse_config(c.dumps()) == c


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(vals=st.lists(finite, min_size=1, max_size=8), flag=st.booleans(), n=st.integers(-10**6, 10**6))
def test_report_round_trip(vals, flag, n):
    r = Report()
    for i, v in enumerate(vals):
        r.set("times", f"x{i}", v)
    r.set("diagnostics", "flag", flag)
    r.set("diagnostics", "count", n)
    r.set("conventions", "text", "tau = -int a b")
    back = Report.loads(r.dumps())
    assert back == r
    for i, v in enumerate(vals):
        assert back["times"][f"x{i}"] == v and isinstance(back["times"][f"x{i}"], float)
    assert back.dumps() == r.dumps()


FREE = ["k0=0", "t_max=8", "n_k=2048", "checkpoints=1,2,3"]


@pytest.fixture(scope="module")
def free_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("free")
    code = cli.main(["run", "--out", str(out)] + sum((["--set", s] for s in FREE), []))
    return code, out


def test_free_run(free_run):
    code, out = free_run
    assert code == 0
    rep = Report.read(out / "report.txt")
    assert rep["times"]["tau_T_y"] == pytest.approx(4.0 / 9.9, rel=0.05)
    assert rep["times"]["tau_T_x"] == pytest.approx(4.0 / 9.9, rel=0.05)
    assert "tau_R_x" not in rep["times"] and "tau_R_y" not in rep["times"]
    assert rep["legacy"]["tau_D"] == pytest.approx(0.4, rel=0.05)
    assert rep["config"]["k0"] == 0.0 and rep["config"]["t_max"] == 8.0
    assert rep["report"]["version"]
    header = (out / "series.csv").read_text().splitlines()[0]
    assert header == "t,omega,P1,P2,P3,Nx1,Ny1,Nz1,Nx3,Ny3,Nz3"
    assert (out / "orders.csv").read_text().splitlines()[0] == "t,region,p0,p2,nx2,ny1,tau_x,tau_y"


def test_run_is_deterministic(free_run, tmp_path):
    _, first = free_run
    cli.main(["run", "--out", str(tmp_path)] + sum((["--set", s] for s in FREE), []))
    for name in ("series.csv", "orders.csv", "report.txt"):
        assert (tmp_path / name).read_bytes() == (first / name).read_bytes()


def test_invalid_config_exit_code(tmp_path, capsys):
    assert cli.main(["run", "--out", str(tmp_path), "--set", "d=-1"]) != 0
    assert "d > 0" in capsys.readouterr().err


def test_incomplete_series_exit_code(tmp_path, capsys):
    # the packet has not left the barrier region by t = 1.5
    code = cli.main(["run", "--out", str(tmp_path), "--set", "t_max=1.5", "--set", "n_k=1024",
                     "--set", "checkpoints="])
    assert code != 0
    assert "invariant violated" in capsys.readouterr().err


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# control run\nk0 = 0\nt_max = 8\nn_k = 2048\ncheckpoints = 2\n")
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert Report.read(out / "report.txt")["config"]["checkpoints"] == 2


def test_stationary_table():
    k, D, T, im, tau = cli.stationary(RunConfig(k0=0.0), 1.0, 20.0, 50)
    assert np.allclose(T, 1.0, atol=1e-12)
    assert np.all(np.isfinite(im))
    c = RunConfig()
    k, D, T, im, tau = cli.stationary(c, c.k0 - 1e-3, c.k0 + 1e-3, 2001)
    assert np.all(np.diff(T) > 0)
    assert np.max(np.abs(np.diff(T))) < 1e-6
    with pytest.raises(ConfigError):
        cli.stationary(c, 2.0, 1.0, 10)


def test_stationary_matches_narrow_packet():
    from larmorclock.clock import time_y_kspace
    from larmorclock.packet import build_kgrid

    c = RunConfig(delta=1000.0, y0=-4000.0)
    g = build_kgrid(c.packet, 2048, 8.0, barrier=c.barrier)
    _, _, _, _, tau = cli.stationary(c, c.k_av, c.k_av + 1.0, 2)
    assert time_y_kspace(g, c.barrier, c.packet) == pytest.approx(tau[0], rel=1e-3)


def test_sweep_records_failures(tmp_path):
    rows = cli.sweep(RunConfig(k0=0.0, t_max=8.0, n_k=2048, checkpoints=""), "delta", [0.1, math.sqrt(2)], tmp_path)
    assert rows[0]["status"].startswith("error")
    assert rows[1]["status"] == "ok"
    lines = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    assert lines[0] == "axis,value,tau_T_x,tau_T_y,tau_R_x,tau_R_y,status"
    assert len(lines) == 3


def test_sweep_extends_t_max_for_start_position():
    c = cli._sweep_config(RunConfig(), "y0", -25.0)
    assert c.t_max == pytest.approx(200 + 10 / 9.9)
    w = cli._sweep_config(RunConfig(), "omega", 2e-3)
    assert (w.omega1, w.omega2) == (1e-3, 2e-3)
    with pytest.raises(ConfigError):
        cli._sweep_config(RunConfig(), "mass", 1.0)


def test_oracle_subcommand(tmp_path):
    code = cli.main(["oracle", "--out", str(tmp_path), "--set", "oracle_t_max=0.1", "--set", "oracle_omegas=0",
                     "--set", "oracle_sample=0.05"])
    assert code == 0
    lines = (tmp_path / "oracle_series.csv").read_text().splitlines()
    assert lines[0] == "t,omega,P1,P2,P3,Nx1,Ny1,Nz1,Nx3,Ny3,Nz3"
    assert len(lines) == 4
