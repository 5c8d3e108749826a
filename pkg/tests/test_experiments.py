import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from semiscatter import io as sio
from semiscatter.errors import ConfigError, DomainError, FitError
from semiscatter.experiments.cli import run_cli
from semiscatter.experiments.config import load_run_config, load_sweep_config, window
from semiscatter.experiments.fitting import fit_power_law
from semiscatter.experiments.sweep import (GaussianDatum, SweepConfig, prepare_matched_data,
                                           semiclassical_sweep)
from semiscatter.lattice import Lattice, PhaseSpaceField
from semiscatter.phasespace import make_test_set, weak_metric, wigner, wigner_grid
from semiscatter.qstate import Params

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# -- fitting ---------------------------------------------------------------------


def test_fit_exact_power_law():
    t = np.linspace(1, 50, 30)
    v = (1 + t**2) ** -1.5
    slope, err = fit_power_law(np.column_stack([t, v]))
    assert abs(slope + 3) < 1e-6 and err < 1e-10


def test_fit_constant():
    t = np.linspace(0, 10, 11)
    slope, _ = fit_power_law(np.column_stack([t, np.full(11, 2.5)]))
    assert abs(slope) < 1e-6


def test_fit_noisy_within_three_stderr():
    rng = np.random.default_rng(12)
    t = np.geomspace(5, 50, 40)
    v = (1 + t**2) ** -0.5 * (1 + 0.01 * rng.standard_normal(t.size))
    slope, err = fit_power_law(np.column_stack([t, v]))
    assert abs(slope + 1) < 3 * err


def test_fit_errors():
    t = np.arange(10.0)
    with pytest.raises(FitError):
        fit_power_law(np.column_stack([t, t - 3]))
    with pytest.raises(FitError):
        fit_power_law(np.column_stack([t, t + 1]), (0, 2))
    with pytest.raises(FitError):
        fit_power_law(t)


# -- config ----------------------------------------------------------------------

RUN = """
[lattice]
n = 128
box_length = 30
[params]
hbar = 0.5
[initial]
kind = coherent
centers = 0:0:1; 1.5:-0.5:0.5   # two centres
[timegrid]
t1 = 1
dt = 0.1
stride = 5
[diagnostics]
window = 0.2:1
"""


def test_run_config_from_string():
    cfg = load_run_config(RUN)
    assert cfg.lattice == Lattice(1, 128, 30.0)
    assert cfg.params.hbar == 0.5 and cfg.timegrid.steps == 10
    g = cfg.build_initial_state()
    assert g.rank == 2 and np.allclose(g.occupations, [1.0, 0.5])
    assert window(cfg.diagnostics) == (0.2, 1.0)


def test_shipped_configs_parse():
    h = load_run_config(CONFIGS / "hartree.cfg")
    assert h.lattice.n == 2048 and h.interaction.length == 0.5
    v = load_run_config(CONFIGS / "vlasov.cfg")
    assert v.vlasov_grid().n_p == 512
    s = load_sweep_config(CONFIGS / "sweep.cfg")
    assert s.hbars == (1.0, 0.5, 0.25, 0.125)


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[lattice]\nn = 100\n",
    "[lattice]\nwidth = 3\n",
    "[params]\nhbar = 2\n",
    "[initial]\nkind = coherent\ncenters = 0:0\n",
    "[initial]\nkind = nope\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        load_run_config(text).build_initial_state()


def test_missing_config_file():
    with pytest.raises(ConfigError):
        load_run_config("/nonexistent/run.cfg")


def test_sweep_config_validation():
    with pytest.raises(ConfigError):
        SweepConfig(hbars=(0.5, 1.0))
    with pytest.raises(ConfigError):
        SweepConfig(hbars=(1.0, 0.0))
    with pytest.raises(ConfigError):
        SweepConfig(dt=0.3, snapshot_every=1.0)
    with pytest.raises(ConfigError):
        load_sweep_config("[sweep]\nhbars = 1, 1\n")
    cfg = load_sweep_config("[sweep]\nhbars = 1,0.5\nrank_budget = 40\n[f0]\nmass = 0.01\n")
    assert cfg.rank_budget == 40 and cfg.f0.mass == 0.01
    assert cfg.digest() == SweepConfig(hbars=(1, 0.5), rank_budget=40, f0=GaussianDatum(mass=0.01)).digest()
    assert cfg.lattice(0.25).n == 1024


# -- matched data and sweep --------------------------------------------------------


def test_prepare_matched_data():
    lat = Lattice(1, 256, 80.0)
    grid = wigner_grid(lat, 1.0)
    md = prepare_matched_data(grid.zeros(), Params(1.0), 64)
    assert md.gamma0.rank == 0 and md.x_in == 0
    with pytest.raises(DomainError):
        prepare_matched_data(PhaseSpaceField(grid, -grid.sample(GaussianDatum()).values), Params(1.0), 64)
    md = prepare_matched_data(GaussianDatum().sample(grid), Params(1.0), 64)
    assert abs(md.mass_quantum / md.mass_classical - 1) < 0.05
    assert md.small


def test_toeplitz_fidelity_decreases_in_hbar():
    prev = np.inf
    for h in (1.0, 0.5, 0.25):
        lat = SweepConfig().lattice(h)
        grid = wigner_grid(lat, h)
        f0 = GaussianDatum().sample(grid)
        g0 = prepare_matched_data(f0, Params(h), 128).gamma0
        d = weak_metric(wigner(g0, grid), f0, make_test_set(16, grid))
        assert d < prev
        prev = d


@pytest.fixture(scope="module")
def free_sweep():
    cfg = SweepConfig(hbars=(1.0, 0.5, 0.25), mode="none", horizon=2.0, vlasov_np=256)
    return semiclassical_sweep(cfg)


def test_free_sweep_reduces_to_toeplitz_fidelity(free_sweep):
    rep = free_sweep
    assert not rep.aborted and len(rep.members) == 3
    assert np.ptp(rep.pair_classical, axis=0).max() < 1e-14
    for m in rep.members:
        assert np.ptp(m.pair_quantum, axis=0).max() < 1e-12
        assert np.allclose(m.dw, m.toeplitz_fidelity, rtol=1e-8, atol=0)
    assert rep.monotone_dw() and rep.flags() == []


def test_report_json_carries_digest(free_sweep, tmp_path):
    paths = sio.write_correspondence(free_sweep, tmp_path)
    js = sio.read_json(paths["report"])
    assert js["schema"] == "semiscatter.correspondence/1"
    assert all(m["digest"] == free_sweep.digest for m in js["members"])
    header, rows = sio.read_csv(paths["pairings"])
    assert header[-1] == "digest" and len(rows) == 3 * 16
    header, rows = sio.read_csv(paths["dw"])
    assert header == ["t", "dw_hbar_1.0", "dw_hbar_0.5", "dw_hbar_0.25", "digest"] and len(rows) == 3


def test_sweep_aborts_on_gate_failure():
    cfg = SweepConfig(hbars=(1.0, 0.5), horizon=1.0, z_gate=0.0)
    rep = semiclassical_sweep(cfg)
    assert rep.aborted and rep.members == [] and "z-norm" in rep.reason


# -- CLI ---------------------------------------------------------------------------


def test_cli_transform_check(tmp_path, capsys):
    assert run_cli(["transform-check", "--d", "1", "--n", "256", "--hbar", "1", "--out", str(tmp_path)]) == 0
    header, rows = sio.read_csv(tmp_path / "checks.csv")
    assert header == ["check", "error", "tol", "state"]
    assert rows and all(r[3] == "pass" for r in rows)
    assert "pass" in capsys.readouterr().out


def test_cli_free_dispersion_slope(tmp_path):
    code = run_cli(["free-dispersion", "--r", "inf", "--hbars", "1,0.5,0.25", "--n", "2048", "--L", "256",
                    "--out", str(tmp_path)])
    assert code == 0
    header, rows = sio.read_csv(tmp_path / "summary.csv")
    assert header == ["hbar", "slope", "stderr", "ratio_max", "ratio_min"]
    slopes = np.array([float(r[1]) for r in rows])
    assert np.all(np.abs(slopes + 1) < 0.05)
    h, series = sio.read_csv(tmp_path / "hbar_0.5.csv")
    assert h == sio.DECAY_COLUMNS and len(series) == 11


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


HARTREE = """
[lattice]
n = 256
box_length = 60
[params]
hbar = 0.5
[interaction]
length = 0.5
[initial]
var_q = 0.5
var_p = 0.5
mass = 0.01
[timegrid]
t1 = 4
dt = 0.05
stride = 10
[diagnostics]
window = 1:4
"""


def test_cli_hartree_run(tmp_path):
    out = tmp_path / "out"
    assert run_cli(["hartree-run", "--config", _write(tmp_path, HARTREE), "--out", str(out)]) == 0
    header, rows = sio.read_csv(out / "diagnostics.csv")
    assert header == ["t", "trace", "trace_drift", "rho_norm", "grad_sup", "weighted_norm"]
    assert len(rows) == 9
    rep = sio.read_json(out / "report.json")
    assert rep["halted"] is False and "decay" in rep
    assert run_cli(["report", "--input", str(out)]) == 0
    assert (out / "tables" / "summary.csv").exists()


def test_cli_hartree_blowup_exit_1(tmp_path):
    text = HARTREE.replace("mass = 0.01", "mass = 20").replace("hbar = 0.5", "hbar = 0.5\nsign = -1")
    text += "blowup_ceiling = 1\n"
    assert run_cli(["hartree-run", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1


VLASOV = """
[lattice]
n = 128
box_length = 40
[interaction]
length = 1
[initial]
mass = 0.01
[vlasov]
n_p = 128
p_extent = 3.5
[timegrid]
t1 = 2
dt = 0.05
stride = 10
"""


def test_cli_vlasov_run(tmp_path):
    out = tmp_path / "v"
    assert run_cli(["vlasov-run", "--config", _write(tmp_path, VLASOV), "--out", str(out)]) == 0
    header, rows = sio.read_csv(out / "diagnostics.csv")
    assert header == ["t", "mass", "mass_drift", "rho_norm", "grad_sup"] and len(rows) == 5
    assert max(float(r[2]) for r in rows) < 1e-12


def test_cli_sweep_and_report(tmp_path):
    cfg = _write(tmp_path, "[sweep]\nhbars = 1, 0.5\nhorizon = 1\nmode = none\nvlasov_np = 256\n")
    out = tmp_path / "s"
    assert run_cli(["sweep", "--config", cfg, "--out", str(out)]) == 0
    for name in ("report.json", "dw.csv", "pairings.csv", "hbar_1.0/series.csv"):
        assert (out / name).exists()
    assert run_cli(["report", "--input", str(out / "report.json")]) == 0
    header, rows = sio.read_csv(out / "tables" / "gaps.csv")
    assert header == ["hbar", "n", "gap", "digest"] and len(rows) == 32


def test_cli_gate_failure_exit_1(tmp_path):
    cfg = _write(tmp_path, "[sweep]\nhbars = 1\nhorizon = 1\nz_gate = 0\n")
    assert run_cli(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 1


@pytest.mark.parametrize("argv", [
    ["no-such-command"],
    ["transform-check", "--bogus"],
    ["hartree-run"],
    ["hartree-run", "--config", "/nonexistent.cfg"],
    ["report", "--input", "/nonexistent"],
    ["free-dispersion", "--hbars", "a,b"],
])
def test_cli_usage_errors_exit_2(argv, tmp_path):
    assert run_cli(argv + ["--out", str(tmp_path)] if argv[0] != "no-such-command" else argv) == 2


def test_cli_bad_config_exit_2(tmp_path):
    assert run_cli(["hartree-run", "--config", _write(tmp_path, "[lattice]\nn = 3\n")]) == 2


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "semiscatter", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "transform-check" in res.stdout


def test_determinism_bit_identical_csv(tmp_path):
    cfg = _write(tmp_path, HARTREE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(["hartree-run", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert run_cli(["hartree-run", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()
