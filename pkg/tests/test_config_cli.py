import json

import pytest

from fastdiff.cli import main
from fastdiff.config import default_config, parse_config
from fastdiff.errors import ConfigurationError
from fastdiff.grid import make_grid
from fastdiff.profiles import Barenblatt, derive_params
from fastdiff.grid import signed_difference_integral
from fastdiff.scenarios import _mass_neutral_coefficient, build_initial_data

MINIMAL = """
[scenario]
name = "thm-integrable"
N = 3
m = 0.2
T = 1
k1 = 4
k2 = 1
"""


def test_minimal_config_valid():
    cfg = parse_config(MINIMAL)
    assert cfg.scenario["k0"] == 2.0 and cfg.grid["Rmax"] == 1e5
    assert cfg.tolerances["convergence_factor"] == 0.2


@pytest.mark.parametrize("text,where", [
    ('[scenario]\nname = "thm-nonintegrable"\nN = 3\n', "regime"),
    ('[scenario]\nname = "thm-integrable"\nbogus = 1\n', "scenario.bogus"),
    ('[scenario]\nname = "thm-integrable"\n[extra]\na = 1\n', "extra"),
    ('[scenario]\nname = "nope"\n', "scenario.name"),
    ('[scenario]\nname = "thm-integrable"\n[grid]\nM = 10\n', "grid.M"),
    ('[scenario]\nname = "thm-integrable"\nk1 = 0.5\n', "scenario.k1"),
    ('[scenario]\nname = "yamabe"\nm = 0.1\n', "scenario.m"),
    ('[scenario]\nname = "thm-integrable"\n[solver]\ncorrected_mass = 1\n', "solver.corrected_mass"),
    ("[scenario\n", "TOML"),
    ("[grid]\nM = 100\n", "scenario.name"),
])
def test_invalid_configs(text, where):
    with pytest.raises(ConfigurationError, match=where.replace(".", r"\.")):
        parse_config(text)


def test_overrides():
    cfg = default_config("thm-nonintegrable", ["grid.M=800", "solver.adapt_target=1e-3", "scenario.output=out"])
    assert cfg.grid["M"] == 800 and cfg.solver["adapt_target"] == 1e-3 and cfg.output == "out"
    with pytest.raises(ConfigurationError):
        default_config("thm-nonintegrable", ["gridM=800"])
    with pytest.raises(ConfigurationError):
        default_config("thm-nonintegrable", ["grid.nope=1"])


def test_mass_neutral_coefficient():
    # 30-digit quadrature oracle
    p = derive_params(3, 0.2)
    assert _mass_neutral_coefficient(p, 2.0) == pytest.approx(0.257004831006106188, rel=1e-10)


def test_initial_data():
    cfg = default_config("thm-integrable", ["grid.M=1600"])
    u0 = build_initial_data(cfg)
    p = derive_params(3, 0.2)
    B = Barenblatt(p, 2.0).field(u0.grid, 0.0)
    # the perturbation carries no mass
    assert abs(signed_difference_integral(u0, B)) < 1e-6 * abs(signed_difference_integral(B.with_values(B.values * 1.2), B))
    ap = build_initial_data(default_config("appendix-onesided"))
    env = Barenblatt(derive_params(6, 0.4), 1.0)(ap.r, 0.0)
    assert (ap.values <= env).all() and ap.values[0] == pytest.approx(0.7 * env[0])
    lo = build_initial_data(default_config("example-longer"))
    assert lo.values[0] == pytest.approx(Barenblatt(p, 1.0)(0.0, 0.0) + 4.96)


def test_cli_params(capsys):
    assert main(["params", "--N", "6", "--m", "0.4"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["regime"] == "NonIntegrable" and data["beta"] == pytest.approx(3.75)
    assert main(["params", "--N", "3", "--m", "0.5"]) == 2


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[scenario]\nname = "thm-integrable"\nunknown_key = 3\n')
    assert main(["run", str(bad)]) == 2
    assert "scenario.unknown_key" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    cfg = tmp_path / "ok.toml"
    cfg.write_text('[scenario]\nname = "thm-nonintegrable"\n')
    assert main(["params", str(cfg)]) == 0


def test_cli_run_writes_outputs(tmp_path):
    cfg = tmp_path / "a.toml"
    cfg.write_text('[scenario]\nname = "appendix-onesided"\n[grid]\nM = 800\n[solver]\nadapt_target = 2e-3\n')
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out)])
    assert code in (0, 1)
    rep = json.loads((out / "report.json").read_text())
    assert rep["scenario"] == "appendix-onesided"
    assert set(rep["mandatory"]) == {"same_extinction_time", "sandwich_bounds", "aronson_benilan"}
    assert (out / "trajectories" / "solution" / "index.json").exists()
    # determinism: a second run differs only in the timestamp
    out2 = tmp_path / "out2"
    main(["run", str(cfg), "--out", str(out2)])
    a = json.loads((out / "report.json").read_text())
    b = json.loads((out2 / "report.json").read_text())
    a.pop("timestamp"), b.pop("timestamp")
    assert a == b


def test_cli_solver_failure(tmp_path, capsys):
    cfg = tmp_path / "f.toml"
    cfg.write_text('[scenario]\nname = "appendix-onesided"\n[grid]\nM = 800\n'
                   '[solver]\nnewton_max_iter = 1\nmax_halvings = 0\n')
    assert main(["run", str(cfg)]) == 1
    assert "t=" in capsys.readouterr().err
