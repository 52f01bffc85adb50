import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gfspec.cli import main
from gfspec.config import ConfigError, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

AGE = """
[model]
kind = age_structured
rate = exponential
c = 3.0
[grid]
L = 20
N = 2001
"""

MITOSIS = """
[model]
kind = mitosis
rate = constant
K0 = 1.0
offspring = mitosis
[grid]
L = 20
N = 1025
[run]
T = 8
dt = 0.02
seeds = 0
"""

SELF_SIMILAR = """
[model]
kind = self_similar
gamma = 1.0
offspring = uniform
[grid]
L = 10
N = 257
[run]
T = 3
dt = 0.01
seeds = 0, 1
"""


def run(tmp_path, command, text=None, *extra, config=None):
    args = [command, "--out", str(tmp_path / "out")]
    if text is not None:
        cfg = tmp_path / "exp.ini"
        cfg.write_text(text)
        args += ["--config", str(cfg)]
    elif config is not None:
        args += ["--config", str(config)]
    return main(args + list(extra)), tmp_path / "out"


def values(report: Path) -> dict:
    out = {}
    for line in report.read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def test_eigen_age(tmp_path):
    code, out = run(tmp_path, "eigen", AGE)
    assert code == 0
    v = values(out / "report.txt")
    assert float(v["euler_lotka_lambda"]) == pytest.approx(1.0, abs=1e-12)
    # first-order scheme: the eigenvalue sits about one cell below the root
    assert abs(float(v["lambda"]) - 1.0) <= 2.0 * 20.0 / 2000
    data = np.loadtxt(out / "eigen.csv", delimiter=",", skiprows=2)
    assert data.shape == (2001, 3)


def test_eigen_mitosis(tmp_path):
    code, out = run(tmp_path, "eigen", MITOSIS)
    assert code == 0
    assert abs(float(values(out / "report.txt")["lambda"]) - 1.0) <= 2e-2


def test_missing_field_names_it(tmp_path, capsys):
    code, _ = run(tmp_path, "eigen", "[model]\nkind = mitosis\noffspring = mitosis\n")
    assert code == 1
    assert "model.rate" in capsys.readouterr().err


def test_unknown_key_and_missing_config(tmp_path, capsys):
    code, _ = run(tmp_path, "eigen", AGE + "colour = blue\n")
    assert code == 1 and "grid.colour" in capsys.readouterr().err
    assert main(["eigen", "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("text,field", [
    ("[model]\nkind = mitosis\nrate = constant\nK0 = 1\noffspring = mitosis\n[grid]\nN = 1024\n",
     "grid.N"),
    ("[model]\nkind = soup\n", "model.kind"),
    ("[model]\nkind = matrix\nmatrix = 1, 2; 3\n", "model.matrix"),
    ("[model]\nkind = self_similar\ngamma = 1\noffspring = uniform\n[run]\ndt = -1\n", "run.dt"),
    ("[model]\nkind = age_structured\nrate = exponential\nc = 0.5\n", "model"),
])
def test_config_errors(text, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(text)


def test_config_defaults():
    cfg = parse_config("[model]\nkind = self_similar\ngamma = 1\noffspring = uniform\n")
    assert (cfg.L, cfg.N, cfg.T, cfg.dt, cfg.seeds) == (10.0, 513, 10.0, 0.01, (0, 1, 2))
    assert cfg.grid().N == 513


def test_evolve_self_similar(tmp_path):
    code, out = run(tmp_path, "evolve", SELF_SIMILAR)
    assert code == 0
    v = values(out / "report.txt")
    assert float(v["seed0.mass_drift_per_unit_time"]) <= 1e-6
    header = (out / "trajectory.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["seed", "t"] and "moment1" in header


def test_evolve_mitosis_weak_norm(tmp_path):
    code, out = run(tmp_path, "evolve", MITOSIS)
    assert code == 0
    assert float(values(out / "report.txt")["seed0.weak_norm_slope"]) <= -1.0 + 0.1


def test_explicit_cfl_violation(tmp_path, capsys):
    text = SELF_SIMILAR.replace("dt = 0.01", "dt = 0.5\nscheme = explicit_euler")
    code, _ = run(tmp_path, "evolve", text)
    assert code == 2
    assert "CFLError" in capsys.readouterr().err


def test_gap_commands(tmp_path):
    code, out = run(tmp_path, "gap", config=CONFIGS / "synthetic.ini")
    assert code == 0
    assert float(values(out / "report.txt")["a_ss"]) == pytest.approx(-2.0, abs=1e-3)
    code, out = run(tmp_path, "gap", SELF_SIMILAR)
    assert code == 0
    assert float(values(out / "report.txt")["a_ss"]) < 0.0


@pytest.mark.parametrize("init", ["equilibrium", "scaled"])
def test_gre_equilibria(tmp_path, init):
    text = SELF_SIMILAR.replace("T = 3", "T = 0.5") + f"[gre]\ninit = {init}\nfactor = 2\n"
    code, out = run(tmp_path, "gre", text)
    assert code == 0
    assert float(values(out / "report.txt")["residual"]) <= 1e-10


def test_gre_rejects_matrix(tmp_path):
    code, _ = run(tmp_path, "gre", config=CONFIGS / "synthetic.ini")
    assert code == 1


def test_matrixlab_suites(tmp_path):
    code, out = run(tmp_path, "matrixlab")
    assert code == 0
    rows = (out / "matrixlab.csv").read_text().splitlines()
    assert rows[0] == "case,value,tol,pass" and all(r.endswith(",1") for r in rows[1:])
    code, _ = run(tmp_path, "matrixlab", "[model]\nkind = matrix\nmatrix = 1\n"
                  "[matrixlab]\nsuite = random\ncount = 5\n")
    assert code == 0
    code, _ = run(tmp_path, "matrixlab", "[model]\nkind = matrix\nmatrix = 1\n"
                  "[matrixlab]\nsuite = contour\n")
    assert code == 2


def test_determinism_and_env_override(tmp_path, monkeypatch):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(SELF_SIMILAR.replace("T = 3", "T = 0.5"))
    outs = []
    for name in ("a", "b"):
        monkeypatch.setenv("GFSPEC_OUT", str(tmp_path / name))
        assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "ignored"),
                     "--seed", "7"]) == 0
        outs.append((tmp_path / name / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1]
    assert not (tmp_path / "ignored").exists()
    rows = outs[0].decode().splitlines()[1:]
    assert {r.split(",")[0] for r in rows} == {"7"}


def test_dump_states(tmp_path):
    code, out = run(tmp_path, "evolve", SELF_SIMILAR.replace("T = 3", "T = 0.1"), "--dump-states")
    assert code == 0
    assert np.loadtxt(out / "states_seed0.csv", delimiter=",").shape == (11, 258)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gfspec", "matrixlab", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "check dunford_diag: PASS" in proc.stdout
