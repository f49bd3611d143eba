import json

import numpy as np
import pytest

from kstriple.cli import main, parse_config
from kstriple.errors import ConfigInvalid


def _cfg(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_config_types_and_comments():
    cfg = parse_config("# comment\nm0 = 1\nm1 = 2 # trailing\nm2=0.5\nalphas = 0.02, 0.01 0.005\n",
                       "verify")
    assert cfg["m1"] == 2.0 and cfg["alphas"] == [0.02, 0.01, 0.005]
    assert cfg["nodes"] == 128


@pytest.mark.parametrize("text", ["bogus = 1\n", "m0 = 1\nm1 = 1\n", "m0 = x\nm1 = 1\nm2 = 1\n",
                                  "no equals sign\n", "nodes = 1\nnodes = 2\n",
                                  "m0 = -1\nm1 = 1\nm2 = 1\n"])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigInvalid):
        parse_config(text, "verify")


def test_verify_default_passes(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["all_passed"]
    assert {c["name"] for c in rep["checks"]} >= {"torsion_limit", "morse_hessian", "nu_quad2_spot",
                                                  "quadrupolar_average", "elimination_scaling"}


def test_verify_fault_injection_targets_torsion(tmp_path):
    assert main(["verify", "--config", _cfg(tmp_path, "torsion_fault = 0.01\n"),
                 "--out", str(tmp_path)]) == 1
    rep = json.loads((tmp_path / "verify.json").read_text())
    failed = [c["name"] for c in rep["checks"] if not c["passed"]]
    assert failed == ["torsion_limit"]


def test_verify_missing_mass(tmp_path):
    assert main(["verify", "--config", _cfg(tmp_path, "m0 = 1\nm1 = 1\n")]) == 2


def test_simulate_deterministic(tmp_path):
    cfg = _cfg(tmp_path, "periods = 3\n")
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    lines = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()
    assert lines[1].startswith("fict_time,time")
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert "near_collisions" in summary


def test_simulate_lunar_near_degenerate_events(tmp_path):
    cfg = _cfg(tmp_path, "m0 = 1\nm1 = 1\nm2 = 10\ne1 = 0.999\ng1 = 0\ne2 = 0.2\n"
                         "a2 = 20\nperiods = 5\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "events.csv").read_text().splitlines()) > 2


def test_simulate_hyperbolic_outer(tmp_path):
    cfg = _cfg(tmp_path, "Q1 = 1 0 0\nP1 = 0 0.5 0\nQ2 = 20 0 0\nP2 = 0 5 0\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_portrait_cover(tmp_path):
    assert main(["portrait", "--config", _cfg(tmp_path, "n_orbits = 2\n"), "--out", str(tmp_path)]) == 0
    eq = (tmp_path / "portrait_equilibria.csv").read_text().splitlines()[2:]
    minima = [r.split(",") for r in eq if ",minimum," in r]
    assert sorted(float(r[1]) for r in minima) == [0.0, np.pi]
    assert all(float(r[3]) > 0 for r in minima)
    summ = (tmp_path / "portrait_summary.csv").read_text().splitlines()[2:]
    assert len(summ) == 4
    assert json.loads((tmp_path / "portrait.json").read_text())["separatrix_g0"] > 0


def test_portrait_off_cover_circles_boundary(tmp_path):
    cfg = _cfg(tmp_path, "C = 0.85\nn_orbits = 2\n")
    assert main(["portrait", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = [r.split(",") for r in (tmp_path / "portrait_summary.csv").read_text().splitlines()[2:]]
    assert all(abs(int(r[8])) == 1 and float(r[6]) < 1e-8 for r in rows)


def test_portrait_rerun_identical(tmp_path):
    cfg = _cfg(tmp_path, "n_orbits = 1\n")
    for d in ("a", "b"):
        main(["portrait", "--config", cfg, "--out", str(tmp_path / d)])
    for name in ("portrait_orbits.csv", "portrait_summary.csv", "portrait_equilibria.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_portrait_empty_grid(tmp_path):
    assert main(["portrait", "--config", _cfg(tmp_path, "n_orbits = 0\n")]) == 2


def test_average(tmp_path):
    assert main(["average", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "average.json").read_text())
    assert res["c2_rel_err"] < 1e-6


def test_torsion_table(tmp_path):
    cfg = _cfg(tmp_path, "alphas = 0.5 1 2\nbetas = 1 2\n")
    assert main(["torsion", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = [r.split(",") for r in (tmp_path / "torsion.csv").read_text().splitlines()[2:]]
    diag = [r for r in rows if r[0] == r[1]]
    assert {float(r[1]) for r in diag} == {1.0, 2.0}
    for r in diag:
        assert r[4] == "limit" and float(r[5]) == 1125 / (2 * float(r[1]) ** 8)
    assert all(r[4] == "agree" for r in rows if r[0] != r[1])


def test_torsion_negative_beta(tmp_path):
    assert main(["torsion", "--config", _cfg(tmp_path, "betas = -1\n")]) == 2


def test_nonphysical_average_exit_code(tmp_path):
    cfg = _cfg(tmp_path, "G1 = 0.1\nC = 3\n")
    assert main(["average", "--config", cfg, "--out", str(tmp_path)]) == 3
