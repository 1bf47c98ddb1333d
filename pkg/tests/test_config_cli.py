import json
import os
from pathlib import Path

import pytest

from critwave.cli import dispatch, main
from critwave.config import (
    ConstraintViolation,
    TypeMismatch,
    UnknownKey,
    parse_config,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
[damping]
a0 = 1
alpha = -1
beta = 0
[problem]
dim = 1
p = 1.5
epsilon = 0.1
"""


def test_defaults_and_round_trip():
    cfg = parse_config(MINIMAL)
    assert cfg["grid.dr"] == 0.0078125
    assert cfg["controls.sweep_eps"] == (0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625)
    again = parse_config(cfg.emit())
    assert again == cfg and again.emit() == cfg.emit() and again.sha256() == cfg.sha256()


def test_float_round_trip_exact():
    cfg = parse_config(MINIMAL.replace("epsilon = 0.1", "epsilon = 0.30000000000000004"))
    assert parse_config(cfg.emit())["problem.epsilon"] == 0.30000000000000004


def test_unknown_key_and_section():
    with pytest.raises(UnknownKey) as exc:
        parse_config(MINIMAL + "bogus = 1\n")
    assert exc.value.key == "problem.bogus"
    with pytest.raises(UnknownKey):
        parse_config(MINIMAL + "[extra]\nx = 1\n")


def test_type_mismatch():
    with pytest.raises(TypeMismatch) as exc:
        parse_config(MINIMAL.replace("dim = 1", "dim = one"))
    assert exc.value.key == "problem.dim"
    with pytest.raises(TypeMismatch):
        parse_config(MINIMAL.replace("a0 = 1", "a0 = nan"))


def test_constraints():
    with pytest.raises(ConstraintViolation):
        parse_config(MINIMAL.replace("a0 = 1", "a0 = -1"))
    with pytest.raises(ConstraintViolation):
        parse_config(MINIMAL.replace("[damping]\na0 = 1\n", "[damping]\n"))
    with pytest.raises(ConstraintViolation) as exc:
        parse_config(MINIMAL.replace("alpha = -1", "alpha = 0.5"), "sweep")
    assert exc.value.key == "damping.alpha"
    with pytest.raises(ConstraintViolation) as exc:
        parse_config(MINIMAL.replace("p = 1.5", "p = 3"), "sweep")
    assert exc.value.key == "problem.p"
    # simulate accepts supercritical p and nonnegative alpha
    parse_config(MINIMAL.replace("p = 1.5", "p = 3"), "simulate")


def test_with_value_revalidates():
    cfg = parse_config(MINIMAL)
    assert cfg.with_value("controls.t_max", "5")["controls.t_max"] == 5.0
    with pytest.raises(ConstraintViolation):
        cfg.with_value("controls.cfl", "0.95")


def test_pc_output(capsys):
    assert main(["pc", "--dim", "3", "--alpha", "-1", "--p", "1.2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p_c"] == 1.5 and out["regime"] == "subcritical"
    assert main(["pc", "--dim", "1", "--alpha", "2"]) == 2


def test_missing_output_dir(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    missing = tmp_path / "nope"
    assert main(["verify-weight", str(cfg), "--output-dir", str(missing)]) == 2
    assert not missing.exists()
    assert main(["verify-weight", str(cfg)]) == 2
    assert sorted(os.listdir(tmp_path)) == ["c.ini"]


def test_invalid_config_exit_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL.replace("alpha = -1", "alpha = 0.5"))
    assert main(["sweep", str(cfg), "--output-dir", str(tmp_path)]) == 2
    assert main(["simulate", str(cfg), "--set", "controls.nothing=1", "--output-dir", str(tmp_path)]) == 2


def test_numerical_failure_writes_diagnostic(tmp_path):
    cfg = parse_config(MINIMAL + "[grid]\nverify_r_max = 3\nverify_n_r = 64\nverify_n_t = 8\n")
    assert dispatch("verify-weight", cfg, str(tmp_path)) == 3
    diag = json.loads((tmp_path / "diagnostic.json").read_text())
    assert diag["error"] == "NumericalFailure"


def read_dir(d):
    return {name: (d / name).read_bytes() for name in sorted(os.listdir(d))}


def test_simulate_artifacts_deterministic(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL.replace("epsilon = 0.1", "epsilon = 0.5") + "[controls]\nt_max = 5\n")
    out = tmp_path / "out"
    out.mkdir()
    args = ["simulate", str(cfg), "--output-dir", str(out), "--set", "grid.dr=0.03125"]
    assert main(args) == 0
    first = read_dir(out)
    for f in out.iterdir():
        f.unlink()
    assert main(args) == 0
    assert read_dir(out) == first
    assert set(first) == {"timeseries.csv", "run.json", "config.ini", "manifest.json"}
    header = first["timeseries.csv"].decode().splitlines()[0]
    assert header.endswith("E_w,V_w,M_beta")
    manifest = json.loads(first["manifest.json"])
    reparsed = parse_config(first["config.ini"].decode())
    assert reparsed.sha256() == manifest["config_sha256"]
    assert reparsed["grid.dr"] == 0.03125


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_shipped_configs_parse(name):
    parse_config((CONFIGS / name).read_text())
