import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from apcauchy.cli import DEFAULTS, run
from apcauchy.serialize import read_grid_csv

GOLDEN = Path(__file__).parent / "golden"

# small configs keep the end-to-end pass quick; each maps to its expected exit code
CASES = {
    "ap-test": ({"forcing": "sin", "tau_max": 30.0}, 0),
    "stepanov": ({}, 0),
    "compose": ({"window": [0.0, 45.0, 0.01], "tau_max": 20.0}, 0),
    "conv": ({"window": [0.0, 5.0, 0.05]}, 0),
    "certify": ({}, 0),
    "solve-ap": ({}, 0),
    "solve-dfp": ({"u0": [2.0], "window": [0.0, 40.0, 0.05]}, 0),
    "mn": ({}, 0),
    "heat-demo": ({"n": 16, "t_end": 10.0}, 0),
}


def invoke(tmp_path, command, cfg=None, *extra):
    out = tmp_path / command
    args = [command, "--out", str(out), *extra]
    if cfg is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(cfg))
        args += ["--config", str(path)]
    return run(args), out


class TestExitCodes:
    @pytest.mark.parametrize("command", sorted(CASES))
    def test_every_subcommand_passes(self, tmp_path, command):
        cfg, code = CASES[command]
        status, out = invoke(tmp_path, command, cfg)
        assert status == code
        assert any(out.iterdir())

    def test_unknown_subcommand(self, capsys):
        assert run(["bogus"]) == 1

    def test_missing_subcommand(self):
        assert run([]) == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        status, _ = invoke(tmp_path, "mn", {"colour": 1})
        assert status == 1
        assert "colour" in capsys.readouterr().err

    def test_malformed_field(self, tmp_path, capsys):
        status, _ = invoke(tmp_path, "conv", {"window": [0, 1]})
        assert status == 1
        assert "window" in capsys.readouterr().err

    def test_unknown_model(self, tmp_path, capsys):
        status, _ = invoke(tmp_path, "certify", {"model": "nope"})
        assert status == 1 and "model" in capsys.readouterr().err

    def test_flag_that_does_not_apply(self, tmp_path):
        assert invoke(tmp_path, "mn", None, "--eps", "0.1")[0] == 1

    def test_certificate_failure(self, tmp_path):
        assert invoke(tmp_path, "certify", {"model": "scalar-uncertified"})[0] == 2
        assert invoke(tmp_path, "solve-ap", {"model": "scalar-uncertified"})[0] == 2

    def test_block_condition_failure(self, tmp_path):
        assert invoke(tmp_path, "conv", {"p": 2})[0] == 2

    def test_mn_failure(self, tmp_path):
        assert invoke(tmp_path, "mn", {"L": 1.5})[0] == 2

    def test_defaults_are_the_whitelist(self):
        assert set(CASES) == set(DEFAULTS)


class TestArtifacts:
    def test_certify_bundle(self, tmp_path):
        status, out = invoke(tmp_path, "certify")
        doc = json.loads((out / "certificate.json").read_text())
        assert status == 0 and abs(doc["rho"] - 0.396) < 1e-3
        for key in ("q_conj", "M_sum", "lipschitz_scale", "rho", "kret_threshold", "M_n",
                    "weissinger_sum", "verdicts", "rho_zeljezo", "rho_zeljeznica", "notes"):
            assert key in doc

    def test_solve_ap_matches_golden(self, tmp_path):
        status, out = invoke(tmp_path, "solve-ap")
        assert status == 0
        got = read_grid_csv(out / "trajectory.csv")
        ref = read_grid_csv(GOLDEN / "solve_ap_semilinear.csv")
        assert (out / "trajectory.csv").read_text().splitlines()[0] == "t,v0"
        assert np.abs(got.values - ref.values).max() < 1e-6

    def test_byte_identical_reruns(self, tmp_path):
        a = invoke(tmp_path / "a", "solve-ap")[1]
        b = invoke(tmp_path / "b", "solve-ap")[1]
        for name in ("trajectory.csv", "solve.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seeded_monte_carlo_is_deterministic(self, tmp_path):
        cfg = {"method": "montecarlo", "n": 2, "L": 0.3}
        a = invoke(tmp_path / "a", "mn", cfg, "--seed", "7")[1]
        b = invoke(tmp_path / "b", "mn", cfg, "--seed", "7")[1]
        assert (a / "mn.json").read_bytes() == (b / "mn.json").read_bytes()

    def test_periods_csv(self, tmp_path):
        _, out = invoke(tmp_path, "ap-test", {"forcing": "sin", "tau_max": 30.0})
        lines = (out / "periods.csv").read_text().splitlines()
        assert lines[0] == "tau" and len(lines) > 1

    def test_conv_sidecar(self, tmp_path):
        _, out = invoke(tmp_path, "conv", {"kind": "infinite", "window": [0, 5, 0.05],
                                           "kernel": {"M": 1, "c": 1, "beta": 1}})
        side = json.loads((out / "conv.json").read_text())
        assert set(side) == {"tail_bound", "max_quadrature_error"}

    def test_problem_document(self, tmp_path):
        doc = {"family_ref": {"kind": "diagonal", "parameters": {"mu": [-2.0]}},
               "forcing_ref": "cos", "nonlinearity": {"name": "sin", "k": 0.2},
               "window": [0.0, 40.0, 0.05]}
        status, out = invoke(tmp_path, "solve-ap", {"problem": doc})
        assert status == 0 and (out / "trajectory.csv").exists()

    def test_tol_override(self, tmp_path):
        _, out = invoke(tmp_path, "solve-ap", None, "--tol", "1e-6")
        doc = json.loads((out / "solve.json").read_text())
        assert doc["diffs"][-1] < 1e-6 and doc["iterations"] < 13


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "apcauchy", "mn", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == 0
