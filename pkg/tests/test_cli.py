"""Command line entry points, driven in process through main(argv)."""

import json
import shutil
import subprocess

import pytest

from phase12.cli import main
from phase12.models import ToxicityParams, logistic_from_endpoints
from phase12.ocsim import GsArm, ParametricTruth, ScenarioConfig, SimonArm
from phase12.phase1 import Phase1Config
from phase12.seqtest import Thresholds
from phase12.simon import SimonDesign

from phase12.models import EfficacyParams


def scenario_json(tmp_path):
    scen = ScenarioConfig(
        q=1 / 3, x_min=140.0, x_max=425.0,
        truth=ParametricTruth(
            theta=ToxicityParams(-4.1115, 0.0136734),
            psi=EfficacyParams(*logistic_from_endpoints(250.0, 0.5, 425.0, 0.9))),
        phase1=Phase1Config(design="ewoc", m=6, q=1 / 3, x_min=140.0, x_max=425.0),
        arms=(
            SimonArm(name="fixed", design=SimonDesign(5, 5, 1, 3), estimator="mle"),
            GsArm(name="gs", group_sizes=(4, 4),
                  thresholds=Thresholds(b=2.0, b_tilde=2.0, c=0.5, p0=0.1, p1=0.3)),
        ),
        n_reps=10, seed=5)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scen.to_dict()))
    return str(path)


CALIB_RAW = {
    "alpha": 0.2, "beta": 0.3, "p0": 0.2, "q": 1 / 3,
    "x_min": 140.0, "x_max": 425.0, "m": 6, "group_sizes": [6, 6],
    "n_boot": 150, "seed": 0, "p1_override": 0.5, "update_mtd": False,
    "phase1": {
        "design": "ewoc",
        "data": {"doses": [211.25, 250.0, 280.0, 310.0, 340.0, 370.0],
                 "tox": [0, 0, 0, 1, 0, 1], "eff": [0, 1, 0, 1, 1, 1]},
    },
}


class TestSimon:
    def test_table(self, capsys):
        assert main(["simon", "--p0", "0.1", "--p1", "0.3", "--n-max", "50"]) == 0
        out = capsys.readouterr().out
        assert "optimal" in out and "minimax" in out and "EN(p0)" in out

    def test_json_to_file(self, tmp_path):
        out = tmp_path / "simon.json"
        assert main(["simon", "--p0", "0.1", "--p1", "0.3", "--n-max", "50",
                     "--format", "json", "--out", str(out)]) == 0
        d = json.loads(out.read_text())
        assert set(d) == {"optimal", "minimax"}
        assert d["optimal"]["alpha_attained"] <= 0.05

    def test_infeasible_exits_2(self, capsys):
        assert main(["simon", "--p0", "0.1", "--p1", "0.15", "--alpha", "0.01",
                     "--beta", "0.01", "--n-max", "20"]) == 2
        assert "error:" in capsys.readouterr().err


class TestSimulate:
    def test_table_and_overrides(self, tmp_path, capsys):
        cfg = scenario_json(tmp_path)
        assert main(["simulate", "--config", cfg, "--reps", "8", "--seed", "9"]) == 0
        out = capsys.readouterr().out
        assert "fixed" in out and "gs" in out

    def test_json_matches_direct_run(self, tmp_path, capsys):
        cfg = scenario_json(tmp_path)
        assert main(["simulate", "--config", cfg, "--format", "json"]) == 0
        d = json.loads(capsys.readouterr().out)
        assert d["n_reps"] == 10 and d["seed"] == 5

    def test_csv_out(self, tmp_path):
        cfg = scenario_json(tmp_path)
        out = tmp_path / "oc.csv"
        assert main(["simulate", "--config", cfg, "--format", "csv",
                     "--out", str(out)]) == 0
        assert out.read_text().startswith("arm,metric,value\n")

    def test_missing_config_exits_2(self, capsys):
        assert main(["simulate", "--config", "/nonexistent.json"]) == 2
        assert "error:" in capsys.readouterr().err


class TestCalibrate:
    def test_recorded_phase1(self, tmp_path):
        cfg = tmp_path / "calib.json"
        cfg.write_text(json.dumps(CALIB_RAW))
        out = tmp_path / "res.json"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 0
        d = json.loads(out.read_text())
        assert d["thresholds"]["p1"] == 0.5
        assert d["thresholds"]["c"] >= 0.0
        assert d["diagnostics"]["n_boot"] == 150

    def test_simulated_phase1_with_nboot_override(self, tmp_path, capsys):
        raw = dict(CALIB_RAW)
        raw["phase1"] = {"design": "ewoc",
                         "truth": {"theta": [-4.1115, 0.0136734],
                                   "psi": list(logistic_from_endpoints(
                                       250.0, 0.5, 425.0, 0.9)), "seed": 2}}
        cfg = tmp_path / "calib.json"
        cfg.write_text(json.dumps(raw))
        assert main(["calibrate", "--config", str(cfg), "--n-boot", "200"]) == 0
        d = json.loads(capsys.readouterr().out)
        assert d["diagnostics"]["n_boot"] == 200

    def test_wrong_data_length_exits_2(self, tmp_path, capsys):
        raw = json.loads(json.dumps(CALIB_RAW))
        raw["phase1"]["data"]["doses"] = [250.0]
        raw["phase1"]["data"]["tox"] = [0]
        raw["phase1"]["data"]["eff"] = [1]
        cfg = tmp_path / "calib.json"
        cfg.write_text(json.dumps(raw))
        assert main(["calibrate", "--config", str(cfg)]) == 2
        assert "error:" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("phase12") is None,
                    reason="console script not on PATH")
def test_installed_entry_point():
    r = subprocess.run(["phase12", "simon", "--p0", "0.1", "--p1", "0.3",
                        "--n-max", "40", "--format", "json"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0, r.stderr
    assert "optimal" in json.loads(r.stdout)
