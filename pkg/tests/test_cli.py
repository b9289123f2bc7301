from __future__ import annotations

import json

import numpy as np
import pytest

from svarpo.cli import main
from svarpo.io import read_model_json

FAST = ["--max-outer", "2", "--max-inner", "30"]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    spec = out / "spec.json"
    spec.write_text(json.dumps({"p": 6, "s_A": 0.3, "A_bounds": [0.25, 0.9], "s_B1": 0.2,
                                "s_B2": 0.1, "B_bounds": [1.0, 3.0], "noise": "gaussian",
                                "sigma_range": [0.8, 2.0]}))
    assert main(["simulate", "--spec", str(spec), "--n", "80", "--seed", "3",
                 "--out-dir", str(out)]) == 0
    return out


def test_simulate_outputs(sim_dir):
    header = (sim_dir / "data.csv").read_text().splitlines()[0]
    assert len(header.split(",")) == 6
    meta = json.loads((sim_dir / "metadata.json").read_text())
    assert meta["seed"] == 3 and meta["rho"] < 1
    assert read_model_json(sim_dir / "truth.json").p == 6


def test_simulate_builtin_laplace_metadata(tmp_path):
    assert main(["simulate", "--setting", "S3", "--n", "5", "--seed", "1",
                 "--burn-in", "50", "--out-dir", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["noise"]["family"] == "laplace" and meta["setting"] == "S3"


def test_invalid_setting_is_usage_error(tmp_path, capsys):
    assert main(["simulate", "--setting", "S9", "--out-dir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_flag_and_config_key(tmp_path):
    assert main(["simulate", "--bogus"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nope": 1}')
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_missing_data_file_is_runtime_error(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "missing.csv")]) == 1


def test_fit_with_tiers_prior(sim_dir, tmp_path):
    names = (sim_dir / "data.csv").read_text().splitlines()[0].split(",")
    tiers = tmp_path / "tiers.csv"
    tiers.write_text("variable,tier\n" + "".join(f"{v},{1 + (k >= 3)}\n"
                                                 for k, v in enumerate(names)))
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(sim_dir / "data.csv"), "--prior", str(tiers),
                 "--out-dir", str(out)] + FAST) == 0
    A = read_model_json(out / "model.json").A
    # tier-2 variables (3, 4, 5) may not be parents of tier-1 variables (0, 1, 2)
    assert np.all(A[:3, 3:] == 0.0)
    assert (out / "trace.csv").read_text().startswith("outer_iter,inner_iter,lagrangian")
    assert (out / "skeleton.csv").read_text().startswith("child,parent,value")


def test_fit_to_stdout(sim_dir, capsys):
    assert main(["fit", "--data", str(sim_dir / "data.csv"), "--output", "-"] + FAST) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["p"] == 6 and obj["metadata"]["config"]["max_inner"] == 30


def test_config_values_echoed_and_overridden(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mu_A": 0.2, "max_inner": 10, "max_outer": 1}))
    assert main(["fit", "--config", str(cfg), "--data", str(sim_dir / "data.csv"),
                 "--mu-A", "0.07", "--output", "-"]) == 0
    c = json.loads(capsys.readouterr().out)["metadata"]["config"]
    assert c["mu_A"] == 0.07 and c["max_inner"] == 10


def test_evaluate_truth_against_itself(sim_dir, capsys):
    truth = str(sim_dir / "truth.json")
    assert main(["evaluate", "--model", truth, "--truth", truth]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["TP"] == 1.0 and rep["TN"] == 1.0 and rep["B1_TP"] == 1.0


def test_evaluate_holdout(sim_dir, tmp_path, capsys):
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(sim_dir / "data.csv"), "--out-dir", str(out)] + FAST) == 0
    assert main(["evaluate", "--model", str(out / "model.json"),
                 "--holdout", str(sim_dir / "data.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["rel_l2_all"]) == 78 and rep["rel_l2"] > 0
    assert main(["evaluate", "--model", str(out / "model.json")]) == 2


def test_gridsearch_single_cell(sim_dir, capsys):
    assert main(["gridsearch", "--data", str(sim_dir / "data.csv"), "--mu-A-grid", "0.05",
                 "--mu-B-grid", "0.03", "--threads", "1"] + FAST) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["best"]["mu_A"] == 0.05 and rep["best"]["mu_B"] == 0.03


def test_bench_small_deterministic(tmp_path):
    args = ["bench", "--settings", "S1", "--seeds", "2", "--n-list", "40",
            "--burn-in", "100", "--max-outer", "1", "--max-inner", "5", "--threads", "1"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "aggregate.csv").read_bytes()
    assert a == (tmp_path / "b" / "aggregate.csv").read_bytes()
    assert len(list((tmp_path / "a" / "runs").glob("*.json"))) == 2
    assert main(["bench", "--settings", "S7", "--out-dir", str(tmp_path / "c")]) == 2
