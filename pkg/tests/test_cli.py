import json
import subprocess
import sys

import pytest

from ivpolicy.cli import build_parser, main


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        'seed = 2\n'
        '[data]\nn = 600\n'
        '[mte]\nkind = "polynomial"\nJ = 2\n'
        '[cost]\nkappa = 0.4\n'
        '[grid]\npoints = 5\n'
        '[montecarlo]\nsizes = [40, 80]\nreplications = 2\neval_draws = 5000\ndirections = 12\n'
        'learners = ["fewm", "bewm"]\n'
        '[[pairs]]\nlabel = "scale"\nalpha0 = {kind = "identity"}\nalpha1 = {kind = "scale", value = 0.75}\n')
    return path


def test_subcommands_exist():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == {"simulate", "fit", "learn", "evaluate", "montecarlo"}


def test_simulate_fit_learn_evaluate(tmp_path, small_config, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(small_config), "--out", str(out), "--no-latent"]) == 0
    data = out / "data.csv"
    assert data.read_text().splitlines()[0] == "y,d,x1,x2,z1,z2"
    assert main(["fit", "--config", str(small_config), "--data", str(data), "--out", str(out)]) == 0
    assert json.loads((out / "mte.json").read_text())["kind"] == "polynomial"
    assert (out / "mte_grid.csv").exists() and (out / "propensity.json").exists()
    assert main(["learn", "--config", str(small_config), "--out", str(out), "--seed", "4"]) == 0
    policy = out / "policy_scale_bewm.json"
    assert policy.exists()
    assert main(["evaluate", "--config", str(small_config), "--out", str(out), "--policy", str(policy),
                 "--draws", "20000"]) == 0
    oracle = json.loads((out / "evaluation.json").read_text())["oracle"]
    assert oracle["draws"] == 20000
    assert main(["evaluate", "--config", str(small_config), "--data", str(data), "--out", str(out),
                 "--policy", str(policy)]) == 0
    assert "empirical" in json.loads((out / "evaluation.json").read_text())
    assert json.loads((out / "config.json").read_text())["seed"] == 4
    assert "share=" in capsys.readouterr().out


def test_montecarlo_command(tmp_path, small_config):
    out = tmp_path / "mc"
    assert main(["montecarlo", "--config", str(small_config), "--out", str(out)]) == 0
    lines = (out / "regret.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and lines[1].startswith("learner,n,mean_regret")
    assert len(lines) == 2 + 2 * 2


def test_configuration_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[policy]\nclass_kind = "forest"\n')
    assert main(["learn", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_data_file_exits_2(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path, small_config):
    res = subprocess.run([sys.executable, "-m", "ivpolicy", "simulate", "--config", str(small_config),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and "wrote 600 rows" in res.stdout
