import json

import numpy as np
import pytest

from koopsub.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, EXIT_RANK, main
from koopsub.koopman import KoopmanModel


@pytest.fixture
def snapshots(tmp_path):
    path = tmp_path / "hopf.csv"
    assert main(["simulate", "--system", "hopf", "--n", "1500", "--seed", "2", "-o", str(path)]) == EXIT_OK
    return path


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def test_simulate(snapshots):
    lines = snapshots.read_text().splitlines()
    assert lines[0].startswith("# snapshots v1; system=hopf")
    assert len(lines) == 1501
    assert len(lines[1].split(",")) == 4


def test_simulate_consensus_trajectories(tmp_path):
    path = tmp_path / "c.csv"
    assert main(["simulate", "--system", "consensus", "--n", "40", "--traj-len", "3", "-o", str(path)]) == EXIT_OK
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (40, 10)


@pytest.mark.parametrize("method", ["edmd", "ssd", "tssd"])
def test_fit_writes_artifacts(tmp_path, snapshots, method, capsys):
    prefix = str(tmp_path / method)
    argv = ["fit", "--data", str(snapshots), "--method", method, "--degree", "4", "-o", prefix]
    if method == "tssd":
        argv += ["--epsilon", "0.05"]
    assert main(argv) == EXIT_OK
    basis = _load(prefix + ".basis.json")
    assert basis["format"] == "koopsub.basis"
    assert basis["config"]["degree"] == 4
    model = KoopmanModel.from_dict(_load(prefix + ".model.json"))
    assert model.size == basis["dim"]
    if method == "edmd":
        assert basis["dim"] == 15
    else:
        assert _load(prefix + ".trace.json")["method"] == method
    assert "rrmse_max" in capsys.readouterr().out


def test_fit_full_at_one(tmp_path, snapshots):
    prefix = str(tmp_path / "m")
    assert main(["fit", "--data", str(snapshots), "--degree", "4", "--epsilon", "1", "-o", prefix]) == EXIT_OK
    assert _load(prefix + ".basis.json")["dim"] == 15


def test_fit_zero_epsilon_notice(tmp_path, snapshots, capsys):
    base = ["fit", "--data", str(snapshots), "--degree", "4"]
    assert main(base + ["--epsilon", "0", "-o", str(tmp_path / "t")]) == EXIT_OK
    assert "replaced by 1e-12" in capsys.readouterr().err
    assert main(base + ["--method", "ssd", "-o", str(tmp_path / "s")]) == EXIT_OK
    assert _load(tmp_path / "t.basis.json")["dim"] == _load(tmp_path / "s.basis.json")["dim"]


def test_fit_tssd_needs_epsilon(tmp_path, snapshots):
    assert main(["fit", "--data", str(snapshots), "-o", str(tmp_path / "m")]) == EXIT_CONFIG


def test_eval_and_exports(tmp_path, snapshots, capsys):
    prefix = str(tmp_path / "m")
    assert main(["fit", "--data", str(snapshots), "--degree", "4", "--epsilon", "0.05", "-o", prefix]) == EXIT_OK
    test = tmp_path / "test.csv"
    assert main(["simulate", "--system", "hopf", "--n", "500", "--seed", "3", "-o", str(test)]) == EXIT_OK
    out = tmp_path / "eval.json"
    assert main(["eval", "--model", prefix + ".model.json", "--test", str(test), "-o", str(out)]) == EXIT_OK
    result = _load(out)
    assert result["n_test"] == 500
    assert 0 <= result["rrmse_max"] <= 1

    eig = tmp_path / "eig.csv"
    assert main(["eigfun", "--model", prefix + ".model.json", "--grid", "11", "-o", str(eig)]) == EXIT_OK
    lines = eig.read_text().splitlines()
    assert lines[1] == "x1,x2,abs,phase"
    assert len(lines) == 2 + 121

    heat = tmp_path / "heat.csv"
    assert main(["heatmap", "--model", prefix + ".model.json", "--grid", "9", "-o", str(heat)]) == EXIT_OK
    values = np.loadtxt(heat, delimiter=",", skiprows=2)
    assert values.shape == (81, 3)
    assert np.all(values[:, 0] >= -2) and np.all(values[:, 0] <= 2)


def test_sweep_and_config_round_trip(tmp_path, capsys):
    prefix = str(tmp_path / "sw")
    saved = tmp_path / "sweep.cfg.json"
    argv = ["sweep", "--system", "hopf", "--epsilons", "0.01,0.1,1", "--degree", "4", "--n", "1000",
            "-o", prefix, "--save-config", str(saved)]
    assert main(argv) == EXIT_OK
    first_csv = open(prefix + ".csv").read()
    first_json = open(prefix + ".json").read()
    rows = _load(prefix + ".json")["rows"]
    assert [r["epsilon"] for r in rows] == [0.01, 0.1, 1.0]
    assert rows[-1]["dim"] == 15
    assert _load(saved)["command"] == "sweep"

    assert main(["sweep", "--config", str(saved)]) == EXIT_OK
    assert open(prefix + ".csv").read() == first_csv
    assert open(prefix + ".json").read() == first_json

    # explicit flags override the file
    other = str(tmp_path / "other")
    assert main(["sweep", "--config", str(saved), "-o", other, "--epsilons", "0.5"]) == EXIT_OK
    assert [r["epsilon"] for r in _load(other + ".json")["rows"]] == [0.5]


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"command": "sweep", "bogus": 1}))
    assert main(["sweep", "--config", str(bad)]) == EXIT_CONFIG
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"command": "fit"}))
    assert main(["sweep", "--config", str(wrong)]) == EXIT_CONFIG
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unknown_system(tmp_path):
    assert main(["simulate", "--system", "lorenz", "-o", str(tmp_path / "x.csv")]) == EXIT_CONFIG


def test_negative_consensus_box(tmp_path, capsys):
    code = main(["simulate", "--system", "consensus", "--domain=-1:5", "--n", "100", "-o", str(tmp_path / "x.csv")])
    assert code == EXIT_DOMAIN
    assert "domain error" in capsys.readouterr().err


def test_rank_deficient_fit(tmp_path):
    path = tmp_path / "few.csv"
    assert main(["simulate", "--system", "hopf", "--n", "10", "-o", str(path)]) == EXIT_OK
    assert main(["fit", "--data", str(path), "--degree", "6", "--method", "ssd", "-o", str(tmp_path / "m")]) == EXIT_RANK


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["fit"])
    assert info.value.code == 2
