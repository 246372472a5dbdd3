import json

import numpy as np
import pytest

from multibump.cli import main


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def test_profile_constants(tmp_path, capsys):
    assert main(["profile", "--out", str(tmp_path)]) == 0
    doc = _load(tmp_path / "profile_constants.json")
    assert doc["schema"] == "multibump.profile-constants/1"
    assert doc["C_p"] == pytest.approx(72.0, rel=1e-6)
    assert doc["lambda1_numeric"] == pytest.approx(1.25, abs=1e-6)
    assert _load(tmp_path / "manifest_profile.json")["status"] == "ok"
    assert "C_p" in json.loads(capsys.readouterr().out)


def test_profile_samples(tmp_path):
    assert main(["profile", "--emit", "samples", "--xmax", "5", "--h", "0.5", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "profile_samples.csv").read_text().splitlines()
    assert lines[0] == "# schema: multibump.profile-samples/1"
    assert lines[2] == "x,w,wp,wpp,Z"
    data = np.loadtxt(tmp_path / "profile_samples.csv", delimiter=",", comments="#", skiprows=3)
    assert data.shape == (21, 5)
    assert data[10, 1] == pytest.approx(1.5)


def test_malformed_alphas_names_field(tmp_path, capsys):
    code = main(["residual-sweep", "--alphas", "0.1,zz", "--out", str(tmp_path)])
    assert code == 2
    assert "alphas" in capsys.readouterr().err


def test_alpha_out_of_range(tmp_path, capsys):
    assert main(["solve", "--alpha", "1.5", "--out", str(tmp_path)]) == 2
    assert "alpha" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["profile", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"p": 2.0, "emit": "samples", "xmax": 3.0, "h": 1.0}))
    assert main(["profile", "--config", str(cfg), "--p", "3", "--out", str(tmp_path)]) == 0
    params = _load(tmp_path / "manifest_profile.json")["parameters"]
    assert params["p"] == 3.0 and params["xmax"] == 3.0
    data = np.loadtxt(tmp_path / "profile_samples.csv", delimiter=",", comments="#", skiprows=3)
    # p = 3 peak height is sqrt(2)
    assert data[3, 1] == pytest.approx(np.sqrt(2.0))


def test_toda_trajectory_csv(tmp_path):
    assert main(["toda", "--k", "3", "--emit", "trajectory",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "toda_trajectory.csv").read_text().splitlines()
    assert lines[2] == "z,f_1,f_2,f_3,fp_1,fp_2,fp_3"
    data = np.loadtxt(tmp_path / "toda_trajectory.csv", delimiter=",", comments="#", skiprows=3)
    assert np.max(np.abs(data[:, 2])) < 1e-12
    assert _load(tmp_path / "toda_asymptotics.json")["k"] == 3


def test_toda_wrong_position_count(tmp_path):
    assert main(["toda", "--k", "2", "--a", "1,2,3", "--zmax", "5", "--out", str(tmp_path)]) in (1, 2)


def test_solve_single_bump(tmp_path):
    code = main(["solve", "--k", "1", "--alpha", "0.2", "--hx", "0.2", "--hz", "0.2",
                 "--out", str(tmp_path)])
    assert code == 0
    rep = _load(tmp_path / "solve_report.json")
    assert rep["iterations"] == 1 and rep["positive"]


def test_solve_failure_exit_one(tmp_path):
    code = main(["solve", "--alpha", "0.15", "--hx", "0.2", "--hz", "0.2", "--out", str(tmp_path)])
    assert code == 1
    man = _load(tmp_path / "manifest_solve.json")
    assert man["status"] == "failed" and man["error"]["type"] == "Diverged"


def test_linear_check(tmp_path):
    assert main(["linear-check", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "manifest_linear-check.json").exists()
