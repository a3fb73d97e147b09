import hashlib

import numpy as np
import pytest

from softcam import cli, regression


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen-data", "--profile", "ci", "--n", 80, "--n-test", 20, "--out", d) == 0
    return d


def test_gen_data_layout_and_hash(workdir, tmp_path, capsys):
    assert len((workdir / "train" / "index.csv").read_text().splitlines()) == 81
    assert (workdir / "train" / "meta.txt").read_text().count("width=160") == 1
    assert "n=80" in (workdir / "config.txt").read_text()
    capsys.readouterr()
    run("gen-data", "--profile", "ci", "--n", 80, "--n-test", 20, "--out", tmp_path)
    out1 = capsys.readouterr().out
    run("gen-data", "--profile", "ci", "--n", 80, "--n-test", 20, "--out", tmp_path / "again")
    assert capsys.readouterr().out.replace(str(tmp_path / "again"), str(tmp_path)) == out1


def test_train_eval(workdir, capsys):
    assert run("train", "--data", workdir / "train", "--out", workdir, "--fixed", "0.5,10,0.01") == 0
    assert "training" in capsys.readouterr().out
    assert run("eval", "--model", workdir / "model.txt", "--data", workdir / "test", "--out", workdir,
               "--residuals") == 0
    rows = (workdir / "rmse.csv").read_text().splitlines()
    assert rows[0] == "axis,rmse_mm,n" and len(rows) == 4
    res = np.loadtxt(workdir / "residuals.csv", delimiter=",", skiprows=1)
    rmse = np.sqrt((res[:, 1:] ** 2).mean(axis=0))
    assert np.allclose(rmse, [float(r.split(",")[1]) for r in rows[1:]])


def test_train_table1_default(workdir, tmp_path, capsys):
    assert run("train", "--data", workdir / "train", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "x: epsilon=0.96 K=112.5 gamma=0.06" in out and "z: epsilon=1 K=189 gamma=0.005" in out


def test_single_point_grid_equals_fixed(workdir, tmp_path):
    assert run("train", "--data", workdir / "train", "--out", tmp_path / "g", "--grid",
               "--grid-epsilon", "0.5", "--grid-k", "10", "--grid-gamma", "0.01") == 0
    assert run("train", "--data", workdir / "train", "--out", tmp_path / "f", "--fixed", "0.5,10,0.01") == 0
    assert (tmp_path / "g" / "model.txt").read_bytes() == (tmp_path / "f" / "model.txt").read_bytes()
    assert (tmp_path / "g" / "cv_report.csv").exists()


def test_bench(workdir, capsys):
    run("train", "--data", workdir / "train", "--out", workdir, "--fixed", "0.5,10,0.01")
    assert run("bench", "--model", workdir / "model.txt", "--out", workdir, "--frames", 30, "--axes", "z") == 0
    assert "Hz" in capsys.readouterr().out
    head = (workdir / "bench.csv").read_text().splitlines()[0]
    assert "p95_ms" in head and "p99_ms" in head and "rate_hz" in head


def test_tof_baseline(tmp_path, capsys):
    assert run("tof-baseline", "--out", tmp_path, "--noise-sigma", 0) == 0
    rows = dict(r.split(",") for r in (tmp_path / "tof_baseline.csv").read_text().splitlines()[1:])
    assert set(rows) == {"undisturbed", "disturbed"}
    assert float(rows["undisturbed"]) < 1e-6 < float(rows["disturbed"])


def test_simulate_perfect_sensing(tmp_path):
    assert run("simulate", "--perfect-sensing", "--levels", "30,40", "--step-s", 1, "--out", tmp_path) == 0
    data = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 2], data[:, 3])
    first = hashlib.sha256((tmp_path / "trajectory.csv").read_bytes()).hexdigest()
    run("simulate", "--perfect-sensing", "--levels", "30,40", "--step-s", 1, "--out", tmp_path)
    assert hashlib.sha256((tmp_path / "trajectory.csv").read_bytes()).hexdigest() == first


def test_config_file_and_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("noise_sigma=0\nduration=20\nsplit_time=10\n")
    assert run("tof-baseline", "--config", cfg, "--out", tmp_path) == 0
    assert "duration=20.0" in (tmp_path / "config.txt").read_text()
    cfg.write_text("bogus=1\n")
    capsys.readouterr()
    assert run("tof-baseline", "--config", cfg, "--out", tmp_path) == 1
    err = capsys.readouterr().err
    assert "bogus" in err and err.count("\n") == 1


def test_errors_are_one_line(tmp_path, capsys):
    assert run("eval", "--model", tmp_path / "missing.txt", "--out", tmp_path) == 1
    assert run("train", "--data", tmp_path / "nodata", "--out", tmp_path) == 1
    assert run("gen-data", "--n", "abc", "--out", tmp_path) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 3 and all(line.startswith("softcam ") for line in err)


def test_eval_dimension_mismatch(workdir, tmp_path, capsys):
    run("train", "--data", workdir / "train", "--out", workdir, "--fixed", "0.5,10,0.01")
    run("gen-data", "--n", 3, "--n-test", 0, "--width", 64, "--height", 48, "--out", tmp_path)
    assert run("eval", "--model", workdir / "model.txt", "--data", tmp_path / "train", "--out", tmp_path) == 1
    assert "expects" in capsys.readouterr().err
