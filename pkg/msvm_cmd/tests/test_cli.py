"""Tests for the msvm2 command line."""
import numpy as np
import pytest
import yaml
import msvm_core as core
from msvm_cmd import cli


def write_unit_data(tmp_path):
    path = tmp_path / "unit.csv"
    with open(path, "w") as f:
        f.write("a,1,0,0\nb,0,1,0\nc,0,0,1\n")
    return str(path)


def write_blob_data(tmp_path):
    path = tmp_path / "blobs.txt"
    dataset = core.util.gaussian_blobs(4, 3, spread=0.6, seed=3)
    core.dataset.save_dataset(dataset, path)
    return str(path)


def train_unit_model(tmp_path):
    data = write_unit_data(tmp_path)
    model = str(tmp_path / "model.yaml")
    assert cli.main(["train", "--data", data, "--c", "0.5", "--out", model]) == 0
    return data, model


def test_train(tmp_path, capsys):
    _, model = train_unit_model(tmp_path)
    out = capsys.readouterr().out
    assert "trained on 3 points, 3 categories" in out
    assert "dual objective 1.12" in out
    assert "(converged)" in out

    loaded = core.serialization.load_model(model)
    assert loaded.C == 0.5
    assert loaded.category_map == ("a", "b", "c")


def test_predict(tmp_path, capsys):
    data, model = train_unit_model(tmp_path)
    capsys.readouterr()

    assert cli.main(["predict", "--model", model, "--data", data]) == 0
    assert capsys.readouterr().out == "a\nb\nc\n"

    out = tmp_path / "labels.txt"
    assert cli.main(["predict", "--model", model, "--data", data, "--out", str(out)]) == 0
    with open(out) as f:
        assert f.read() == "a\nb\nc\n"


def test_evaluate(tmp_path, capsys):
    data, model = train_unit_model(tmp_path)
    capsys.readouterr()
    assert cli.main(["evaluate", "--model", model, "--data", data]) == 0
    out = capsys.readouterr().out
    assert "errors   0 (0.0000)" in out


def test_loo(tmp_path, capsys):
    data = write_unit_data(tmp_path)
    assert cli.main(["loo", "--data", data, "--c", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "errors   3" in out
    assert "failed   0" in out


def test_bound_report(tmp_path, capsys):
    _, model = train_unit_model(tmp_path)
    capsys.readouterr()

    reports = []
    for name in ["first.txt", "second.txt"]:
        report = tmp_path / name
        args = ["bound", "--model", model, "--with-loo", "--report", str(report)]
        assert cli.main(args) == 0
        out = capsys.readouterr().out
        assert "bound          144" in out
        assert "loo errors     3" in out
        assert "alpha checks   3/3 satisfied" in out
        with open(report) as f:
            reports.append(f.read().splitlines())

        with open(str(report) + ".yaml") as f:
            mirror = yaml.safe_load(f)
        assert mirror["loo_errors"] == 3

    # identical after the timestamp line
    assert reports[0][1:] == reports[1][1:]
    assert reports[0][0].startswith("# msvm2 report generated")


def test_select(tmp_path, capsys):
    data = write_blob_data(tmp_path)
    report = tmp_path / "select.txt"
    args = [
        "select",
        "--data",
        data,
        "--kernel-family",
        "rbf",
        "--c-grid",
        "0.1:10:3",
        "--param-grid",
        "gamma=0.2;gamma=2",
        "--with-loo",
        "--report",
        str(report),
    ]
    assert cli.main(args) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 3 + 6
    assert sum(line.startswith("*") for line in out) == 1

    with open(str(report) + ".yaml") as f:
        mirror = yaml.safe_load(f)
    assert len(mirror["grid"]) == 6
    bounds = [g["bound"] for g in mirror["grid"]]
    assert mirror["grid"][mirror["best"]]["bound"] == min(bounds)


def test_config_file(tmp_path, capsys):
    data = write_unit_data(tmp_path)
    config = tmp_path / "config.yaml"
    with open(config, "w") as f:
        yaml.safe_dump({"solver": {"max_iter": 0}}, f)
    args = ["train", "--data", data, "--c", "0.5", "--out", str(tmp_path / "m.yaml")]

    # the iteration limit from the config file stops the solver
    assert cli.main(args + ["--config", str(config)]) == 2
    assert "numerical failure" in capsys.readouterr().err

    # explicit flags take precedence
    assert cli.main(args + ["--config", str(config), "--max-iter", "1000"]) == 0


def test_log(tmp_path, capsys):
    data = write_unit_data(tmp_path)
    config = tmp_path / "config.yaml"
    with open(config, "w") as f:
        yaml.safe_dump({"logging": {"log_dir": str(tmp_path / "logs")}}, f)
    args = ["train", "--data", data, "--c", "0.5", "--out", str(tmp_path / "m.yaml")]
    assert cli.main(args + ["--config", str(config), "--log", "unit"]) == 0

    (directory,) = list((tmp_path / "logs").iterdir())
    assert directory.name.startswith("unit_")
    data = np.load(directory / "data.npz")
    assert "objective" in data.files


def test_usage_errors(tmp_path, capsys):
    data = write_unit_data(tmp_path)

    # missing file
    assert cli.main(["loo", "--data", str(tmp_path / "none.csv"), "--c", "1"]) == 1

    # malformed data
    bad = tmp_path / "bad.csv"
    with open(bad, "w") as f:
        f.write("a,1,2\nb,x,2\n")
    assert cli.main(["loo", "--data", str(bad), "--c", "1"]) == 1
    assert "line 2" in capsys.readouterr().err

    # invalid kernel
    assert cli.main(["loo", "--data", data, "--c", "1", "--kernel", "rbf"]) == 1

    # neither C nor a hard margin
    with pytest.raises(SystemExit) as e:
        cli.main(["train", "--data", data, "--out", str(tmp_path / "m.yaml")])
    assert e.value.code == 1

    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 1

    # corrupt model file
    model = tmp_path / "model.yaml"
    with open(model, "w") as f:
        f.write("format: msvm2/1\n")
    assert cli.main(["predict", "--model", str(model), "--data", data]) == 1

    # dimension mismatch
    _, model = train_unit_model(tmp_path)
    query = tmp_path / "query.csv"
    with open(query, "w") as f:
        f.write("a,1,0\n")
    assert cli.main(["predict", "--model", model, "--data", str(query)]) == 1


def test_numerical_failure(tmp_path, capsys):
    # identical points in different categories have no hard margin solution
    path = tmp_path / "clash.csv"
    with open(path, "w") as f:
        f.write("a,1,1\nb,1,1\n")
    args = ["train", "--data", str(path), "--hard", "--out", str(tmp_path / "m.yaml")]
    assert cli.main(args) == 2
    assert "numerical failure" in capsys.readouterr().err
