import csv
import json
import subprocess
import sys

import pytest

from fpcbag.cli import main
from fpcbag.data import load_long_csv

FAST_SIM = ["--classifiers", "lda,nb", "--reps", "2", "--B", "3", "--n-train", "60", "--n-test", "30", "--quiet"]


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_generate(tmp_path):
    out = tmp_path / "data.csv"
    assert main(["generate", "--scenario", "4", "--seed", "7", "--out", str(out)]) == 0
    ds = load_long_csv(out)
    assert len(ds) == 200 and ds.is_labeled


def test_simulate_writes_tables(tmp_path):
    out = tmp_path / "res"
    rc = main(["simulate", "--scenario", "5", "--rules", "single,bayesian", "--seed", "42", "--out", str(out), *FAST_SIM])
    assert rc == 0
    summary = _rows(out / "summary.csv")
    assert {(r["classifier"], r["rule"]) for r in summary} == {
        ("lda", "single"), ("lda", "bayesian"), ("naivebayes", "single"), ("naivebayes", "bayesian")
    }
    assert (out / "errors_long.csv").exists() and (out / "trace.csv").exists()


def test_config_file_merged_under_flags(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"scenario": 5, "reps": 1, "B": 2, "classifiers": ["lda"], "n-train": 40, "n_test": 20}))
    out = tmp_path / "r"
    assert main(["simulate", "--config", str(cfg), "--reps", "2", "--out", str(out), "--quiet"]) == 0
    assert {r["n_reps"] for r in _rows(out / "summary.csv")} == {"2"}
    assert {r["classifier"] for r in _rows(out / "summary.csv")} == {"lda"}


def test_key_value_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = 5\nreps = 1\nB = 2\nclassifiers = nb\nn_train = 40\nn_test = 20\nquiet = true\n")
    out = tmp_path / "r"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert {r["classifier"] for r in _rows(out / "summary.csv")} == {"naivebayes"}


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"scenario": 1, "colour": "red"}')
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "colour" in capsys.readouterr().err


def test_bad_scenario_exits_nonzero(tmp_path, capsys):
    rc = main(["simulate", "--scenario", "10", "--out", str(tmp_path), "--quiet"])
    assert rc != 0
    assert "scenario" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["simulate", "--bogus"], ["frobnicate"]])
def test_usage_errors_exit_2(argv):
    proc = subprocess.run([sys.executable, "-m", "fpcbag.cli", *argv], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage" in proc.stderr


def test_fpca_dump(tmp_path):
    data = tmp_path / "d.csv"
    main(["generate", "--scenario", "1", "--n", "60", "--out", str(data)])
    out = tmp_path / "model.txt"
    assert main(["fpca", "--data", str(data), "--out", str(out)]) == 0
    assert out.read_text().startswith("# summary")


def test_train_and_predict(tmp_path):
    data = tmp_path / "d.csv"
    main(["generate", "--scenario", "5", "--n", "60", "--seed", "1", "--out", str(data)])
    model = tmp_path / "m.pkl"
    summary = tmp_path / "s.csv"
    rc = main(["train", "--data", str(data), "--classifier", "lda", "--B", "4", "--out", str(model), "--summary", str(summary)])
    assert rc == 0 and model.exists() and "# calibration" in summary.read_text()
    newdata = tmp_path / "n.csv"
    main(["generate", "--scenario", "5", "--n", "10", "--seed", "2", "--out", str(newdata)])
    pred = tmp_path / "p.csv"
    assert main(["predict", "--model", str(model), "--data", str(newdata), "--out", str(pred)]) == 0
    rows = _rows(pred)
    assert len(rows) == 10
    assert list(rows[0]) == ["id", "aggregate_proba", "majority", "oobweight", "bayesian_proba", "bayesian"]
    for r in rows:
        assert 0 <= float(r["aggregate_proba"]) <= 1 and r["bayesian"] in ("0", "1")


def test_missing_data_file(tmp_path, capsys):
    assert main(["fpca", "--data", str(tmp_path / "nope.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_realdata_command(tmp_path):
    data = tmp_path / "d.csv"
    main(["generate", "--scenario", "5", "--n", "60", "--seed", "3", "--out", str(data)])
    out = tmp_path / "res"
    rc = main([
        "realdata", "--data", str(data), "--train-fraction", "0.6", "--sparsify", "4,5",
        "--classifiers", "qda", "--reps", "2", "--B", "3", "--out", str(out), "--quiet",
    ])
    assert rc == 0
    assert len(_rows(out / "summary.csv")) == 4
