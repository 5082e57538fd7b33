import json
import subprocess
import sys

import pytest

from risshare.cli import load_config, main
from risshare.driver import CSV_COLUMNS, read_csv

CONFIG = {"n_elements": 2, "j_pns": 1, "gamma_bar_dbm": [-115.0], "p_pap_dbm": [10.0], "max_rounds": 3}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(CONFIG))
    return path


def test_small_run_writes_csv(config, tmp_path):
    out = tmp_path / "out.csv"
    code = main(["run", "--config", str(config), "--sweep", "pmax", "--values", "0,10", "--trials", "1",
                 "--seed", "5", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert [r["value"] for r in rows] == [0.0, 10.0]
    assert out.read_text().splitlines()[0].split(",") == CSV_COLUMNS
    assert all(r["seed"] == 5 for r in rows)


def test_trace_file_is_written(config, tmp_path):
    out = tmp_path / "out.csv"
    code = main(["run", "--config", str(config), "--sweep", "n", "--values", "2", "--trials", "1",
                 "--out", str(out), "--trace", "--discrete-bits", "1"])
    assert code == 0
    trace = tmp_path / "out.trace.csv"
    assert trace.exists() and len(trace.read_text().splitlines()) > 1


def test_unknown_config_key_fails(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CONFIG, "colour": "red"}))
    code = main(["run", "--config", str(bad), "--sweep", "pmax", "--out", str(tmp_path / "o.csv")])
    assert code == 2
    assert "colour" in capsys.readouterr().err
    assert not (tmp_path / "o.csv").exists()


@pytest.mark.parametrize("text", ["{not json", "[1, 2]", json.dumps({"n_elements": -1})])
def test_malformed_config_fails(tmp_path, text):
    bad = tmp_path / "bad.json"
    bad.write_text(text)
    assert main(["run", "--config", str(bad), "--sweep", "pmax", "--out", str(tmp_path / "o.csv")]) == 2


def test_missing_config_fails(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--sweep", "pmax", "--out", str(tmp_path / "o.csv")]) == 2


def test_missing_output_directory_fails(config, tmp_path):
    out = tmp_path / "missing" / "o.csv"
    assert main(["run", "--config", str(config), "--sweep", "pmax", "--values", "0", "--out", str(out)]) == 2


@pytest.mark.parametrize("extra", [["--trials", "0"], ["--seed", "-1"], ["--discrete-bits", "0"], ["--values", ","]])
def test_bad_arguments_fail(config, tmp_path, extra):
    argv = ["run", "--config", str(config), "--sweep", "pmax", "--out", str(tmp_path / "o.csv")] + extra
    assert main(argv) == 2


def test_unknown_sweep_is_a_usage_error(config, tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--config", str(config), "--sweep", "x", "--out", str(tmp_path / "o.csv")])


def test_load_config_splits_fields(config):
    scenario, ao = load_config(config)
    assert scenario.n_elements == 2 and ao.max_rounds == 3


def test_module_entry_point(config, tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "risshare", "run", "--config", str(config), "--sweep", "gamma", "--values", "-115",
         "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len(out.read_text().splitlines()) == 2
