import csv
import io
import subprocess
import sys

import pytest

from taskmerge.cli import SUMMARY_FIELDS, main


def data_lines(text):
    return [l for l in text.splitlines()[1:] if l and not l.startswith("#")]


def test_generate_default(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["generate", "--seed", "3", "--out", str(out)]) == 0
    assert len(data_lines(out.read_text())) == 1000


def test_generate_repeatable(tmp_path, capsys):
    assert main(["generate", "--seed", "5", "--tasks", "400"]) == 0
    first = capsys.readouterr().out
    assert main(["generate", "--seed", "5", "--tasks", "400"]) == 0
    assert capsys.readouterr().out == first
    assert len(data_lines(first)) == 400


def test_generate_bad_spec(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[workload]\nstreams = 0\n")
    assert main(["generate", "--config", str(cfg)]) == 2
    assert "streams" in capsys.readouterr().err


def test_environment_override(monkeypatch, capsys):
    monkeypatch.setenv("TASKMERGE_WORKLOAD_TOTAL_TASKS", "250")
    assert main(["generate"]) == 0
    assert len(data_lines(capsys.readouterr().out)) == 250


SINGLE = """id,stream_id,segment_idx,op_type,param,arrival_s,mu_s,sigma_s,deadline_s,viewer_id
0,1,0,ChangeCodec,h265,0.0,8.0,0.0,10.0,0
"""


def test_run_single_task(tmp_path, capsys):
    trace = tmp_path / "one.csv"
    trace.write_text(SINGLE)
    assert main(["run", str(trace), "--modes", "NoMerge"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert list(rows[0]) == SUMMARY_FIELDS
    assert float(rows[0]["dmr"]) == 0.0 and rows[0]["load"] == "1"


def test_run_repeatable_with_records(tmp_path):
    trace = tmp_path / "t.csv"
    main(["generate", "--seed", "1", "--tasks", "500", "--out", str(trace)])
    outputs = []
    for k in range(2):
        out, rec = tmp_path / f"s{k}.csv", tmp_path / f"r{k}.csv"
        assert main(["run", str(trace), "--modes", "NoMerge,Conservative,Adaptive",
                     "--queue-policy", "EDF", "--out", str(out), "--records", str(rec)]) == 0
        outputs.append((out.read_bytes(), rec.read_bytes()))
    assert outputs[0] == outputs[1]
    assert len(outputs[0][0].decode().splitlines()) == 4
    assert len(outputs[0][1].decode().splitlines()) == 1 + 3 * 500


def test_run_missing_trace(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.csv")]) == 2
    assert capsys.readouterr().err


def test_run_malformed_trace(tmp_path, capsys):
    trace = tmp_path / "bad.csv"
    trace.write_text(SINGLE.replace("8.0", "eight"))
    assert main(["run", str(trace)]) == 2
    assert "line 2, column 7" in capsys.readouterr().err


def test_experiment_row_accounting(capsys):
    assert main(["experiment", "--reps", "2", "--loads", "200", "--modes", "Conservative"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["row_type"] for r in rows] == ["raw", "raw", "aggregate"]


@pytest.mark.parametrize("argv", [[], ["fly"], ["run"], ["generate", "--seed", "x"],
                                  ["experiment", "--reps"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_bad_flag_values_are_runtime_errors(tmp_path):
    trace = tmp_path / "one.csv"
    trace.write_text(SINGLE)
    assert main(["run", str(trace), "--modes", "Reckless"]) == 2
    assert main(["run", str(trace), "--position-finder", "sometimes"]) == 2


def test_validate_config(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[engine]\nmachine_count = 3\n")
    assert main(["validate-config", str(cfg)]) == 0
    assert "machine_count = 3" in capsys.readouterr().out
    cfg.write_text("[engine]\nmachine_count = three\n")
    assert main(["validate-config", str(cfg)]) == 2


def test_console_entry_point():
    done = subprocess.run([sys.executable, "-m", "taskmerge.cli", "--help"],
                          capture_output=True, text=True)
    assert done.returncode == 0 and "experiment" in done.stdout
