import json
import os
import sys
import tempfile

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.errors import IOFailure
from convexpde.logging import RunLog


@pytest.fixture
def temp_log_path():
    with tempfile.NamedTemporaryFile(suffix=".runlog", delete=False) as tf:
        path = tf.name
    os.remove(path)
    yield path
    if os.path.exists(path):
        os.remove(path)


# --- CORE FUNCTIONALITY TESTS ---

def test_log_writes_json_line(temp_log_path):
    log = RunLog(temp_log_path)
    log.log("invariance", "h=0.1", {"status": "PASS"})
    with open(temp_log_path, "r", encoding="utf-8") as f:
        lines = f.readlines()
    assert len(lines) == 1
    assert json.loads(lines[0]) == {"seq": 0, "event": "invariance", "stage": "h=0.1", "meta": {"status": "PASS"}}

def test_entries_in_order(temp_log_path):
    log = RunLog(temp_log_path)
    log.log("stage", "t=0.5")
    log.log("stage", "t=1")
    entries = log.entries()
    assert [e["stage"] for e in entries] == ["t=0.5", "t=1"]
    assert [e["seq"] for e in entries] == [0, 1]

def test_sequence_continues_after_reopen(temp_log_path):
    RunLog(temp_log_path).log("level", "level 1")
    log = RunLog(temp_log_path)
    log.log("level", "level 2")
    assert log.entries()[-1]["seq"] == 1

def test_tail_returns_last_n_entries(temp_log_path):
    log = RunLog(temp_log_path)
    for i in range(5):
        log.log("dump", f"iter {i}")
    tail = log.tail(2)
    assert len(tail) == 2
    assert tail[-1]["stage"] == "iter 4"
    assert len(log.tail(10)) == 5

def test_logs_are_identical_without_timestamps():
    with tempfile.TemporaryDirectory() as tmp:
        contents = []
        for name in ("a.runlog", "b.runlog"):
            path = os.path.join(tmp, name)
            log = RunLog(path)
            log.log("solve", "t=1,h=0.02", {"residual": 1e-9})
            with open(path, "r", encoding="utf-8") as f:
                contents.append(f.read())
    assert contents[0] == contents[1]

def test_timestamps_are_optional(temp_log_path):
    log = RunLog(temp_log_path, timestamps=True)
    log.log("solve")
    assert set(log.entries()[0]) == {"seq", "event", "stage", "meta", "at"}

def test_export_json(temp_log_path):
    log = RunLog(temp_log_path)
    log.log("solve")
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "log.json")
        log.export_json(out)
        with open(out, "r", encoding="utf-8") as f:
            assert json.load(f)[0]["event"] == "solve"


# --- EDGE CASES & FAILURE MODES ---

def test_invalid_line_raises_io_failure(temp_log_path):
    with open(temp_log_path, "w", encoding="utf-8") as f:
        f.write("not json\n")
    with pytest.raises(IOFailure):
        RunLog(temp_log_path)

def test_log_handles_write_error_with_hook(temp_log_path, monkeypatch):
    captured = []
    log = RunLog(temp_log_path, on_log_error=lambda exc: captured.append(str(exc)))

    def broken_open(*args, **kwargs):
        raise IOError("disk full")

    with monkeypatch.context() as m:
        m.setattr("builtins.open", broken_open)
        log.log("stage", "fail")
    assert any("disk full" in err for err in captured)
    assert log.entries() == []

def test_log_handles_write_error_with_warning(temp_log_path, monkeypatch, caplog):
    log = RunLog(temp_log_path)

    def broken_open(*args, **kwargs):
        raise IOError("boom")

    with caplog.at_level("WARNING"):
        with monkeypatch.context() as m:
            m.setattr("builtins.open", broken_open)
            log.log("stage", "fail")
    assert any("RunLog failed to log event" in record.message for record in caplog.records)
