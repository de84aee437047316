import csv
import json

import pytest

from config import MINUTE_MS
from core.trace import TraceLog
from exceptions.sim_exceptions import ReportWriteError
from harness.engine import run
from harness.metrics import derive_report, to_minutes
from harness.report import write_report, write_run
from harness.scenario import ScenarioScript, ScriptEvent


@pytest.fixture(scope="module")
def short_run():
    script = ScenarioScript("short", [ScriptEvent(MINUTE_MS, "stop", ("b4",))], duration=3 * MINUTE_MS)
    return run(script, seed=5)


class TestWriteRun:
    def test_writes_every_artifact(self, short_run, tmp_path):
        files = write_run(short_run, str(tmp_path / "out"))

        assert set(files) == {"report", "registry", "trace", "cycles"}
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report == json.loads(json.dumps(short_run.report.to_dict()))
        assert list(report)[:4] == ["scenario", "seed", "duration_min", "cycle_min"]
        assert report["uptime_histogram"] == {"0": 0, "1": 0, "2": 0, "3": 2, "4": 1}

    def test_cycles_csv(self, short_run, tmp_path):
        write_run(short_run, str(tmp_path))
        with open(tmp_path / "cycles.csv", newline="") as file:
            rows = list(csv.DictReader(file))

        assert len(rows) == 3
        assert list(rows[0]) == ["cycle", "success", "failure", "timeout", "short_circuited",
                                 "calls_b1", "calls_b2", "calls_b3", "calls_b4"]
        assert rows[0]["success"] == "40"
        assert sum(int(r[k]) for r in rows for k in ("success", "failure", "timeout", "short_circuited")) == 120

    def test_csv_optional(self, short_run, tmp_path):
        files = write_run(short_run, str(tmp_path), csv_output=False)
        assert "cycles" not in files
        assert not (tmp_path / "cycles.csv").exists()

    def test_trace_file_refolds_into_the_report(self, short_run, tmp_path):
        write_run(short_run, str(tmp_path))
        trace = TraceLog.from_jsonl((tmp_path / "trace.jsonl").read_text())

        derived = derive_report(trace, "short", 5, 3 * MINUTE_MS, MINUTE_MS, short_run.instance_ids)
        assert derived.to_dict() == short_run.report.to_dict()

    def test_registry_file(self, short_run, tmp_path):
        write_run(short_run, str(tmp_path))
        dump = json.loads((tmp_path / "registry.json").read_text())
        assert [r["instance_id"] for r in dump] == ["b1", "b2", "b3", "client-1"]


class TestFailures:
    def test_missing_directory_leaves_no_file(self, short_run, tmp_path):
        target = tmp_path / "missing" / "report.json"
        with pytest.raises(ReportWriteError):
            write_report(short_run.report, str(target))
        assert not target.exists()

    def test_unwritable_out_dir(self, short_run, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ReportWriteError):
            write_run(short_run, str(blocker / "out"))


@pytest.mark.parametrize("millis, expected", [(0, 0), (MINUTE_MS, 1), (90_000, 1.5), (1_000, 0.017), (None, None)])
def test_to_minutes(millis, expected):
    assert to_minutes(millis) == expected
