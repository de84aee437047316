"""
Report writers: JSON report, per-cycle CSV, registry dump and trace log.

Every file is written to a temporary sibling and moved into place, so a
failed write never leaves a partial file behind.
"""

import csv
import io
import json
import logging
import os
import tempfile
from typing import Any, Dict, List, Sequence

from core.breaker import OutcomeKind
from core.trace import TraceLog
from exceptions.sim_exceptions import ReportWriteError
from harness.metrics import MetricsReport

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
CYCLES_FILE = "cycles.csv"
REGISTRY_FILE = "registry.json"
TRACE_FILE = "trace.jsonl"


def render_report(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def render_cycles_csv(report: MetricsReport, instance_ids: Sequence[str]) -> str:
    """One row per cycle: outcome counts and successful calls per instance."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["cycle"] + [kind.value for kind in OutcomeKind] + [f"calls_{i}" for i in instance_ids])
    for row in report.cycles:
        writer.writerow([row["cycle"]] + [row[kind.value] for kind in OutcomeKind]
                        + [row["calls"].get(i, 0) for i in instance_ids])
    return buffer.getvalue()


def _atomic_write(path: str, content: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    tmp_path = None
    try:
        with tempfile.NamedTemporaryFile("w", encoding="utf-8", dir=directory, prefix=".tmp-",
                                         delete=False, newline="") as tmp:
            tmp_path = tmp.name
            tmp.write(content)
        os.replace(tmp_path, path)
    except OSError as e:
        if tmp_path and os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise ReportWriteError(f"Cannot write file: {e.strerror or e}", path)
    logger.debug(f"Wrote {path}")
    return path


def write_report(report: MetricsReport, path: str) -> str:
    """Write the MetricsReport as JSON."""
    return _atomic_write(path, render_report(report))


def write_cycles_csv(report: MetricsReport, instance_ids: Sequence[str], path: str) -> str:
    return _atomic_write(path, render_cycles_csv(report, instance_ids))


def write_registry_dump(dump: List[Dict[str, Any]], path: str) -> str:
    return _atomic_write(path, json.dumps(dump, indent=2) + "\n")


def write_trace(trace: TraceLog, path: str) -> str:
    return _atomic_write(path, trace.to_jsonl())


def write_run(result: Any, out_dir: str, csv_output: bool = True) -> Dict[str, str]:
    """Write every artifact of a RunResult into ``out_dir``."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ReportWriteError(f"Cannot create output directory: {e.strerror or e}", out_dir)
    written = {
        "report": write_report(result.report, os.path.join(out_dir, REPORT_FILE)),
        "registry": write_registry_dump(result.registry_dump, os.path.join(out_dir, REGISTRY_FILE)),
        "trace": write_trace(result.trace, os.path.join(out_dir, TRACE_FILE)),
    }
    if csv_output:
        written["cycles"] = write_cycles_csv(result.report, result.instance_ids, os.path.join(out_dir, CYCLES_FILE))
    logger.info(f"Wrote {len(written)} files to {out_dir}")
    return written
