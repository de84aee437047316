"""
Console rendering of a MetricsReport.
"""

from typing import Dict, List

from cli.colors import Colors
from harness.metrics import MetricsReport


def _row(label: str, value: str, width: int = 26) -> str:
    return f"  {label:<{width}} {value}"


def render_summary(report: MetricsReport, files: Dict[str, str]) -> str:
    data = report.to_dict()
    total = max(report.uptime_histogram)
    lines: List[str] = [
        Colors.bold(f"Scenario {report.scenario!r} (seed {report.seed}, {data['duration_min']} min)"),
        "",
        Colors.primary("Running instances (minutes)"),
    ]
    for count, minutes in sorted(report.uptime_histogram.items(), reverse=True):
        lines.append(_row(Colors.running(count, total), str(minutes), 36))
    lines.append(_row("total instance uptime", str(data["total_instance_uptime_min"])))

    lines += ["", Colors.primary("Calls handled per instance")]
    for instance_id, calls in sorted(report.per_instance_calls.items()):
        lines.append(_row(instance_id, str(calls)))
    lines.append(_row("total", str(report.total_calls)))

    lines += ["", Colors.primary("Circuit breaker")]
    for kind, count in data["circuit_breaker"].items():
        lines.append(_row(Colors.outcome(kind, kind), str(count), 36))

    lines += ["", Colors.primary("Delivery")]
    for service_id, count in data["gateway_usage"].items():
        lines.append(_row(f"gateway -> {service_id}", str(count)))
    lines.append(_row("commands delivered", str(report.commands_delivered)))
    lines.append(_row("telemetry received", str(report.telemetry_received)))
    lines.append(_row("dropped", str(report.drops)))
    quickest = "n/a" if report.quickest_recovery_ms is None else f"{report.quickest_recovery_ms} ms"
    lines.append(_row("quickest recovery", quickest))

    if files:
        lines += ["", Colors.primary("Files")]
        lines += [_row(name, path) for name, path in files.items()]
    return "\n".join(lines)
