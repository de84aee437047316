"""
Run metrics in the shape of the experiment's result tables.

``MetricsReport`` is filled from live component counters by the engine;
``derive_report`` refolds the same report from the trace alone.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

from config import MINUTE_MS
from core.breaker import OutcomeKind
from core.services import BACKSERVER, BackserverInstance, ServiceInstance
from core.simtime import SimClock, SimInstant
from core.trace import TraceLog

logger = logging.getLogger(__name__)


def to_minutes(millis: Optional[int]) -> Any:
    """Whole minutes as int, otherwise minutes rounded to 3 decimals."""
    if millis is None:
        return None
    return millis // MINUTE_MS if millis % MINUTE_MS == 0 else round(millis / MINUTE_MS, 3)


def empty_tallies() -> Dict[str, int]:
    return {kind.value: 0 for kind in OutcomeKind}


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    duration_ms: int
    cycle_ms: int
    uptime_histogram_ms: Dict[int, int]
    instance_uptime_ms: Dict[str, int]
    per_instance_calls: Dict[str, int]
    circuit_breaker: Dict[str, int]
    gateway_usage: Dict[str, int]
    drops: int
    commands_delivered: int
    telemetry_received: int
    quickest_recovery_ms: Optional[int]
    cycles: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def uptime_histogram(self) -> Dict[int, Any]:
        return {count: to_minutes(ms) for count, ms in sorted(self.uptime_histogram_ms.items())}

    @property
    def total_instance_uptime_ms(self) -> int:
        return sum(self.instance_uptime_ms.values())

    @property
    def total_calls(self) -> int:
        return sum(self.per_instance_calls.values())

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready dict with a fixed key order."""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "duration_min": to_minutes(self.duration_ms),
            "cycle_min": to_minutes(self.cycle_ms),
            "uptime_histogram": {str(k): v for k, v in self.uptime_histogram.items()},
            "instance_uptime_min": {k: to_minutes(v) for k, v in sorted(self.instance_uptime_ms.items())},
            "total_instance_uptime_min": to_minutes(self.total_instance_uptime_ms),
            "per_instance_calls": dict(sorted(self.per_instance_calls.items())),
            "total_calls": self.total_calls,
            "circuit_breaker": {kind.value: self.circuit_breaker.get(kind.value, 0) for kind in OutcomeKind},
            "gateway_usage": dict(sorted(self.gateway_usage.items())),
            "drops": self.drops,
            "commands_delivered": self.commands_delivered,
            "telemetry_received": self.telemetry_received,
            "quickest_recovery_ms": self.quickest_recovery_ms,
            "quickest_recovery_min": to_minutes(self.quickest_recovery_ms),
            "cycles": self.cycles,
        }


class UptimeTracker:
    """Accumulates time spent at each running-instance count"""

    def __init__(self, clock: SimClock, instance_ids: Sequence[str]) -> None:
        self.clock = clock
        self.histogram: Dict[int, int] = {count: 0 for count in range(len(instance_ids) + 1)}
        self.uptime: Dict[str, int] = {instance_id: 0 for instance_id in instance_ids}
        self._since: Dict[str, SimInstant] = {}
        self._last = clock.now()

    def on_lifecycle(self, instance: ServiceInstance, running: bool) -> None:
        self._mark(instance.instance_id, running, self.clock.now())

    def _mark(self, instance_id: str, running: bool, now: SimInstant) -> None:
        self.histogram[len(self._since)] += now - self._last
        self._last = now
        if running:
            self._since.setdefault(instance_id, now)
        elif instance_id in self._since:
            self.uptime[instance_id] += now - self._since.pop(instance_id)

    def close(self, end: SimInstant) -> None:
        self.histogram[len(self._since)] += end - self._last
        self._last = end
        for instance_id, since in self._since.items():
            self.uptime[instance_id] += end - since
            self._since[instance_id] = end


class RecoveryTracker:
    """Shortest delay between an instance (re)starting and its first handled call"""

    def __init__(self, clock: SimClock) -> None:
        self.clock = clock
        self.recoveries: List[int] = []
        self._waiting: Dict[str, SimInstant] = {}

    def on_lifecycle(self, instance: ServiceInstance, running: bool) -> None:
        # the initial start at time zero is not a recovery
        if running and self.clock.now() > 0:
            self._waiting[instance.instance_id] = self.clock.now()
        elif not running:
            self._waiting.pop(instance.instance_id, None)

    def on_handle(self, instance: BackserverInstance, _cmd: Any) -> None:
        started = self._waiting.pop(instance.instance_id, None)
        if started is not None:
            self.recoveries.append(self.clock.now() - started)

    @property
    def quickest(self) -> Optional[int]:
        return min(self.recoveries) if self.recoveries else None


def cycle_row(cycle: int, counts: Dict[str, int], calls: Dict[str, int]) -> Dict[str, Any]:
    row: Dict[str, Any] = {"cycle": cycle}
    row.update({kind.value: counts.get(kind.value, 0) for kind in OutcomeKind})
    row["calls"] = dict(sorted(calls.items()))
    return row


def derive_report(trace: Iterable[Dict[str, Any]], scenario: str, seed: int, duration_ms: int, cycle_ms: int,
                  instance_ids: Sequence[str]) -> MetricsReport:
    """Rebuild the MetricsReport from trace entries only."""
    histogram = {count: 0 for count in range(len(instance_ids) + 1)}
    uptime = {instance_id: 0 for instance_id in instance_ids}
    since: Dict[str, int] = {}
    last = 0
    calls = {instance_id: 0 for instance_id in instance_ids}
    tallies = empty_tallies()
    usage: Dict[str, int] = {}
    drops = delivered_commands = delivered_telemetry = 0
    waiting: Dict[str, int] = {}
    recoveries: List[int] = []
    cycle_counts: Dict[int, Dict[str, int]] = {}
    cycle_calls: Dict[int, Dict[str, int]] = {}

    for entry in trace:
        at, kind = entry["at_ms"], entry["kind"]
        if kind in ("start", "stop") and entry.get("service_id") == BACKSERVER:
            instance_id = entry["instance_id"]
            histogram[len(since)] += at - last
            last = at
            if kind == "start":
                since.setdefault(instance_id, at)
                if at > 0:
                    waiting[instance_id] = at
            else:
                if instance_id in since:
                    uptime[instance_id] += at - since.pop(instance_id)
                waiting.pop(instance_id, None)
        elif kind == "handle":
            calls[entry["instance_id"]] = calls.get(entry["instance_id"], 0) + 1
            started = waiting.pop(entry["instance_id"], None)
            if started is not None:
                recoveries.append(at - started)
        elif kind == "tick":
            cycle_counts.setdefault(entry["cycle"], empty_tallies())
            cycle_calls.setdefault(entry["cycle"], {})
        elif kind == "outcome":
            tallies[entry["outcome"]] += 1
            counts = cycle_counts.setdefault(entry["cycle"], empty_tallies())
            counts[entry["outcome"]] += 1
            if entry["outcome"] == OutcomeKind.SUCCESS.value and entry.get("instance_id"):
                per_cycle = cycle_calls.setdefault(entry["cycle"], {})
                per_cycle[entry["instance_id"]] = per_cycle.get(entry["instance_id"], 0) + 1
        elif kind == "route":
            usage[entry["service_id"]] = usage.get(entry["service_id"], 0) + 1
        elif kind == "drop":
            drops += 1
        elif kind == "deliver":
            if entry["topic"].startswith("command/"):
                delivered_commands += 1
            else:
                delivered_telemetry += 1

    histogram[len(since)] += duration_ms - last
    for instance_id, start in since.items():
        uptime[instance_id] += duration_ms - start

    return MetricsReport(
        scenario=scenario,
        seed=seed,
        duration_ms=duration_ms,
        cycle_ms=cycle_ms,
        uptime_histogram_ms=histogram,
        instance_uptime_ms=uptime,
        per_instance_calls=calls,
        circuit_breaker=tallies,
        gateway_usage=usage,
        drops=drops,
        commands_delivered=delivered_commands,
        telemetry_received=delivered_telemetry,
        quickest_recovery_ms=min(recoveries) if recoveries else None,
        cycles=[cycle_row(c, cycle_counts[c], cycle_calls.get(c, {})) for c in sorted(cycle_counts)],
    )
