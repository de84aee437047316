"""
Scenario scripts: timed fault-injection events replayed on the virtual clock.

File format (JSON)::

    {"name": "...", "duration_min": 60, "cycle_min": 1,
     "events": [{"at_min": 10, "action": "stop", "instances": ["b3", "b4"]}, ...]}

Actions: start, stop, deploy (needs "version"), detach/attach (rover ids),
config (needs "service_id", "key", "value"), registry_down, registry_up.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from config import LIVE_CLIENT_LIMITS, MINUTE_MS, parse_live_int
from exceptions.sim_exceptions import ConfigurationError, ScriptValidationError

logger = logging.getLogger(__name__)

INSTANCE_ACTIONS = ("start", "stop", "deploy")
ROVER_ACTIONS = ("detach", "attach")
ACTIONS = INSTANCE_ACTIONS + ROVER_ACTIONS + ("config", "registry_down", "registry_up")

BUILTIN = "builtin"


@dataclass(frozen=True)
class ScriptEvent:
    at: int
    action: str
    instances: Tuple[str, ...] = ()
    service_id: Optional[str] = None
    key: Optional[str] = None
    value: Optional[str] = None
    version: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"at_min": _minutes(self.at), "action": self.action}
        if self.instances:
            data["instances"] = list(self.instances)
        for name in ("service_id", "key", "value", "version"):
            if getattr(self, name) is not None:
                data[name] = getattr(self, name)
        return data


@dataclass
class ScenarioScript:
    name: str
    events: List[ScriptEvent] = field(default_factory=list)
    duration: int = 60 * MINUTE_MS
    cycle: int = MINUTE_MS

    def validate(self, known_instances: Iterable[str] = (), known_rovers: Iterable[str] = ()) -> None:
        """
        Check ordering, timing and references.

        Raises:
            ScriptValidationError: on the first problem found
        """
        instances, rovers = set(known_instances), set(known_rovers)
        if self.duration <= 0 or self.cycle <= 0:
            raise ScriptValidationError("duration and cycle must be positive", self.name,
                                        {"duration_ms": self.duration, "cycle_ms": self.cycle})
        previous = 0
        for index, event in enumerate(self.events):
            context = {"event": index, "action": event.action}
            if event.action not in ACTIONS:
                raise ScriptValidationError(f"Unknown action {event.action!r}", self.name, context)
            if not 0 <= event.at <= self.duration:
                raise ScriptValidationError("Event outside the scenario duration", self.name, context)
            if event.at < previous:
                raise ScriptValidationError("Events must be sorted by time", self.name, context)
            previous = event.at
            if event.action in INSTANCE_ACTIONS + ROVER_ACTIONS and not event.instances:
                raise ScriptValidationError("Action needs at least one instance", self.name, context)
            if event.action in INSTANCE_ACTIONS and instances:
                unknown = sorted(set(event.instances) - instances)
                if unknown:
                    raise ScriptValidationError(f"Unknown instances {unknown}", self.name, context)
            if event.action in ROVER_ACTIONS and rovers:
                unknown = sorted(set(event.instances) - rovers)
                if unknown:
                    raise ScriptValidationError(f"Unknown rovers {unknown}", self.name, context)
            if event.action == "deploy" and not event.version:
                raise ScriptValidationError("deploy needs a version", self.name, context)
            if event.action == "config" and (not event.service_id or not event.key or event.value is None):
                raise ScriptValidationError("config needs service_id, key and value", self.name, context)
            if event.action == "config" and event.service_id == "client" and event.key in LIVE_CLIENT_LIMITS:
                try:
                    parse_live_int(event.key, event.value)
                except ConfigurationError as e:
                    raise ScriptValidationError(e.message, self.name, {**context, "value": event.value})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "duration_min": _minutes(self.duration),
            "cycle_min": _minutes(self.cycle),
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: Optional[str] = None) -> "ScenarioScript":
        try:
            events = [
                ScriptEvent(
                    at=_millis(raw["at_min"]),
                    action=str(raw["action"]),
                    instances=tuple(str(i) for i in raw.get("instances", ())),
                    service_id=raw.get("service_id"),
                    key=raw.get("key"),
                    value=None if raw.get("value") is None else str(raw["value"]),
                    version=raw.get("version"),
                )
                for raw in data.get("events", [])
            ]
            return cls(
                name=str(data.get("name") or source or "script"),
                events=events,
                duration=_millis(data.get("duration_min", 60)),
                cycle=_millis(data.get("cycle_min", 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ScriptValidationError(f"Malformed script: {e}", source)


def _millis(minutes: Any) -> int:
    return int(round(float(minutes) * MINUTE_MS))


def _minutes(millis: int) -> Any:
    return millis // MINUTE_MS if millis % MINUTE_MS == 0 else round(millis / MINUTE_MS, 3)


def load_script(path: str) -> ScenarioScript:
    """Load a script file, or the builtin script when ``path`` is 'builtin'."""
    if path == BUILTIN:
        return builtin_script()
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = json.load(file)
    except FileNotFoundError:
        raise ScriptValidationError("Script file not found", path)
    except json.JSONDecodeError as e:
        raise ScriptValidationError(f"Script is not valid JSON: {e}", path)
    if not isinstance(data, dict):
        raise ScriptValidationError("Script must be a JSON object", path)
    return ScenarioScript.from_dict(data, path)


def builtin_script(instances: Sequence[str] = ("b1", "b2", "b3", "b4")) -> ScenarioScript:
    """
    The three failure scenarios over one hour:

    1. two of four instances down 00:10-00:15
    2. all down at 00:20, back one by one at 00:25, 00:30, 00:35, 00:40
    3. all down 00:45-00:50
    """
    b1, b2, b3, b4 = instances
    every = tuple(instances)

    def at(minute: int, action: str, *names: str) -> ScriptEvent:
        return ScriptEvent(minute * MINUTE_MS, action, names)

    return ScenarioScript(
        name="three-scenarios",
        events=[
            at(10, "stop", b3, b4),
            at(15, "start", b3, b4),
            at(20, "stop", *every),
            at(25, "start", b1),
            at(30, "start", b2),
            at(35, "start", b3),
            at(40, "start", b4),
            at(45, "stop", *every),
            at(50, "start", *every),
        ],
    )


def running_count_histogram(script: ScenarioScript, instances: Sequence[str]) -> Dict[int, int]:
    """
    Milliseconds spent at each running-instance count, assuming every
    instance is up at time zero. Pure function of the script.
    """
    running = set(instances)
    histogram = {count: 0 for count in range(len(instances) + 1)}
    last = 0
    for event in script.events:
        if event.action not in ("start", "stop"):
            continue
        histogram[len(running)] += event.at - last
        last = event.at
        members = set(event.instances) & set(instances)
        running = running | members if event.action == "start" else running - members
    histogram[len(running)] += script.duration - last
    return histogram
