"""
Message broker and simulated rover fleet.

Commands travel cloud -> vehicle on ``command/<rover_id>``; telemetry travels
vehicle -> cloud on ``telemetry/<rover_id>``. Payloads are UTF-8 JSON and
delivery is at-most-once after a fixed network delay.
"""

import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from config import BrokerConfig
from core.simtime import Periodic, SimClock, SimInstant
from core.trace import NullTrace, TraceLog
from exceptions.sim_exceptions import RoverMismatchError, TopicError

logger = logging.getLogger(__name__)

_TOPIC = re.compile(r"^(command|telemetry)/([A-Za-z0-9_-]+)$")

COMMAND = "command"
TELEMETRY = "telemetry"


class Direction(str, Enum):
    FORWARD = "FORWARD"
    BACKWARD = "BACKWARD"
    LEFT = "LEFT"
    RIGHT = "RIGHT"
    STOP = "STOP"


def parse_topic(topic: str) -> Tuple[str, str]:
    """Split a topic into (kind, rover_id)."""
    match = _TOPIC.match(topic or "")
    if not match:
        raise TopicError(topic)
    return match.group(1), match.group(2)


def command_topic(rover_id: str) -> str:
    return f"{COMMAND}/{rover_id}"


def telemetry_topic(rover_id: str) -> str:
    return f"{TELEMETRY}/{rover_id}"


def rover_ids(fleet_size: int) -> List[str]:
    width = max(2, len(str(fleet_size)))
    return [f"r{i:0{width}d}" for i in range(1, fleet_size + 1)]


@dataclass(frozen=True)
class CommandMessage:
    rover_id: str
    speed_control: int
    next_move_direction: Direction
    sequence: int
    sent_at: SimInstant

    def __post_init__(self) -> None:
        if not 0 <= self.speed_control <= 100:
            raise ValueError(f"speed_control out of range: {self.speed_control}")

    def to_dict(self) -> Dict[str, object]:
        return {
            "rover_id": self.rover_id,
            "speed_control": self.speed_control,
            "next_move_direction": self.next_move_direction.value,
            "sequence": self.sequence,
            "sent_at_ms": self.sent_at,
        }

    def encode(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode("utf-8")

    @classmethod
    def decode(cls, payload: bytes) -> "CommandMessage":
        data = json.loads(payload.decode("utf-8"))
        return cls(data["rover_id"], int(data["speed_control"]), Direction(data["next_move_direction"]),
                   int(data["sequence"]), int(data["sent_at_ms"]))


@dataclass(frozen=True)
class TelemetryMessage:
    rover_id: str
    infrared_proximity: float
    ultrasonic: float
    temperature: float
    humidity: float
    accel: Tuple[float, float, float]
    at: SimInstant

    def __post_init__(self) -> None:
        readings = (self.infrared_proximity, self.ultrasonic, self.temperature, self.humidity, *self.accel)
        if not all(math.isfinite(r) for r in readings):
            raise ValueError(f"Non-finite telemetry reading from {self.rover_id}")

    def to_dict(self) -> Dict[str, object]:
        return {
            "rover_id": self.rover_id,
            "infrared_proximity": self.infrared_proximity,
            "ultrasonic": self.ultrasonic,
            "temperature": self.temperature,
            "humidity": self.humidity,
            "accel": list(self.accel),
            "at_ms": self.at,
        }

    def encode(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode("utf-8")

    @classmethod
    def decode(cls, payload: bytes) -> "TelemetryMessage":
        data = json.loads(payload.decode("utf-8"))
        return cls(data["rover_id"], float(data["infrared_proximity"]), float(data["ultrasonic"]),
                   float(data["temperature"]), float(data["humidity"]),
                   tuple(float(a) for a in data["accel"]), int(data["at_ms"]))


@dataclass(frozen=True)
class DeliveryReceipt:
    topic: str
    accepted: bool
    deliver_at: Optional[SimInstant] = None


@dataclass
class TopicStats:
    published: int = 0
    delivered: int = 0
    dropped: int = 0

    @property
    def in_flight(self) -> int:
        return self.published - self.delivered - self.dropped


Handler = Callable[[str, bytes], None]


class MessageBroker:
    """
    Publish/subscribe hub between the cloud and attached rovers.

    A subscription pattern is either an exact topic or ``<kind>/#``.
    Messages to or from a detached rover are dropped and counted.
    """

    def __init__(self, clock: SimClock, config: Optional[BrokerConfig] = None,
                 trace: Optional[TraceLog] = None) -> None:
        self.clock = clock
        self.config = config or BrokerConfig()
        self.config.validate()
        self.trace = trace if trace is not None else NullTrace()
        self._subscribers: Dict[str, List[Handler]] = {}
        self._attached: set = set()
        self.stats: Dict[str, TopicStats] = {}

    def attach(self, rover_id: str) -> None:
        """Mark the rover reachable."""
        if rover_id not in self._attached:
            self._attached.add(rover_id)
            self.trace.record("attach", rover_id=rover_id)

    def detach(self, rover_id: str) -> None:
        """Mark the rover unreachable; its messages are dropped until it attaches again."""
        if rover_id in self._attached:
            self._attached.discard(rover_id)
            logger.info(f"Rover {rover_id} detached")
            self.trace.record("detach", rover_id=rover_id)

    def is_attached(self, rover_id: str) -> bool:
        return rover_id in self._attached

    def subscribe(self, pattern: str, handler: Handler) -> None:
        """Register handler for a <kind>/# wildcard pattern."""
        if not pattern.endswith("/#"):
            parse_topic(pattern)
        elif pattern[:-2] not in (COMMAND, TELEMETRY):
            raise TopicError(pattern)
        self._subscribers.setdefault(pattern, []).append(handler)

    def publish(self, topic: str, payload: bytes) -> DeliveryReceipt:
        """Accept ``payload`` for delivery after the configured delay."""
        kind, rover_id = parse_topic(topic)
        stats = self.stats.setdefault(topic, TopicStats())
        stats.published += 1
        if rover_id not in self._attached:
            self._drop(topic, stats, "detached")
            return DeliveryReceipt(topic, False)
        handle = self.clock.schedule(self.config.delivery_delay, lambda: self._deliver(topic, rover_id, payload),
                                     f"broker.deliver.{topic}")
        return DeliveryReceipt(topic, True, handle.fire_at)

    def dropped(self) -> int:
        return sum(s.dropped for s in self.stats.values())

    def delivered(self, kind: Optional[str] = None) -> int:
        return sum(s.delivered for t, s in self.stats.items() if kind is None or t.startswith(kind + "/"))

    def _deliver(self, topic: str, rover_id: str, payload: bytes) -> None:
        stats = self.stats[topic]
        if rover_id not in self._attached:
            self._drop(topic, stats, "detached in flight")
            return
        stats.delivered += 1
        self.trace.record("deliver", topic=topic)
        kind = topic.split("/", 1)[0]
        for handler in self._subscribers.get(topic, []) + self._subscribers.get(f"{kind}/#", []):
            handler(topic, payload)

    def _drop(self, topic: str, stats: TopicStats, reason: str) -> None:
        stats.dropped += 1
        logger.debug(f"Dropped message on {topic}: {reason}")
        self.trace.record("drop", topic=topic)


@dataclass
class RoverState:
    rover_id: str
    heading: Direction = Direction.STOP
    speed: int = 0
    last_applied_sequence: int = 0
    applied_count: int = 0

    def apply(self, cmd: CommandMessage) -> bool:
        """Apply ``cmd`` unless it is stale. Returns True when applied."""
        if cmd.rover_id != self.rover_id:
            raise RoverMismatchError(self.rover_id, cmd.rover_id)
        if cmd.sequence <= self.last_applied_sequence:
            return False
        self.heading = cmd.next_move_direction
        self.speed = cmd.speed_control
        self.last_applied_sequence = cmd.sequence
        self.applied_count += 1
        return True

    @classmethod
    def fold(cls, rover_id: str, commands: Iterable[CommandMessage]) -> "RoverState":
        state = cls(rover_id)
        for cmd in commands:
            state.apply(cmd)
        return state


class Rover:
    """A simulated vehicle: applies commands and reports sensor readings"""

    def __init__(self, rover_id: str, broker: MessageBroker, seed: int = 0,
                 trace: Optional[TraceLog] = None) -> None:
        self.rover_id = rover_id
        self.broker = broker
        self.trace = trace if trace is not None else NullTrace()
        self.state = RoverState(rover_id)
        self.delivered_log: List[CommandMessage] = []
        self._rng = random.Random(f"{seed}:{rover_id}")
        broker.subscribe(command_topic(rover_id), self._on_command)

    def apply(self, cmd: CommandMessage) -> RoverState:
        self.delivered_log.append(cmd)
        if self.state.apply(cmd):
            self.trace.record("apply", rover_id=self.rover_id, sequence=cmd.sequence,
                              direction=cmd.next_move_direction.value, speed=cmd.speed_control)
        else:
            logger.debug(f"Rover {self.rover_id} discarded stale sequence {cmd.sequence}")
        return self.state

    def emit_telemetry(self) -> Optional[TelemetryMessage]:
        """Publish one reading; None while detached."""
        if not self.broker.is_attached(self.rover_id):
            return None
        rng = self._rng
        message = TelemetryMessage(
            rover_id=self.rover_id,
            infrared_proximity=round(rng.uniform(10.0, 80.0), 2),
            ultrasonic=round(rng.uniform(2.0, 400.0), 2),
            temperature=round(rng.gauss(22.0, 3.0), 2),
            humidity=round(rng.uniform(30.0, 70.0), 2),
            accel=(round(rng.gauss(0.0, 0.2), 3), round(rng.gauss(0.0, 0.2), 3), round(rng.gauss(9.81, 0.05), 3)),
            at=self.broker.clock.now(),
        )
        self.broker.publish(telemetry_topic(self.rover_id), message.encode())
        return message

    def _on_command(self, topic: str, payload: bytes) -> None:
        self.apply(CommandMessage.decode(payload))


class Fleet:
    """All rovers of a run plus their telemetry cadence"""

    def __init__(self, clock: SimClock, broker: MessageBroker, fleet_size: int = 40, seed: int = 0,
                 trace: Optional[TraceLog] = None) -> None:
        self.clock = clock
        self.broker = broker
        self.rovers: Dict[str, Rover] = {
            rover_id: Rover(rover_id, broker, seed, trace) for rover_id in rover_ids(fleet_size)
        }
        self._timer: Optional[Periodic] = None
        for rover_id in self.rovers:
            broker.attach(rover_id)

    def start(self, telemetry_interval: int) -> None:
        """Emit telemetry from every rover now and then every interval."""
        if self._timer is None:
            self._timer = self.clock.every(telemetry_interval, self.emit_all, "fleet.telemetry", first_delay=0)

    def stop(self) -> None:
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    def rover(self, rover_id: str) -> Rover:
        rover = self.rovers.get(rover_id)
        if rover is None:
            raise RoverMismatchError(rover_id, "<unknown rover>")
        return rover

    def rover_apply(self, rover_id: str, cmd: CommandMessage) -> RoverState:
        return self.rover(rover_id).apply(cmd)

    def rover_emit_telemetry(self, rover_id: str) -> Optional[TelemetryMessage]:
        return self.rover(rover_id).emit_telemetry()

    def emit_all(self) -> List[TelemetryMessage]:
        emitted = [m for m in (r.emit_telemetry() for r in self.rovers.values()) if m is not None]
        logger.debug(f"Fleet emitted {len(emitted)} telemetry messages")
        return emitted

    def states(self) -> Dict[str, RoverState]:
        return {rover_id: rover.state for rover_id, rover in self.rovers.items()}


@dataclass
class TelemetrySink:
    """Cloud-side telemetry consumer counting receipts per rover"""
    received: Counter = field(default_factory=Counter)
    last: Dict[str, TelemetryMessage] = field(default_factory=dict)

    def bind(self, broker: MessageBroker) -> "TelemetrySink":
        broker.subscribe(f"{TELEMETRY}/#", self.on_message)
        return self

    def on_message(self, topic: str, payload: bytes) -> None:
        message = TelemetryMessage.decode(payload)
        self.received[message.rover_id] += 1
        self.last[message.rover_id] = message

    @property
    def total(self) -> int:
        return sum(self.received.values())
