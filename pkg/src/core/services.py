"""
The two application services of the delivery experiment.

Client: once per cycle builds one CommandMessage per rover and sends it
through breaker -> gateway -> balancer to a Backserver.
Backserver: stateless forwarder from the Client to the message broker.
"""

import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from config import BreakerConfig, ClientConfig, RegistryConfig, ServiceConfig, parse_live_int
from core.balancer import RoundRobinBalancer
from core.breaker import CallOutcome, CircuitBreaker, OutcomeKind
from core.config_server import ConfigEntry, ConfigServer
from core.fleet import CommandMessage, Direction, MessageBroker, command_topic
from core.gateway import Gateway, Reply
from core.registry import InstanceRecord, InstanceStatus, ServiceRegistry
from core.simtime import EventHandle, Periodic, SimClock, SimInstant
from core.trace import NullTrace, TraceLog
from exceptions.sim_exceptions import (
    ConfigurationError, NoInstanceAvailableError, NotRegisteredError, NotRoutedError,
)

logger = logging.getLogger(__name__)

BACKSERVER = "backserver"
CLIENT = "client"

ROTATION = (Direction.FORWARD, Direction.RIGHT, Direction.BACKWARD, Direction.LEFT)
ROTATE = "ROTATE"

LifecycleListener = Callable[["ServiceInstance", bool], None]


class Network:
    """Address book of running endpoints; requests to unknown or stopped addresses are lost"""

    def __init__(self) -> None:
        self._endpoints: Dict[str, "BackserverInstance"] = {}

    def bind(self, address: str, endpoint: "BackserverInstance") -> None:
        self._endpoints[address] = endpoint

    def deliver(self, address: str, request: Any, reply: Reply) -> bool:
        endpoint = self._endpoints.get(address)
        if endpoint is None or not endpoint.running:
            return False
        return endpoint.handle(request, reply)


class ServiceInstance:
    """Registration and heartbeat lifecycle shared by every service instance"""

    def __init__(self, service_id: str, instance_id: str, address: str, clock: SimClock,
                 registry: ServiceRegistry, registry_config: Optional[RegistryConfig] = None,
                 trace: Optional[TraceLog] = None, version: str = "v1") -> None:
        self.service_id = service_id
        self.instance_id = instance_id
        self.address = address
        self.clock = clock
        self.registry = registry
        self.registry_config = registry_config or registry.config
        self.trace = trace if trace is not None else NullTrace()
        self.version = version
        self.running = False
        self.started_at: Optional[SimInstant] = None
        self.lifecycle_listeners: List[LifecycleListener] = []
        self._heartbeat: Optional[Periodic] = None

    def instance_start(self, version: Optional[str] = None) -> bool:
        """Register, begin heartbeating and accept calls. No-op when already running."""
        if self.running:
            return False
        if version is not None:
            self.version = version
        self.running = True
        self.started_at = self.clock.now()
        self.trace.record("start", service_id=self.service_id, instance_id=self.instance_id, version=self.version)
        self.registry.register(self._record())
        self._heartbeat = self.clock.every(self.registry_config.heartbeat_interval, self._beat,
                                           f"heartbeat.{self.instance_id}")
        logger.info(f"{self.service_id}/{self.instance_id} started ({self.version})")
        self._notify(True)
        return True

    def instance_stop(self, graceful: bool = False) -> bool:
        """Stop heartbeating at once; graceful stops also mark DOWN and deregister."""
        if not self.running:
            return False
        self.running = False
        if self._heartbeat is not None:
            self._heartbeat.cancel()
            self._heartbeat = None
        self.trace.record("stop", service_id=self.service_id, instance_id=self.instance_id,
                          mode="graceful" if graceful else "crash")
        if graceful:
            try:
                self.registry.set_status(self.service_id, self.instance_id, InstanceStatus.DOWN)
            except NotRegisteredError:
                pass
            self.registry.deregister(self.service_id, self.instance_id)
        logger.warning(f"{self.service_id}/{self.instance_id} stopped ({'graceful' if graceful else 'crash'})")
        self._notify(False)
        return True

    def deploy(self, version: str) -> bool:
        """
        Roll the instance onto ``version`` with a graceful restart.

        A stopped instance only takes the new version for its next start.
        Returns True when the instance was restarted.
        """
        if not self.running:
            logger.info(f"{self.service_id}/{self.instance_id} is stopped, {version} applies on next start")
            self.version = version
            self.trace.record("retag", service_id=self.service_id, instance_id=self.instance_id, version=version)
            return False
        logger.info(f"Deploying {version} to {self.service_id}/{self.instance_id}")
        self.instance_stop(graceful=True)
        return self.instance_start(version)

    def _record(self) -> InstanceRecord:
        return InstanceRecord(self.service_id, self.instance_id, self.address, version=self.version)

    def _beat(self) -> None:
        try:
            self.registry.heartbeat(self.service_id, self.instance_id)
        except NotRegisteredError:
            logger.info(f"{self.service_id}/{self.instance_id} lost its registration, re-registering")
            self.registry.register(self._record())

    def _notify(self, running: bool) -> None:
        for listener in self.lifecycle_listeners:
            listener(self, running)


class BackserverInstance(ServiceInstance):
    """
    Forwards each CommandMessage to the broker and acknowledges the caller.

    Holds no per-rover or per-call state; ``handled`` is a metric only.
    """

    def __init__(self, instance_id: str, address: str, clock: SimClock, registry: ServiceRegistry,
                 broker: MessageBroker, config: Optional[ServiceConfig] = None,
                 trace: Optional[TraceLog] = None, version: str = "v1") -> None:
        super().__init__(BACKSERVER, instance_id, address, clock, registry, trace=trace, version=version)
        self.broker = broker
        self.config = config or ServiceConfig()
        self.handled = 0
        self.handle_listeners: List[Callable[["BackserverInstance", CommandMessage], None]] = []

    def handle(self, cmd: CommandMessage, reply: Reply) -> bool:
        """backserver_handle: publish the command and answer after the service latency."""
        if not self.running:
            return False
        receipt = self.broker.publish(command_topic(cmd.rover_id), cmd.encode())
        self.handled += 1
        self.trace.record("handle", instance_id=self.instance_id, rover_id=cmd.rover_id, sequence=cmd.sequence)
        for listener in self.handle_listeners:
            listener(self, cmd)
        response = {"rover_id": cmd.rover_id, "sequence": cmd.sequence, "accepted": receipt.accepted}
        self.clock.schedule(self.config.service_latency, lambda: self._respond(reply, response),
                            f"backserver.{self.instance_id}.respond")
        return True

    def _respond(self, reply: Reply, response: Dict[str, Any]) -> None:
        # a stop between dispatch and response leaves the caller to time out
        if self.running:
            reply(response)


@dataclass
class CycleBatch:
    """Outcomes of one client cycle, filled in as calls complete"""
    cycle: int
    started_at: SimInstant
    expected: int
    outcomes: List[CallOutcome] = field(default_factory=list)
    instances: List[Optional[str]] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.outcomes) == self.expected

    def counts(self) -> Dict[str, int]:
        counts = {kind.value: 0 for kind in OutcomeKind}
        for outcome in self.outcomes:
            counts[outcome.kind.value] += 1
        return counts

    def calls_by_instance(self) -> Dict[str, int]:
        calls: Dict[str, int] = {}
        for outcome, instance_id in zip(self.outcomes, self.instances):
            if outcome.kind is OutcomeKind.SUCCESS and instance_id:
                calls[instance_id] = calls.get(instance_id, 0) + 1
        return calls


@dataclass
class _PendingCall:
    batch: CycleBatch
    cmd: CommandMessage
    started_at: SimInstant
    instance_id: Optional[str] = None
    timeout: Optional[EventHandle] = None
    done: bool = False


class ClientService(ServiceInstance):
    """
    Generates the OTA deliveries.

    Live properties (service id ``client``): ``cycle_ms``,
    ``next_move_direction`` (``ROTATE`` or a Direction) and ``speed_control``.
    """

    def __init__(self, instance_id: str, address: str, clock: SimClock, registry: ServiceRegistry,
                 gateway: Gateway, balancer: RoundRobinBalancer, breaker: CircuitBreaker,
                 config_server: ConfigServer, rover_ids: List[str], config: Optional[ClientConfig] = None,
                 breaker_config: Optional[BreakerConfig] = None, seed: int = 0,
                 trace: Optional[TraceLog] = None) -> None:
        super().__init__(CLIENT, instance_id, address, clock, registry, trace=trace)
        self.gateway = gateway
        self.balancer = balancer
        self.breaker = breaker
        self.config_server = config_server
        self.config = config or ClientConfig()
        self.config.validate()
        self.breaker_config = breaker_config or breaker.config
        self.rover_ids = list(rover_ids)
        self.cycle_ms = self.config.cycle
        self.speed_control = self.config.speed_control
        self.batches: List[CycleBatch] = []
        self._rng = random.Random(f"{seed}:{instance_id}")
        self._offsets = {rover_id: self._rng.randrange(len(ROTATION)) for rover_id in self.rover_ids}
        self._sequences = {rover_id: 0 for rover_id in self.rover_ids}
        self._timer: Optional[Periodic] = None
        self._last_tick: Optional[SimInstant] = None
        config_server.subscribe(CLIENT, self._on_config)
        for key in ("cycle_ms", "speed_control"):
            value = config_server.get_value(CLIENT, key)
            if value is not None:
                self._on_live_int(key, value)

    def instance_start(self, version: Optional[str] = None) -> bool:
        if not super().instance_start(version):
            return False
        self.balancer.start()
        self._timer = self.clock.every(self.cycle_ms, self.client_tick, "client.tick", first_delay=0)
        return True

    def instance_stop(self, graceful: bool = False) -> bool:
        if not super().instance_stop(graceful):
            return False
        self.stop_deliveries()
        return True

    def stop_deliveries(self) -> None:
        """Stop generating cycles while staying registered."""
        self.balancer.stop()
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    def client_tick(self) -> CycleBatch:
        """Dispatch this cycle's commands, spread over the cycle."""
        now = self.clock.now()
        self._last_tick = now
        attempts = [rover_id for _ in range(self.config.commands_per_cycle_per_rover) for rover_id in self.rover_ids]
        batch = CycleBatch(len(self.batches), now, len(attempts))
        self.batches.append(batch)
        self.trace.record("tick", cycle=batch.cycle, attempts=len(attempts))
        spread = self.config.spread_ms(self.cycle_ms)
        logger.debug(f"Cycle {batch.cycle}: {len(attempts)} attempts, spread {spread} ms")
        for index, rover_id in enumerate(attempts):
            if index == 0 or spread == 0:
                self._attempt(batch, rover_id)
            else:
                self.clock.schedule(index * spread, lambda r=rover_id: self._attempt(batch, r),
                                    f"client.attempt.{rover_id}")
        return batch

    def next_command(self, rover_id: str) -> CommandMessage:
        """Build the next CommandMessage for ``rover_id`` from the live configuration."""
        self._sequences[rover_id] += 1
        sequence = self._sequences[rover_id]
        configured = (self.config_server.get_value(CLIENT, "next_move_direction") or ROTATE).upper()
        if configured in Direction.__members__:
            direction = Direction(configured)
        else:
            direction = ROTATION[(self._offsets[rover_id] + sequence - 1) % len(ROTATION)]
        raw_speed = self.config_server.get_value(CLIENT, "speed_control")
        if raw_speed is not None:
            try:
                self.speed_control = parse_live_int("speed_control", raw_speed)
            except ConfigurationError:
                pass  # rejected and logged by _on_config
        return CommandMessage(rover_id, self.speed_control, direction, sequence, self.clock.now())

    def _attempt(self, batch: CycleBatch, rover_id: str) -> None:
        cmd = self.next_command(rover_id)
        decision = self.breaker.allow_request()
        if not decision.proceed:
            self._finish(_PendingCall(batch, cmd, self.clock.now()), OutcomeKind.SHORT_CIRCUITED,
                         fallback=decision.fallback)
            return

        call = _PendingCall(batch, cmd, self.clock.now())
        call.timeout = self.clock.schedule(self.breaker_config.call_timeout, lambda: self._on_timeout(call),
                                           f"client.timeout.{rover_id}")
        tag = {"rover_id": rover_id, "sequence": cmd.sequence, "cycle": batch.cycle}
        try:
            routed = self.gateway.route(BACKSERVER, cmd, lambda response: self._on_reply(call, response), tag)
            call.instance_id = routed.instance_id
        except (NoInstanceAvailableError, NotRoutedError) as e:
            logger.debug(f"Call for {rover_id} failed: {e}")
            call.timeout.cancel()
            self._finish(call, OutcomeKind.FAILURE)

    def _on_reply(self, call: _PendingCall, response: Dict[str, Any]) -> None:
        if call.done:
            return
        call.timeout.cancel()
        self._finish(call, OutcomeKind.SUCCESS, response=response)

    def _on_timeout(self, call: _PendingCall) -> None:
        if call.done:
            return
        self._finish(call, OutcomeKind.TIMEOUT)
        if call.instance_id:
            self.balancer.report_unhealthy(call.instance_id)

    def _finish(self, call: _PendingCall, kind: OutcomeKind, response: Any = None, fallback: Any = None) -> None:
        call.done = True
        now = self.clock.now()
        latency = 0 if kind is OutcomeKind.SHORT_CIRCUITED else now - call.started_at
        outcome = CallOutcome(kind, now, latency)
        call.batch.outcomes.append(outcome)
        call.batch.instances.append(call.instance_id)
        self.trace.record("outcome", outcome=kind.value, rover_id=call.cmd.rover_id, sequence=call.cmd.sequence,
                          instance_id=call.instance_id, cycle=call.batch.cycle, latency_ms=latency)
        self.breaker.record(outcome, response)
        if fallback is not None:
            logger.debug(f"Short-circuited {call.cmd.rover_id}#{call.cmd.sequence}, fallback {fallback!r}")

    def _on_config(self, entry: ConfigEntry) -> None:
        if entry.key in ("cycle_ms", "speed_control"):
            if not self._on_live_int(entry.key, entry.value):
                return
        elif entry.key == "next_move_direction" and entry.value.upper() not in (ROTATE, *Direction.__members__):
            logger.error(f"Unknown direction {entry.value!r}, rotating instead")
        logger.info(f"Client picked up {entry.key}={entry.value!r} (revision {entry.revision})")

    def _on_live_int(self, key: str, value: str) -> bool:
        """Apply an integer property; a rejected value keeps the previous one."""
        try:
            number = parse_live_int(key, value)
        except ConfigurationError as e:
            current = self.cycle_ms if key == "cycle_ms" else self.speed_control
            logger.error(f"Rejected live value: {e}; keeping {key}={current}")
            self.trace.record("config_rejected", key=key, value=value, kept=current)
            return False
        if key == "speed_control":
            self.speed_control = number
        else:
            self._apply_cycle(number)
        return True

    def _apply_cycle(self, cycle_ms: int) -> None:
        self.cycle_ms = cycle_ms
        if self._timer is not None:
            # next tick honours the new cycle, counted from the last one
            self._timer.cancel()
            base = self._last_tick if self._last_tick is not None else self.clock.now()
            first = max(0, base + cycle_ms - self.clock.now())
            self._timer = self.clock.every(cycle_ms, self.client_tick, "client.tick", first_delay=first)
