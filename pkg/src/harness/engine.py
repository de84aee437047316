"""
Scenario engine: wires every component onto one virtual clock, replays a
script and collects the MetricsReport.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

from config import AppConfig
from core.balancer import RoundRobinBalancer
from core.breaker import CircuitBreaker
from core.config_server import ConfigServer
from core.fleet import Fleet, MessageBroker, RoverState, TelemetrySink
from core.gateway import Gateway
from core.registry import ServiceRegistry
from core.services import BACKSERVER, BackserverInstance, ClientService, Network
from core.simtime import SimClock
from core.trace import TraceLog
from harness.metrics import MetricsReport, RecoveryTracker, UptimeTracker, cycle_row
from harness.scenario import ScenarioScript, ScriptEvent

logger = logging.getLogger(__name__)

CLIENT_INSTANCE_ID = "client-1"


@dataclass
class RunResult:
    report: MetricsReport
    trace: TraceLog
    registry_dump: List[Dict[str, object]]
    rover_states: Dict[str, RoverState]
    instance_ids: List[str]


class Simulation:
    """
    One run's worth of components.

    Backservers are named b1..bN and listen on consecutive ports; the
    client is the single instance ``client-1``.
    """

    def __init__(self, script: ScenarioScript, config: Optional[AppConfig] = None) -> None:
        self.config = config or AppConfig()
        self.config.validate()
        self.script = script
        self.seed = self.config.SEED
        self.clock = SimClock(time_scale=self.config.TIME_SCALE)
        self.trace = TraceLog(self.clock)

        self.registry = ServiceRegistry(self.clock, self.config.registry, self.trace)
        self.config_server = ConfigServer(self.clock, self.trace)
        if self.config.BOOT_CONFIG_PATH:
            self.config_server.load_file(self.config.BOOT_CONFIG_PATH)
        self.broker = MessageBroker(self.clock, self.config.broker, self.trace)
        self.client_config = replace(self.config.client, cycle=script.cycle, fleet_size=self.config.FLEET_SIZE)
        self.fleet = Fleet(self.clock, self.broker, self.client_config.fleet_size, self.seed, self.trace)
        self.sink = TelemetrySink().bind(self.broker)

        self.network = Network()
        services = self.config.services
        self.backservers: Dict[str, BackserverInstance] = {}
        for index in range(1, services.backserver_count + 1):
            instance_id = f"b{index}"
            address = f"{services.host}:{services.base_port + index - 1}"
            instance = BackserverInstance(instance_id, address, self.clock, self.registry, self.broker,
                                          services, self.trace)
            self.network.bind(address, instance)
            self.backservers[instance_id] = instance
        self.instance_ids = list(self.backservers)

        self.gateway = Gateway(self.network, self.trace)
        self.balancer = RoundRobinBalancer(self.clock, self.registry, self.config.balancer, self.trace,
                                           owner=CLIENT_INSTANCE_ID)
        self.breaker = CircuitBreaker(self.clock, self.config.breaker, f"{CLIENT_INSTANCE_ID}->{BACKSERVER}",
                                      self.trace)
        self.gateway.add_route(self.balancer.service_id, self.balancer)
        self.client = ClientService(CLIENT_INSTANCE_ID, f"{services.host}:{services.base_port - 1}", self.clock,
                                    self.registry, self.gateway, self.balancer, self.breaker, self.config_server,
                                    list(self.fleet.rovers), self.client_config, self.config.breaker, self.seed,
                                    self.trace)

        self.uptime = UptimeTracker(self.clock, self.instance_ids)
        self.recovery = RecoveryTracker(self.clock)
        for instance in self.backservers.values():
            instance.lifecycle_listeners += [self.uptime.on_lifecycle, self.recovery.on_lifecycle]
            instance.handle_listeners.append(self.recovery.on_handle)

    def known_instances(self) -> List[str]:
        return self.instance_ids + [CLIENT_INSTANCE_ID]

    def run(self) -> RunResult:
        """Replay the script to its end and collect the report."""
        self.script.validate(self.known_instances(), self.fleet.rovers)
        logger.info(f"Running {self.script.name!r}: {self.script.duration} ms, seed {self.seed}, "
                    f"{len(self.backservers)} backservers, {len(self.fleet.rovers)} rovers")

        # script and end events are queued first so they precede periodic work at equal instants
        for event in self.script.events:
            self.clock.schedule_at(event.at, lambda e=event: self._apply(e), f"script.{event.action}")
        self.clock.schedule_at(self.script.duration, self._finish, "script.end")

        self.registry.start()
        for instance in self.backservers.values():
            instance.instance_start()
        self.client.instance_start()
        self.fleet.start(self.client.cycle_ms)

        fired = self.clock.run_until(self.script.duration)
        logger.info(f"Run finished after {fired} events, {len(self.trace)} trace entries")
        return RunResult(self._report(), self.trace, self.registry.dump(), self.fleet.states(),
                         list(self.instance_ids))

    def _apply(self, event: ScriptEvent) -> None:
        logger.info(f"[{event.at / 60000:05.1f} min] {event.action} {', '.join(event.instances)}".rstrip())
        if event.action == "config":
            self.config_server.set_config(event.service_id, event.key, event.value)
        elif event.action == "registry_down":
            self.registry.set_available(False)
        elif event.action == "registry_up":
            self.registry.set_available(True)
        elif event.action in ("detach", "attach"):
            for rover_id in event.instances:
                (self.broker.detach if event.action == "detach" else self.broker.attach)(rover_id)
        else:
            for instance_id in event.instances:
                instance = self.backservers.get(instance_id) or self.client
                if event.action == "start":
                    instance.instance_start()
                elif event.action == "stop":
                    instance.instance_stop(graceful=not self.config.CRASH_MODE)
                else:
                    instance.deploy(event.version)

    def _finish(self) -> None:
        self.trace.record("end")
        self.client.stop_deliveries()
        self.fleet.stop()
        self.registry.stop()

    def _report(self) -> MetricsReport:
        self.uptime.close(self.script.duration)
        return MetricsReport(
            scenario=self.script.name,
            seed=self.seed,
            duration_ms=self.script.duration,
            cycle_ms=self.script.cycle,
            uptime_histogram_ms=dict(self.uptime.histogram),
            instance_uptime_ms=dict(self.uptime.uptime),
            per_instance_calls={i: b.handled for i, b in self.backservers.items()},
            circuit_breaker=self.breaker.tallies(),
            gateway_usage=self.gateway.usage(),
            drops=self.broker.dropped(),
            commands_delivered=self.broker.delivered("command"),
            telemetry_received=self.sink.total,
            quickest_recovery_ms=self.recovery.quickest,
            cycles=[cycle_row(b.cycle, b.counts(), b.calls_by_instance()) for b in self.client.batches],
        )


def run(script: ScenarioScript, seed: int = 0, config: Optional[AppConfig] = None) -> RunResult:
    """Run ``script`` with ``seed`` on a fresh simulation."""
    config = config or AppConfig()
    config.SEED = seed
    return Simulation(script, config).run()
