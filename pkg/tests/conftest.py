import pytest

from config import MINUTE_MS, BreakerConfig, ClientConfig
from core.balancer import RoundRobinBalancer
from core.breaker import CircuitBreaker
from core.config_server import ConfigServer
from core.fleet import Fleet, MessageBroker
from core.gateway import Gateway
from core.registry import InstanceRecord, ServiceRegistry
from core.services import BackserverInstance, ClientService, Network
from core.simtime import SimClock
from core.trace import TraceLog


@pytest.fixture
def clock():
    return SimClock()


@pytest.fixture
def trace(clock):
    return TraceLog(clock)


@pytest.fixture
def registry(clock, trace):
    return ServiceRegistry(clock, trace=trace)


def backserver_record(instance_id: str, port: int = 8081) -> InstanceRecord:
    return InstanceRecord("backserver", instance_id, f"10.0.0.1:{port}")


class World:
    """Hand-wired components for service-level tests"""

    def __init__(self, backservers=("b1", "b2"), fleet_size=2, spread_ms=None, breaker_config=None):
        self.clock = SimClock()
        self.trace = TraceLog(self.clock)
        self.registry = ServiceRegistry(self.clock, trace=self.trace)
        self.broker = MessageBroker(self.clock, trace=self.trace)
        self.fleet = Fleet(self.clock, self.broker, fleet_size, trace=self.trace)
        self.network = Network()
        self.backservers = {}
        for index, instance_id in enumerate(backservers):
            address = f"10.0.0.1:{8081 + index}"
            instance = BackserverInstance(instance_id, address, self.clock, self.registry, self.broker,
                                          trace=self.trace)
            self.network.bind(address, instance)
            self.backservers[instance_id] = instance
        self.gateway = Gateway(self.network, self.trace)
        self.balancer = RoundRobinBalancer(self.clock, self.registry, trace=self.trace)
        self.gateway.add_route("backserver", self.balancer)
        self.breaker = CircuitBreaker(self.clock, breaker_config or BreakerConfig(), trace=self.trace)
        self.config_server = ConfigServer(self.clock, self.trace)
        client_config = ClientConfig(cycle=MINUTE_MS, fleet_size=fleet_size, dispatch_spread_ms=spread_ms)
        self.client = ClientService("client-1", "10.0.0.1:8080", self.clock, self.registry, self.gateway,
                                    self.balancer, self.breaker, self.config_server, list(self.fleet.rovers),
                                    client_config, trace=self.trace)

    def start(self):
        for instance in self.backservers.values():
            instance.instance_start()
        self.client.instance_start()
        return self


@pytest.fixture
def world():
    return World().start()
