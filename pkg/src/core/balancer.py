"""
Client-side round-robin load balancing over a periodically refreshed server list.
"""
import logging
from typing import List, Optional, Set

from config import BalancerConfig
from core.registry import InstanceRecord, ServiceRegistry
from core.simtime import Periodic, SimClock, SimInstant
from core.trace import NullTrace, TraceLog
from exceptions.sim_exceptions import NoInstanceAvailableError, RegistryUnavailableError

logger = logging.getLogger(__name__)


class RoundRobinBalancer:
    """
    Round Robin selection over the latest registry snapshot.

    Attributes:
        server_list: instances from the most recent successful fetch
        cursor: index of the next candidate in server_list
        last_refresh: instant of the most recent successful fetch
    """

    def __init__(self, clock: SimClock, registry: ServiceRegistry, config: Optional[BalancerConfig] = None,
                 trace: Optional[TraceLog] = None, owner: str = "client") -> None:
        self.clock = clock
        self.registry = registry
        self.config = config or BalancerConfig()
        self.config.validate()
        self.trace = trace if trace is not None else NullTrace()
        self.owner = owner
        self.server_list: List[InstanceRecord] = []
        self.cursor = 0
        self.last_refresh: Optional[SimInstant] = None
        self._unhealthy: Set[str] = set()
        self._timer: Optional[Periodic] = None

    @property
    def service_id(self) -> str:
        return self.config.source_service_id

    def start(self) -> None:
        """Fetch now and then every refresh_interval."""
        if self._timer is None:
            self.refresh()
            self._timer = self.clock.every(self.config.refresh_interval, self.refresh,
                                           f"balancer.{self.owner}.refresh")

    def stop(self) -> None:
        """Stop the refresh timer; the current list stays in place."""
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    def refresh(self) -> List[InstanceRecord]:
        """Replace the server list with the registry's current view of the service."""
        try:
            fetched = self.registry.fetch_instances(self.service_id)
        except RegistryUnavailableError:
            logger.warning(f"Balancer {self.owner}: registry unreachable, keeping {len(self.server_list)} servers")
            return list(self.server_list)

        old_members = [(r.instance_id, r.address) for r in self.server_list]
        new_members = [(r.instance_id, r.address) for r in fetched]
        self.server_list = fetched
        self._unhealthy.clear()
        self.last_refresh = self.clock.now()
        if new_members != old_members:
            self.cursor = 0
            logger.debug(f"Balancer {self.owner}: server list now {[m[0] for m in new_members]}")
            self.trace.record("refresh", owner=self.owner, service_id=self.service_id,
                              servers=[m[0] for m in new_members])
        return list(self.server_list)

    def choose(self) -> InstanceRecord:
        """Next healthy server in rotation; never blocks."""
        size = len(self.server_list)
        for step in range(size):
            index = (self.cursor + step) % size
            candidate = self.server_list[index]
            if candidate.instance_id not in self._unhealthy:
                self.cursor = (index + 1) % size
                return candidate
        raise NoInstanceAvailableError(self.service_id, size)

    def report_unhealthy(self, instance_id: str) -> bool:
        """Skip ``instance_id`` until the next refresh. Unknown ids are ignored."""
        if instance_id not in {r.instance_id for r in self.server_list}:
            return False
        if instance_id not in self._unhealthy:
            logger.info(f"Balancer {self.owner}: skipping unhealthy {instance_id}")
            self._unhealthy.add(instance_id)
        return True

    def healthy(self) -> List[str]:
        """Ids in the server list not marked unhealthy since the last refresh."""
        return [r.instance_id for r in self.server_list if r.instance_id not in self._unhealthy]
