"""
Edge router: sole ingress for service calls, dispatching by service id.
"""
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Protocol

from core.balancer import RoundRobinBalancer
from core.trace import NullTrace, TraceLog
from exceptions.sim_exceptions import NoInstanceAvailableError, NotRoutedError

logger = logging.getLogger(__name__)

Reply = Callable[[Any], None]


class Transport(Protocol):
    def deliver(self, address: str, request: Any, reply: Reply) -> bool:
        ...


@dataclass
class Route:
    service_id: str
    resolver: RoundRobinBalancer


@dataclass(frozen=True)
class RoutedCall:
    service_id: str
    instance_id: str
    address: str
    delivered: bool


class Gateway:
    """Routes requests to an instance picked by the route's balancer and counts usage per service."""

    def __init__(self, transport: Transport, trace: Optional[TraceLog] = None) -> None:
        self.transport = transport
        self.trace = trace if trace is not None else NullTrace()
        self._routes: Dict[str, Route] = {}
        self._usage: Counter = Counter()

    def add_route(self, service_id: str, resolver: RoundRobinBalancer) -> Route:
        """Route service_id through resolver."""
        route = Route(service_id, resolver)
        self._routes[service_id] = route
        logger.info(f"Route added: {service_id} -> balancer of {resolver.owner}")
        return route

    def route(self, service_id: str, request: Any, reply: Reply, tag: Optional[Dict[str, Any]] = None) -> RoutedCall:
        """
        Forward ``request`` to an instance of ``service_id``.

        Raises:
            NotRoutedError: no route for service_id
            NoInstanceAvailableError: the route's balancer has nothing healthy
        """
        route = self._routes.get(service_id)
        if route is None:
            logger.warning(f"No route for {service_id!r}")
            raise NotRoutedError(service_id, sorted(self._routes))

        self._usage[service_id] += 1
        tag = tag or {}
        try:
            instance = route.resolver.choose()
        except NoInstanceAvailableError:
            self.trace.record("route", service_id=service_id, instance_id=None, **tag)
            raise

        self.trace.record("route", service_id=service_id, instance_id=instance.instance_id, **tag)
        delivered = self.transport.deliver(instance.address, request, reply)
        logger.debug(f"Routed {service_id} -> {instance.instance_id} ({'delivered' if delivered else 'lost'})")
        return RoutedCall(service_id, instance.instance_id, instance.address, delivered)

    def usage(self) -> Dict[str, int]:
        """Requests per routed service id."""
        return {service_id: self._usage[service_id] for service_id in sorted(self._usage)}
