"""
Service registry and discovery.

Instances register their address, renew a lease by heartbeating, and are
evicted once ``heartbeat_interval * eviction_multiplier`` passes without one.
Discovery clients read UP instances through ``fetch_instances``.
"""

import logging
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

from config import RegistryConfig
from core.simtime import Periodic, SimClock, SimInstant
from core.trace import NullTrace, TraceLog
from exceptions.sim_exceptions import NotRegisteredError, RegistrationError, RegistryUnavailableError

logger = logging.getLogger(__name__)

_ADDRESS = re.compile(r"^[A-Za-z0-9](?:[A-Za-z0-9.-]*[A-Za-z0-9])?:(\d{1,5})$")
_TOKEN = re.compile(r"^[a-z0-9][a-z0-9_-]*$")


class InstanceStatus(str, Enum):
    UP = "UP"
    DOWN = "DOWN"


@dataclass
class InstanceRecord:
    """A registered service instance and its heartbeat lease"""
    service_id: str
    instance_id: str
    address: str
    status: InstanceStatus = InstanceStatus.UP
    registered_at: SimInstant = 0
    last_heartbeat: SimInstant = 0
    version: str = "v1"

    @property
    def key(self) -> Tuple[str, str]:
        return (self.service_id, self.instance_id)

    def to_dict(self) -> Dict[str, object]:
        return {
            "service_id": self.service_id,
            "instance_id": self.instance_id,
            "address": self.address,
            "status": self.status.value,
            "registered_at_ms": self.registered_at,
            "last_heartbeat_ms": self.last_heartbeat,
            "version": self.version,
        }


def validate_address(address: str) -> bool:
    """Check a host:port string"""
    match = _ADDRESS.match(address or "")
    return bool(match) and 0 < int(match.group(1)) <= 65535


class ServiceRegistry:
    """
    In-process registry shared by every service of one run.

    The registry never lists itself (register-with-registry is off), so
    records carrying ``SELF_SERVICE_ID`` are refused quietly.
    """

    SELF_SERVICE_ID = "registry"

    def __init__(self, clock: SimClock, config: Optional[RegistryConfig] = None,
                 trace: Optional[TraceLog] = None) -> None:
        self.clock = clock
        self.config = config or RegistryConfig()
        self.config.validate()
        self.trace = trace if trace is not None else NullTrace()
        self._records: Dict[Tuple[str, str], InstanceRecord] = {}
        self._available = True
        self._sweeper: Optional[Periodic] = None

    def start(self) -> None:
        """Begin sweeping expired leases every heartbeat interval."""
        if self._sweeper is None:
            self._sweeper = self.clock.every(self.config.heartbeat_interval, self.sweep_expired, "registry.sweep")

    def stop(self) -> None:
        if self._sweeper is not None:
            self._sweeper.cancel()
            self._sweeper = None

    @property
    def available(self) -> bool:
        return self._available

    def set_available(self, available: bool) -> None:
        """Toggle reachability for discovery reads."""
        if available != self._available:
            logger.warning(f"Registry {'reachable' if available else 'unreachable'}")
            self.trace.record("registry_available", available=available)
        self._available = available

    def register(self, record: InstanceRecord) -> Optional[InstanceRecord]:
        """Upsert ``record`` with status UP and a fresh lease."""
        if not record.service_id or not _TOKEN.match(record.service_id):
            raise RegistrationError("service_id must be a non-empty lowercase token",
                                    record.service_id, record.instance_id)
        if not record.instance_id:
            raise RegistrationError("instance_id cannot be empty", record.service_id, record.instance_id)
        if not validate_address(record.address):
            raise RegistrationError("Malformed address", record.service_id, record.instance_id, record.address)
        if record.service_id == self.SELF_SERVICE_ID:
            logger.debug("Registry does not register with itself")
            return None

        now = self.clock.now()
        stored = replace(record, status=InstanceStatus.UP, registered_at=now, last_heartbeat=now)
        refreshed = stored.key in self._records
        self._records[stored.key] = stored
        logger.info(f"Registered {stored.service_id}/{stored.instance_id} at {stored.address} "
                    f"({stored.version}){' [refresh]' if refreshed else ''}")
        self.trace.record("register", service_id=stored.service_id, instance_id=stored.instance_id,
                          address=stored.address, version=stored.version)
        return replace(stored)

    def heartbeat(self, service_id: str, instance_id: str) -> InstanceRecord:
        """Renew the lease; unknown instances must re-register."""
        record = self._records.get((service_id, instance_id))
        if record is None:
            raise NotRegisteredError(service_id, instance_id)
        record.last_heartbeat = self.clock.now()
        if record.status is not InstanceStatus.UP:
            logger.info(f"{service_id}/{instance_id} back UP on heartbeat")
            record.status = InstanceStatus.UP
        return replace(record)

    def deregister(self, service_id: str, instance_id: str) -> bool:
        """Remove the record. Returns False when nothing was there (still an acknowledgment)."""
        record = self._records.pop((service_id, instance_id), None)
        if record is None:
            return False
        logger.info(f"Deregistered {service_id}/{instance_id}")
        self.trace.record("deregister", service_id=service_id, instance_id=instance_id)
        return True

    def set_status(self, service_id: str, instance_id: str, status: InstanceStatus) -> InstanceRecord:
        """Override the status of a registered instance; DOWN records are never fetched."""
        record = self._records.get((service_id, instance_id))
        if record is None:
            raise NotRegisteredError(service_id, instance_id)
        record.status = InstanceStatus(status)
        self.trace.record("status", service_id=service_id, instance_id=instance_id, status=record.status.value)
        return replace(record)

    def fetch_instances(self, service_id: str) -> List[InstanceRecord]:
        """Snapshot of UP instances with a live lease, sorted by instance_id."""
        if not self._available:
            raise RegistryUnavailableError()
        now = self.clock.now()
        lease = self.config.lease_ms
        return [
            replace(r)
            for (sid, _), r in sorted(self._records.items())
            if sid == service_id and r.status is InstanceStatus.UP and now - r.last_heartbeat <= lease
        ]

    def sweep_expired(self) -> List[str]:
        """Evict every record whose lease has run out."""
        now = self.clock.now()
        lease = self.config.lease_ms
        expired = [key for key, r in sorted(self._records.items()) if now - r.last_heartbeat > lease]
        for service_id, instance_id in expired:
            del self._records[(service_id, instance_id)]
            logger.warning(f"Evicted {service_id}/{instance_id}: no heartbeat for more than {lease} ms")
            self.trace.record("evict", service_id=service_id, instance_id=instance_id)
        return [instance_id for _, instance_id in expired]

    def get(self, service_id: str, instance_id: str) -> Optional[InstanceRecord]:
        record = self._records.get((service_id, instance_id))
        return replace(record) if record else None

    def __len__(self) -> int:
        return len(self._records)

    def dump(self) -> List[Dict[str, object]]:
        """Registry state as JSON-ready records."""
        return [r.to_dict() for _, r in sorted(self._records.items())]
