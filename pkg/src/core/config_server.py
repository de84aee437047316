"""
Externalised, live-reloadable configuration keyed by service id.
"""
import json
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from core.simtime import SimClock
from core.trace import NullTrace, TraceLog
from exceptions.sim_exceptions import ConfigNotFoundError, ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfigEntry:
    service_id: str
    key: str
    value: str
    revision: int


Subscriber = Callable[[ConfigEntry], None]


class ConfigServer:
    """In-memory property store; subscribers hear about changes on the next loop turn."""

    def __init__(self, clock: SimClock, trace: Optional[TraceLog] = None) -> None:
        self.clock = clock
        self.trace = trace if trace is not None else NullTrace()
        self._entries: Dict[Tuple[str, str], ConfigEntry] = {}
        self._subscribers: Dict[str, List[Subscriber]] = {}

    def get_config(self, service_id: str, key: str) -> ConfigEntry:
        """Current entry with its revision."""
        entry = self._entries.get((service_id, key))
        if entry is None:
            raise ConfigNotFoundError(service_id, key)
        return entry

    def get_value(self, service_id: str, key: str, default: Optional[str] = None) -> Optional[str]:
        """Current value, or default when the key was never set."""
        entry = self._entries.get((service_id, key))
        return entry.value if entry else default

    def set_config(self, service_id: str, key: str, value: str) -> int:
        """Store ``value`` under a new revision (even when unchanged) and notify subscribers."""
        previous = self._entries.get((service_id, key))
        entry = ConfigEntry(service_id, key, str(value), previous.revision + 1 if previous else 1)
        self._entries[(service_id, key)] = entry
        logger.info(f"Config {service_id}.{key} = {entry.value!r} (revision {entry.revision})")
        self.trace.record("config", service_id=service_id, key=key, value=entry.value, revision=entry.revision)
        for subscriber in self._subscribers.get(service_id, []):
            self.clock.schedule(0, lambda s=subscriber: s(entry), f"config.notify.{service_id}")
        return entry.revision

    def subscribe(self, service_id: str, subscriber: Subscriber) -> None:
        """Call subscriber on the next turn after each change for service_id."""
        self._subscribers.setdefault(service_id, []).append(subscriber)

    def entries(self, service_id: Optional[str] = None) -> List[ConfigEntry]:
        """All entries, or one service's, sorted by (service_id, key)."""
        return [e for k, e in sorted(self._entries.items()) if service_id is None or k[0] == service_id]

    def load_dict(self, properties: Dict[str, str]) -> int:
        """Load ``{"service_id.key": value}`` pairs."""
        for dotted, value in sorted(properties.items()):
            service_id, sep, key = dotted.partition(".")
            if not sep or not service_id or not key:
                raise ConfigurationError("Config keys must look like 'service_id.key'", "boot_config", dotted)
            self.set_config(service_id, key, value)
        return len(properties)

    def load_file(self, path: str) -> int:
        """Load a boot configuration JSON file."""
        try:
            with open(path, "r", encoding="utf-8") as file:
                properties = json.load(file)
        except FileNotFoundError:
            raise ConfigurationError("Boot config file not found", "boot_config", path)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Boot config is not valid JSON: {e}", "boot_config", path)
        if not isinstance(properties, dict):
            raise ConfigurationError("Boot config must be a JSON object", "boot_config", path)
        count = self.load_dict({k: str(v) for k, v in properties.items()})
        logger.info(f"Loaded {count} properties from {path}")
        return count
