from dataclasses import dataclass, field
from typing import Dict, Any, Optional, Tuple

from exceptions.sim_exceptions import ConfigurationError

MINUTE_MS = 60_000

# live client properties read as integers, with inclusive bounds
LIVE_CLIENT_LIMITS: Dict[str, Tuple[int, Optional[int]]] = {
    "cycle_ms": (1, None),
    "speed_control": (0, 100),
}


def parse_live_int(key: str, value: Any) -> int:
    """
    Parse a live client property.

    Raises:
        ConfigurationError: when the value is not an integer within the key's bounds
    """
    low, high = LIVE_CLIENT_LIMITS[key]
    try:
        number = int(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key} must be an integer", f"client.{key}", value)
    if number < low or (high is not None and number > high):
        bounds = f"at least {low}" if high is None else f"within {low}-{high}"
        raise ConfigurationError(f"{key} must be {bounds}", f"client.{key}", value)
    return number


@dataclass
class RegistryConfig:
    """Heartbeat lease settings for the service registry"""
    heartbeat_interval: int = 2_000
    eviction_multiplier: int = 3

    @property
    def lease_ms(self) -> int:
        return self.heartbeat_interval * self.eviction_multiplier

    def validate(self) -> None:
        if self.heartbeat_interval <= 0:
            raise ConfigurationError("heartbeat_interval must be positive", "heartbeat_interval",
                                     self.heartbeat_interval)
        if self.eviction_multiplier < 1:
            raise ConfigurationError("eviction_multiplier must be at least 1", "eviction_multiplier",
                                     self.eviction_multiplier)


@dataclass
class BalancerConfig:
    """Client-side balancer settings"""
    refresh_interval: int = 2_000
    source_service_id: str = "backserver"

    def validate(self) -> None:
        if self.refresh_interval <= 0:
            raise ConfigurationError("refresh_interval must be positive", "refresh_interval", self.refresh_interval)
        if not self.source_service_id:
            raise ConfigurationError("source_service_id cannot be empty", "source_service_id",
                                     self.source_service_id)


@dataclass
class BreakerConfig:
    """Circuit breaker thresholds (durations in simulated ms)"""
    sleep_window: int = 5_000
    request_volume_threshold: int = 20
    error_threshold_pct: float = 50.0
    rolling_window: int = 10_000
    call_timeout: int = 1_000
    half_open_permits: int = 1

    def validate(self) -> None:
        for name in ("sleep_window", "request_volume_threshold", "rolling_window", "call_timeout",
                     "half_open_permits"):
            value = getattr(self, name)
            if value <= 0:
                raise ConfigurationError(f"{name} must be positive", name, value)
        if not 0 < self.error_threshold_pct <= 100:
            raise ConfigurationError("error_threshold_pct must be in (0, 100]", "error_threshold_pct",
                                     self.error_threshold_pct)
        # every call settles before the breaker can go half-open, so only the probe decides that state
        if self.call_timeout >= self.sleep_window:
            raise ConfigurationError("call_timeout must be shorter than sleep_window", "call_timeout",
                                     self.call_timeout)


@dataclass
class ClientConfig:
    """OTA delivery cadence of the Client service"""
    cycle: int = MINUTE_MS
    fleet_size: int = 40
    commands_per_cycle_per_rover: int = 1
    # None spreads the batch evenly over the cycle; 0 fires it all at the tick
    dispatch_spread_ms: Optional[int] = None
    speed_control: int = 50

    def spread_ms(self, cycle_ms: Optional[int] = None) -> int:
        if self.dispatch_spread_ms is not None:
            return self.dispatch_spread_ms
        attempts = self.fleet_size * self.commands_per_cycle_per_rover
        return (cycle_ms or self.cycle) // attempts

    def validate(self) -> None:
        if self.cycle <= 0:
            raise ConfigurationError("cycle must be positive", "cycle", self.cycle)
        if self.fleet_size < 1:
            raise ConfigurationError("fleet_size must be at least 1", "fleet_size", self.fleet_size)
        if self.commands_per_cycle_per_rover < 1:
            raise ConfigurationError("commands_per_cycle_per_rover must be at least 1",
                                     "commands_per_cycle_per_rover", self.commands_per_cycle_per_rover)
        if self.dispatch_spread_ms is not None and self.dispatch_spread_ms < 0:
            raise ConfigurationError("dispatch_spread_ms cannot be negative", "dispatch_spread_ms",
                                     self.dispatch_spread_ms)
        if not 0 <= self.speed_control <= 100:
            raise ConfigurationError("speed_control must be within 0-100", "speed_control", self.speed_control)


@dataclass
class BrokerConfig:
    """Message broker delivery settings"""
    delivery_delay: int = 50

    def validate(self) -> None:
        if self.delivery_delay < 0:
            raise ConfigurationError("delivery_delay cannot be negative", "delivery_delay", self.delivery_delay)


@dataclass
class ServiceConfig:
    """Backserver fleet settings"""
    backserver_count: int = 4
    base_port: int = 8081
    host: str = "10.0.0.1"
    service_latency: int = 20

    def validate(self) -> None:
        if self.backserver_count < 1:
            raise ConfigurationError("backserver_count must be at least 1", "backserver_count",
                                     self.backserver_count)
        if self.service_latency < 0:
            raise ConfigurationError("service_latency cannot be negative", "service_latency",
                                     self.service_latency)


@dataclass
class AppConfig:
    """Application configuration"""
    DEBUG: bool = False
    SEED: int = 0
    TIME_SCALE: float = 0.0
    FLEET_SIZE: int = 40
    CRASH_MODE: bool = True
    OUT_DIR: str = "./out"
    BOOT_CONFIG_PATH: Optional[str] = None
    WRITE_CSV: bool = True
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    balancer: BalancerConfig = field(default_factory=BalancerConfig)
    breaker: BreakerConfig = field(default_factory=BreakerConfig)
    client: ClientConfig = field(default_factory=ClientConfig)
    broker: BrokerConfig = field(default_factory=BrokerConfig)
    services: ServiceConfig = field(default_factory=ServiceConfig)

    def validate(self) -> None:
        if self.TIME_SCALE < 0:
            raise ConfigurationError("TIME_SCALE cannot be negative", "TIME_SCALE", self.TIME_SCALE)
        if self.SEED < 0:
            raise ConfigurationError("SEED must be an unsigned integer", "SEED", self.SEED)
        if self.FLEET_SIZE < 1:
            raise ConfigurationError("FLEET_SIZE must be at least 1", "FLEET_SIZE", self.FLEET_SIZE)
        for section in (self.registry, self.balancer, self.breaker, self.client, self.broker, self.services):
            section.validate()

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> 'AppConfig':
        return cls(**{
            k: v for k, v in config_dict.items()
            if k in cls.__annotations__
        })
