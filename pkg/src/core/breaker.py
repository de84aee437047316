"""
Circuit breaker guarding a client -> service call path.

Closed until the rolling window holds at least ``request_volume_threshold``
outcomes with an error rate at or above ``error_threshold_pct``; Open
short-circuits with a fallback for ``sleep_window``; HalfOpen lets
``half_open_permits`` probes through and closes on the first probe success.
"""

import logging
from collections import Counter, deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Deque, Dict, List, Optional

from config import BreakerConfig
from core.simtime import SimClock, SimInstant
from core.trace import NullTrace, TraceLog

logger = logging.getLogger(__name__)

UNAVAILABLE = "UNAVAILABLE"


class OutcomeKind(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"
    SHORT_CIRCUITED = "short_circuited"

    @property
    def is_error(self) -> bool:
        return self in (OutcomeKind.FAILURE, OutcomeKind.TIMEOUT)


class BreakerMode(str, Enum):
    CLOSED = "closed"
    OPEN = "open"
    HALF_OPEN = "half_open"


@dataclass(frozen=True)
class CallOutcome:
    kind: OutcomeKind
    at: SimInstant
    latency: int = 0

    def __post_init__(self) -> None:
        if self.kind is OutcomeKind.SHORT_CIRCUITED and self.latency != 0:
            raise ValueError("Short-circuited outcomes have no latency")


@dataclass(frozen=True)
class Decision:
    proceed: bool
    fallback: Any = None


PROCEED = Decision(True)

StateListener = Callable[["CircuitBreaker", BreakerMode, BreakerMode], None]


class CircuitBreaker:
    """
    One breaker per (client, target service) pair.

    Attributes:
        mode: current BreakerMode
        opened_at: instant of the last Closed/HalfOpen -> Open transition
        permits_left: probes still allowed while HalfOpen
        window: outcomes newer than rolling_window, oldest first
        cached_response: payload of the latest successful call
    """

    def __init__(self, clock: SimClock, config: Optional[BreakerConfig] = None, name: str = "breaker",
                 trace: Optional[TraceLog] = None, listeners: Optional[List[StateListener]] = None) -> None:
        self.clock = clock
        self.config = config or BreakerConfig()
        self.config.validate()
        self.name = name
        self.trace = trace if trace is not None else NullTrace()
        self.listeners: List[StateListener] = list(listeners or [])
        self.mode = BreakerMode.CLOSED
        self.opened_at: Optional[SimInstant] = None
        self.permits_left = 0
        self.window: Deque[CallOutcome] = deque()
        self.cached_response: Any = None
        self._tallies: Counter = Counter()

    def allow_request(self) -> Decision:
        """Decide whether the next call may touch the network."""
        if self.mode is BreakerMode.CLOSED:
            return PROCEED
        if self.mode is BreakerMode.OPEN:
            if self.clock.now() - self.opened_at < self.config.sleep_window:
                return self._short_circuit()
            self._transition(BreakerMode.HALF_OPEN)
            self.permits_left = self.config.half_open_permits
        if self.permits_left > 0:
            self.permits_left -= 1
            return PROCEED
        return self._short_circuit()

    def fallback(self) -> Any:
        """Latest cached response, or the unavailable response code."""
        return self.cached_response if self.cached_response is not None else UNAVAILABLE

    def record(self, outcome: CallOutcome, response: Any = None) -> BreakerMode:
        """Account for a finished call and apply the state rules."""
        self._tallies[outcome.kind] += 1
        if outcome.kind is OutcomeKind.SHORT_CIRCUITED:
            return self.mode
        if outcome.kind is OutcomeKind.SUCCESS and response is not None:
            self.cached_response = response

        self.window.append(outcome)
        self._prune()

        if self.mode is BreakerMode.HALF_OPEN:
            if outcome.kind is OutcomeKind.SUCCESS:
                self.window.clear()
                self._transition(BreakerMode.CLOSED)
            else:
                self._open()
        elif self.mode is BreakerMode.CLOSED and self._should_trip():
            self._open()
        return self.mode

    def tallies(self) -> Dict[str, int]:
        """Lifetime outcome counts, including short-circuited calls."""
        return {kind.value: self._tallies[kind] for kind in OutcomeKind}

    def error_rate(self) -> float:
        if not self.window:
            return 0.0
        errors = sum(1 for o in self.window if o.kind.is_error)
        return 100.0 * errors / len(self.window)

    def _should_trip(self) -> bool:
        return (len(self.window) >= self.config.request_volume_threshold
                and self.error_rate() >= self.config.error_threshold_pct)

    def _prune(self) -> None:
        horizon = self.clock.now() - self.config.rolling_window
        while self.window and self.window[0].at <= horizon:
            self.window.popleft()

    def _open(self) -> None:
        self.opened_at = self.clock.now()
        self.permits_left = 0
        self._transition(BreakerMode.OPEN)

    def _short_circuit(self) -> Decision:
        return Decision(False, self.fallback())

    def _transition(self, new_mode: BreakerMode) -> None:
        old_mode = self.mode
        if old_mode is new_mode:
            return
        self.mode = new_mode
        log = logger.warning if new_mode is BreakerMode.OPEN else logger.info
        log(f"Circuit {self.name}: {old_mode.value} -> {new_mode.value} "
            f"(window={len(self.window)}, error_rate={self.error_rate():.1f}%)")
        self.trace.record("breaker", name=self.name, mode=new_mode.value)
        for listener in self.listeners:
            try:
                listener(self, old_mode, new_mode)
            except Exception:
                logger.debug("Breaker listener failed", exc_info=True)
