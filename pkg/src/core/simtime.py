"""
Virtual clock and deterministic event scheduler.

Every other module reads time and schedules work through a ``SimClock`` so an
hour of simulated operation runs in milliseconds and replays are identical.
Resolution is 1 ms; one simulated minute is 60 000 ms.
"""

import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

from exceptions.sim_exceptions import SchedulingError

logger = logging.getLogger(__name__)

SimInstant = int  # non-negative milliseconds of simulated time
Action = Callable[[], None]


@dataclass(order=True)
class ScheduledEvent:
    """
    Heap item ordering policy:
    1. 'fire_at'
    2. 'sequence' (submission order tie-break)
    """

    fire_at: SimInstant
    sequence: int
    action: Action = field(compare=False)
    label: str = field(default="", compare=False)
    cancelled: bool = field(default=False, compare=False)


class EventHandle:
    """Cancellation handle returned by ``SimClock.schedule``"""

    def __init__(self, event: ScheduledEvent):
        self._event = event

    @property
    def fire_at(self) -> SimInstant:
        return self._event.fire_at

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled

    def cancel(self) -> None:
        self._event.cancelled = True


class SimClock:
    """
    Single-threaded discrete-event loop.

    Attributes:
        time_scale: wall-clock seconds slept per simulated second (0 = fast-forward)
        fired: (fire_at, sequence, label) of every event executed, in order
    """

    def __init__(self, time_scale: float = 0.0, record: bool = False) -> None:
        if time_scale < 0:
            raise SchedulingError("time_scale cannot be negative")
        self.time_scale = time_scale
        self._now: SimInstant = 0
        self._queue: List[ScheduledEvent] = []
        self._next_sequence = 0
        self._record = record
        self.fired: List[Tuple[SimInstant, int, str]] = []

    def now(self) -> SimInstant:
        """Current virtual time; never moves backward."""
        return self._now

    def schedule(self, delay: int, action: Action, label: str = "") -> EventHandle:
        """Fire ``action`` exactly once at now() + delay."""
        if delay < 0:
            raise SchedulingError("Delay cannot be negative", self._now, self._now + delay)
        event = ScheduledEvent(self._now + delay, self._next_sequence, action, label)
        self._next_sequence += 1
        heapq.heappush(self._queue, event)
        return EventHandle(event)

    def schedule_at(self, at: SimInstant, action: Action, label: str = "") -> EventHandle:
        return self.schedule(at - self._now, action, label)

    def every(self, interval: int, action: Action, label: str = "",
              first_delay: Optional[int] = None) -> "Periodic":
        """Fire ``action`` every ``interval`` ms until the returned timer is cancelled."""
        return Periodic(self, interval, action, label, interval if first_delay is None else first_delay)

    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)

    def peek_next(self) -> Optional[SimInstant]:
        self._drop_cancelled()
        return self._queue[0].fire_at if self._queue else None

    def step(self) -> bool:
        """Run the earliest pending event. Returns False when the queue is empty."""
        self._drop_cancelled()
        if not self._queue:
            return False
        self._fire(heapq.heappop(self._queue))
        return True

    def run_until(self, t: SimInstant) -> int:
        """Execute every event with fire_at <= t in order, then set now() to t."""
        if t < self._now:
            raise SchedulingError("Cannot run the clock backwards", self._now, t)
        count = 0
        while True:
            self._drop_cancelled()
            if not self._queue or self._queue[0].fire_at > t:
                break
            self._fire(heapq.heappop(self._queue))
            count += 1
        self._advance_to(t)
        return count

    def _fire(self, event: ScheduledEvent) -> None:
        self._advance_to(event.fire_at)
        if self._record:
            self.fired.append((event.fire_at, event.sequence, event.label))
        event.action()

    def _advance_to(self, t: SimInstant) -> None:
        if self.time_scale > 0 and t > self._now:
            time.sleep((t - self._now) / 1000.0 * self.time_scale)
        self._now = t

    def _drop_cancelled(self) -> None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)


class Periodic:
    """Self-rescheduling timer; ``interval`` may be changed between firings"""

    def __init__(self, clock: SimClock, interval: int, action: Action, label: str, first_delay: int):
        if interval <= 0:
            raise SchedulingError("Periodic interval must be positive")
        self.clock = clock
        self.interval = interval
        self.action = action
        self.label = label
        self._handle: Optional[EventHandle] = clock.schedule(first_delay, self._tick, label)

    @property
    def active(self) -> bool:
        return self._handle is not None

    def _tick(self) -> None:
        # reschedule first so an action that cancels the timer wins
        self._handle = self.clock.schedule(self.interval, self._tick, self.label)
        self.action()

    def cancel(self) -> None:
        if self._handle is not None:
            self._handle.cancel()
            self._handle = None
