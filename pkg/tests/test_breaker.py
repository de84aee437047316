import random

import pytest

from config import BreakerConfig
from core.breaker import UNAVAILABLE, BreakerMode, CallOutcome, CircuitBreaker, OutcomeKind
from core.simtime import SimClock
from exceptions.sim_exceptions import ConfigurationError

SUCCESS, FAILURE, TIMEOUT, SHORT = (OutcomeKind.SUCCESS, OutcomeKind.FAILURE, OutcomeKind.TIMEOUT,
                                    OutcomeKind.SHORT_CIRCUITED)


class TestCircuitBreaker:
    def setup_method(self):
        self.clock = SimClock()
        self.transitions = []
        self.breaker = CircuitBreaker(self.clock, BreakerConfig(), "client->backserver",
                                      listeners=[lambda b, old, new: self.transitions.append((old, new))])

    def _record(self, kind, n=1, response=None):
        for _ in range(n):
            self.breaker.record(CallOutcome(kind, self.clock.now(), 5), response)
        return self.breaker.mode

    def _trip(self):
        self._record(FAILURE, 20)
        assert self.breaker.mode is BreakerMode.OPEN

    def test_closed_allows(self):
        assert self.breaker.allow_request().proceed

    def test_needs_request_volume_before_tripping(self):
        assert self._record(FAILURE, 19) is BreakerMode.CLOSED
        assert self._record(FAILURE) is BreakerMode.OPEN
        assert self.transitions == [(BreakerMode.CLOSED, BreakerMode.OPEN)]

    def test_exact_threshold_trips(self):
        self._record(SUCCESS, 10)
        assert self._record(TIMEOUT, 10) is BreakerMode.OPEN

    def test_below_threshold_stays_closed(self):
        self._record(SUCCESS, 11)
        assert self._record(FAILURE, 9) is BreakerMode.CLOSED
        assert self.breaker.error_rate() == pytest.approx(45.0)

    def test_old_outcomes_leave_the_window(self):
        self._record(FAILURE, 19)
        self.clock.run_until(10_000)
        assert self._record(FAILURE) is BreakerMode.CLOSED
        assert len(self.breaker.window) == 1

    def test_open_short_circuits_with_unavailable(self):
        self._trip()
        decision = self.breaker.allow_request()
        assert not decision.proceed
        assert decision.fallback == UNAVAILABLE

    def test_fallback_uses_cached_response(self):
        self._record(SUCCESS, response={"accepted": True})
        self._record(FAILURE, 19)
        self.clock.run_until(1)
        self._record(FAILURE)
        assert self.breaker.allow_request().fallback == {"accepted": True}

    def test_half_open_single_probe_then_close(self):
        self._trip()
        self.clock.run_until(4_999)
        assert not self.breaker.allow_request().proceed

        self.clock.run_until(5_000)
        assert self.breaker.allow_request().proceed
        assert self.breaker.mode is BreakerMode.HALF_OPEN
        assert not self.breaker.allow_request().proceed

        assert self._record(SUCCESS) is BreakerMode.CLOSED
        assert len(self.breaker.window) == 0
        assert self.breaker.allow_request().proceed

    def test_half_open_failure_reopens(self):
        self._trip()
        self.clock.run_until(6_000)
        self.breaker.allow_request()

        assert self._record(TIMEOUT) is BreakerMode.OPEN
        assert self.breaker.opened_at == 6_000
        self.clock.run_until(10_999)
        assert not self.breaker.allow_request().proceed
        self.clock.run_until(11_000)
        assert self.breaker.allow_request().proceed

    def test_short_circuits_counted_but_not_windowed(self):
        self._trip()
        self._record(SHORT)
        assert self.breaker.tallies() == {"success": 0, "failure": 20, "timeout": 0, "short_circuited": 1}
        assert len(self.breaker.window) == 20

    def test_short_circuit_latency_must_be_zero(self):
        with pytest.raises(ValueError):
            CallOutcome(SHORT, 0, 3)

    def test_timeout_must_end_before_half_open(self):
        with pytest.raises(ConfigurationError):
            CircuitBreaker(self.clock, BreakerConfig(call_timeout=6_000, sleep_window=5_000))

    def test_failing_listener_does_not_break_transition(self):
        def broken(*_):
            raise RuntimeError("listener down")

        self.breaker.listeners.append(broken)
        self._trip()
        assert self.breaker.mode is BreakerMode.OPEN


class RecountModel:
    """Breaker rules restated over a plain list, recounting the window on every call"""

    def __init__(self, config):
        self.config = config
        self.mode = BreakerMode.CLOSED
        self.opened_at = None
        self.permits = 0
        self.history = []

    def allow(self, now):
        if self.mode is BreakerMode.CLOSED:
            return True
        if self.mode is BreakerMode.OPEN:
            if now - self.opened_at < self.config.sleep_window:
                return False
            self.mode = BreakerMode.HALF_OPEN
            self.permits = self.config.half_open_permits
        if self.permits > 0:
            self.permits -= 1
            return True
        return False

    def record(self, now, kind):
        if kind is SHORT:
            return
        self.history = [(at, k) for at, k in self.history + [(now, kind)] if at > now - self.config.rolling_window]
        errors = sum(1 for _, k in self.history if k in (FAILURE, TIMEOUT))
        if self.mode is BreakerMode.HALF_OPEN:
            if kind is SUCCESS:
                self.history = []
                self.mode = BreakerMode.CLOSED
            else:
                self.mode, self.opened_at, self.permits = BreakerMode.OPEN, now, 0
        elif self.mode is BreakerMode.CLOSED and len(self.history) >= self.config.request_volume_threshold \
                and 100 * errors >= self.config.error_threshold_pct * len(self.history):
            self.mode, self.opened_at, self.permits = BreakerMode.OPEN, now, 0


def test_modes_match_window_recount():
    rng = random.Random(2024)
    config = BreakerConfig()
    for _ in range(1000):
        clock = SimClock()
        breaker = CircuitBreaker(clock, config)
        model = RecountModel(config)
        weights = rng.choice([(1, 1, 1), (3, 1, 1), (1, 2, 2), (6, 1, 0), (1, 0, 0)])
        for _ in range(rng.randint(1, 500)):
            clock.run_until(clock.now() + rng.choice([0, 0, 50, 400, 1500, 6000]))
            proceed = breaker.allow_request().proceed
            assert proceed == model.allow(clock.now())
            kind = rng.choices([SUCCESS, FAILURE, TIMEOUT], weights)[0] if proceed else SHORT
            breaker.record(CallOutcome(kind, clock.now(), 0 if kind is SHORT else 1))
            model.record(clock.now(), kind)

            assert breaker.mode is model.mode
            assert len(breaker.window) == len(model.history)
