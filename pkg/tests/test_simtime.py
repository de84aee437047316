import pytest

from core.simtime import SimClock
from exceptions.sim_exceptions import SchedulingError


class TestSimClock:
    def setup_method(self):
        self.clock = SimClock(record=True)
        self.fired = []

    def _log(self, name):
        return lambda: self.fired.append((self.clock.now(), name))

    def test_fires_in_time_then_submission_order(self):
        self.clock.schedule(30, self._log("late"))
        self.clock.schedule(10, self._log("first"))
        self.clock.schedule(10, self._log("second"))
        self.clock.schedule(0, self._log("now"))

        assert self.clock.run_until(100) == 4
        assert self.fired == [(0, "now"), (10, "first"), (10, "second"), (30, "late")]
        assert [label for _, _, label in self.clock.fired] == ["", "", "", ""]

    def test_run_until_sets_now_and_leaves_later_events(self):
        self.clock.schedule(500, self._log("later"))
        self.clock.run_until(200)

        assert self.clock.now() == 200
        assert self.fired == []
        assert self.clock.pending() == 1
        assert self.clock.peek_next() == 500

    def test_event_at_boundary_fires(self):
        self.clock.schedule(200, self._log("edge"))
        self.clock.run_until(200)
        assert self.fired == [(200, "edge")]

    def test_cancelled_event_never_fires(self):
        handle = self.clock.schedule(10, self._log("cancelled"))
        handle.cancel()

        self.clock.run_until(50)
        assert handle.cancelled
        assert self.fired == []
        assert self.clock.peek_next() is None

    def test_negative_delay_rejected(self):
        with pytest.raises(SchedulingError):
            self.clock.schedule(-1, self._log("never"))

    def test_clock_cannot_run_backwards(self):
        self.clock.run_until(100)
        with pytest.raises(SchedulingError):
            self.clock.run_until(99)

    def test_events_scheduled_while_running_are_honoured(self):
        def chain():
            self.fired.append((self.clock.now(), "outer"))
            self.clock.schedule(5, self._log("inner"))

        self.clock.schedule(10, chain)
        self.clock.run_until(15)
        assert self.fired == [(10, "outer"), (15, "inner")]

    def test_step(self):
        self.clock.schedule(7, self._log("a"))
        assert self.clock.step() is True
        assert self.clock.now() == 7
        assert self.clock.step() is False

    def test_negative_time_scale_rejected(self):
        with pytest.raises(SchedulingError):
            SimClock(time_scale=-0.5)


class TestPeriodic:
    def setup_method(self):
        self.clock = SimClock()
        self.ticks = []

    def test_fires_every_interval(self):
        self.clock.every(2000, lambda: self.ticks.append(self.clock.now()))
        self.clock.run_until(9000)
        assert self.ticks == [2000, 4000, 6000, 8000]

    def test_first_delay_zero_fires_immediately(self):
        self.clock.every(1000, lambda: self.ticks.append(self.clock.now()), first_delay=0)
        self.clock.run_until(2500)
        assert self.ticks == [0, 1000, 2000]

    def test_cancel_from_inside_action(self):
        def action():
            self.ticks.append(self.clock.now())
            if len(self.ticks) == 2:
                timer.cancel()

        timer = self.clock.every(100, action)
        self.clock.run_until(1000)
        assert self.ticks == [100, 200]
        assert not timer.active

    def test_zero_interval_rejected(self):
        with pytest.raises(SchedulingError):
            self.clock.every(0, lambda: None)
