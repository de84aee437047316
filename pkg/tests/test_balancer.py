from collections import Counter

import pytest

from conftest import backserver_record
from core.balancer import RoundRobinBalancer
from exceptions.sim_exceptions import NoInstanceAvailableError


class TestRoundRobinBalancer:
    @pytest.fixture(autouse=True)
    def setup(self, clock, registry, trace):
        self.clock = clock
        self.registry = registry
        self.trace = trace
        for index, instance_id in enumerate(("b1", "b2", "b3", "b4")):
            registry.register(backserver_record(instance_id, 8081 + index))
        self.balancer = RoundRobinBalancer(clock, registry, trace=trace)

    def _picks(self, n):
        return [self.balancer.choose().instance_id for _ in range(n)]

    def test_rotates_in_instance_order(self):
        self.balancer.refresh()
        assert self._picks(6) == ["b1", "b2", "b3", "b4", "b1", "b2"]

    def test_even_spread(self):
        self.balancer.refresh()
        assert Counter(self._picks(400)) == {"b1": 100, "b2": 100, "b3": 100, "b4": 100}

    def test_empty_list_raises(self):
        with pytest.raises(NoInstanceAvailableError):
            self.balancer.choose()

    def test_membership_change_resets_cursor(self):
        self.balancer.refresh()
        self._picks(3)
        self.registry.deregister("backserver", "b2")
        self.balancer.refresh()

        assert self.balancer.cursor == 0
        assert self._picks(3) == ["b1", "b3", "b4"]

    def test_unchanged_refresh_keeps_cursor(self):
        self.balancer.refresh()
        self._picks(2)
        self.balancer.refresh()
        assert self._picks(1) == ["b3"]
        assert len(self.trace.of_kind("refresh")) == 1

    def test_unavailable_registry_keeps_previous_list(self):
        self.balancer.refresh()
        self.registry.set_available(False)
        self.registry.deregister("backserver", "b1")

        assert [r.instance_id for r in self.balancer.refresh()] == ["b1", "b2", "b3", "b4"]
        assert self._picks(1) == ["b1"]

    def test_unhealthy_skipped_until_refresh(self):
        self.balancer.refresh()
        assert self.balancer.report_unhealthy("b2") is True
        assert self._picks(3) == ["b1", "b3", "b4"]

        self.balancer.refresh()
        assert "b2" in self.balancer.healthy()

    def test_unknown_unhealthy_report_ignored(self):
        self.balancer.refresh()
        assert self.balancer.report_unhealthy("b9") is False
        assert self.balancer.healthy() == ["b1", "b2", "b3", "b4"]

    def test_all_unhealthy_raises(self):
        self.balancer.refresh()
        for instance_id in ("b1", "b2", "b3", "b4"):
            self.balancer.report_unhealthy(instance_id)
        with pytest.raises(NoInstanceAvailableError):
            self.balancer.choose()

    def test_periodic_refresh_drops_expired_instance(self):
        self.balancer.start()
        for instance_id in ("b1", "b2", "b3"):
            self.clock.every(2000, lambda i=instance_id: self.registry.heartbeat("backserver", i))

        self.clock.run_until(6000)
        assert len(self.balancer.server_list) == 4
        self.clock.run_until(8000)
        assert [r.instance_id for r in self.balancer.server_list] == ["b1", "b2", "b3"]
        assert self.balancer.last_refresh == 8000
        self.balancer.stop()
