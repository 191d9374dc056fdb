import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esgrid.clock import SimClock
from esgrid.errors import NotFoundError
from esgrid.monitor import DOWN, UNKNOWN, UP, MonitorService


@pytest.fixture
def monitor(clock):
    m = MonitorService(clock)
    m.register_service("catalog", interval_ms=5000)
    return m


class TestStatus:
    def test_first_heartbeat_transitions_unknown_to_up(self, monitor):
        assert monitor.status("catalog") == UNKNOWN
        monitor.heartbeat("catalog", now_ms=100)
        assert monitor.status("catalog", now_ms=101) == UP
        assert monitor.describe("catalog")["history"] == [[100, UP]]

    def test_up_within_three_intervals(self, monitor, clock):
        for t in range(0, 30_001, 5000):
            monitor.heartbeat("catalog", now_ms=t)
        assert monitor.status("catalog", now_ms=30_000 + 14_990) == UP
        assert monitor.status("catalog", now_ms=30_000 + 15_000) == DOWN

    def test_stale_service_is_down(self, monitor):
        monitor.heartbeat("catalog", now_ms=0)
        assert monitor.status("catalog", now_ms=20_000) == DOWN

    def test_unregistered_service_is_unknown(self, monitor):
        assert monitor.status("nothing") == UNKNOWN

    def test_unknown_service_heartbeat_rejected(self, monitor):
        with pytest.raises(NotFoundError):
            monitor.heartbeat("nothing")

    def test_down_then_heartbeat_records_two_transitions(self, monitor):
        monitor.heartbeat("catalog", now_ms=0)
        assert monitor.status("catalog", now_ms=20_000) == DOWN
        monitor.heartbeat("catalog", now_ms=21_000)
        history = monitor.describe("catalog")["history"]
        assert history == [[0, UP], [15_000, DOWN], [21_000, UP]]

    def test_lazy_down_is_timestamped_at_staleness_instant(self, monitor):
        monitor.heartbeat("catalog", now_ms=1000)
        monitor.status("catalog", now_ms=99_999)  # first observation, much later
        assert monitor.describe("catalog")["history"][-1] == [16_000, DOWN]

    @given(st.integers(0, 10**7), st.integers(1, 10**5), st.integers(0, 10**7))
    @settings(max_examples=300, deadline=None)
    def test_status_is_pure_function_of_triple(self, last_hb, interval, delta):
        clock = SimClock()
        m = MonitorService(clock)
        m.register_service("s", interval_ms=interval)
        m.heartbeat("s", now_ms=last_hb)
        now = last_hb + delta
        expected = UP if now - last_hb < 3 * interval else DOWN
        assert m.status("s", now_ms=now) == expected

    def test_history_alternates_states(self, monitor):
        rng = random.Random(2)
        t = 0
        for _ in range(200):
            t += rng.randint(1, 20_000)
            if rng.random() < 0.7:
                monitor.heartbeat("catalog", now_ms=t)
            else:
                monitor.status("catalog", now_ms=t)
        history = monitor.describe("catalog", now_ms=t)["history"]
        for (_, a), (_, b) in zip(history, history[1:]):
            assert a != b


class TestAvailability:
    def test_always_up_is_one(self, monitor):
        for t in range(0, 100_001, 5000):
            monitor.heartbeat("catalog", now_ms=t)
        assert monitor.availability("catalog", 50_000, now_ms=100_000) == 1.0

    def test_half_up_half_down_is_half(self, monitor):
        # one heartbeat at t=0: UP over [0, 15000), DOWN over [15000, 30000)
        monitor.heartbeat("catalog", now_ms=0)
        assert monitor.availability("catalog", 30_000, now_ms=30_000) == pytest.approx(0.5, abs=1e-9)

    def test_unknown_window_is_zero(self, monitor):
        assert monitor.availability("catalog", 10_000, now_ms=10_000) == 0.0
        assert monitor.availability("ghost", 10_000, now_ms=10_000) == 0.0

    def test_window_clips_older_uptime(self, monitor):
        monitor.heartbeat("catalog", now_ms=0)  # UP [0,15000) then DOWN
        # window [20000, 40000): all DOWN
        assert monitor.availability("catalog", 20_000, now_ms=40_000) == 0.0

    def test_availability_bounded_and_monotone_in_up_time(self, monitor):
        rng = random.Random(9)
        t = 0
        prev = None
        for _ in range(100):
            t += rng.randint(1, 8000)
            if rng.random() < 0.6:
                monitor.heartbeat("catalog", now_ms=t)
            a = monitor.availability("catalog", 60_000, now_ms=t)
            assert 0.0 <= a <= 1.0
            prev = a

    def test_piecewise_timeline_matches_hand_sum(self, monitor):
        # UP [0,15e3) DOWN [15e3,40e3) UP [40e3,55e3) DOWN [55e3,60e3)
        monitor.heartbeat("catalog", now_ms=0)
        monitor.status("catalog", now_ms=30_000)
        monitor.heartbeat("catalog", now_ms=40_000)
        expected = (15_000 + 15_000) / 60_000
        assert monitor.availability("catalog", 60_000, now_ms=60_000) == pytest.approx(expected, abs=1e-9)

    def test_window_must_be_positive(self, monitor):
        with pytest.raises(ValueError):
            monitor.availability("catalog", 0)
