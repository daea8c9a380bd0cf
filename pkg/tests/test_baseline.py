import math

import pytest

from nuwasim.baseline import (
    CubicState, RenoState, cubic_k, cubic_window, on_ack, on_loss,
    reno_on_ack, reno_on_loss,
)


class TestCubicWindow:
    def test_plateau_at_k(self):
        s = CubicState(w_max=100.0, k_s=cubic_k(100.0))
        assert cubic_window(s.k_s, s) == pytest.approx(100.0)

    def test_origin_equals_beta_fraction(self):
        s = CubicState(w_max=100.0, k_s=cubic_k(100.0))
        assert cubic_window(0.0, s) == pytest.approx(70.0)

    def test_k_hand_value(self):
        # cbrt(100 * 0.3 / 0.4) = cbrt(75)
        assert cubic_k(100.0) == pytest.approx(75 ** (1 / 3), rel=1e-9)
        assert cubic_k(100.0) == pytest.approx(4.217, abs=1e-3)

    def test_continuity_and_zero_slope_at_k(self):
        s = CubicState(w_max=50.0, k_s=cubic_k(50.0))
        eps = 1e-6
        w0 = cubic_window(s.k_s - eps, s)
        w1 = cubic_window(s.k_s + eps, s)
        assert w1 - w0 == pytest.approx(0.0, abs=1e-12)

    def test_growth_after_plateau(self):
        s = CubicState(w_max=50.0, k_s=cubic_k(50.0))
        assert cubic_window(s.k_s + 2.0, s) > 50.0


class TestCubicEvents:
    def test_loss_multiplicative_decrease(self):
        s = CubicState(cwnd=100.0)
        on_loss(s, 1_000_000)
        assert s.cwnd == pytest.approx(70.0)
        assert s.w_max == pytest.approx(100.0)
        assert s.ssthresh == pytest.approx(70.0)

    def test_loss_exits_slow_start(self):
        s = CubicState()
        assert s.in_slow_start
        on_loss(s, 0)
        assert not s.in_slow_start

    def test_slow_start_doubles_per_rtt(self):
        s = CubicState(cwnd=10.0)
        for _ in range(10):  # one ACK per outstanding packet
            on_ack(s, 0, 40_000)
        assert s.cwnd == pytest.approx(20.0)

    def test_avoidance_growth_follows_cubic_law(self):
        s = CubicState(cwnd=70.0)
        on_loss(s, 0)  # w_max 70 -> cwnd 49
        start = s.cwnd
        t_us = 0
        for _ in range(200):
            t_us += 10_000
            on_ack(s, t_us, 40_000)
        assert s.cwnd > start
        # never exceeds the cubic target far ahead of schedule
        assert s.cwnd <= cubic_window((t_us + 40_000) / 1e6, s) + 1.5


class TestReno:
    def test_additive_increase(self):
        # +1/cwnd per ACK approximates +1 per round trip
        s = RenoState(cwnd=10.0, in_slow_start=False)
        for _ in range(10):
            reno_on_ack(s)
        assert s.cwnd == pytest.approx(11.0, abs=0.05)

    def test_multiplicative_decrease(self):
        s = RenoState(cwnd=20.0)
        reno_on_loss(s)
        assert s.cwnd == pytest.approx(10.0)

    def test_slow_start_doubling(self):
        s = RenoState(cwnd=4.0)
        for _ in range(4):
            reno_on_ack(s)
        assert s.cwnd == pytest.approx(8.0)
