"""Receiver-driven Nuwa congestion controller.

For each received data packet the receiver estimates the one-way
queueing delay, turns the gap to the target delay into a trend value
theta = tanh((T_d - Q_d) / rho), and nudges its window by
w <- w + theta * k / w. The floor of w travels back to the sender in
the ACK window field and, once the flow leaves slow start, replaces the
sender's congestion window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .owd import KalmanState, OwdEstimator
from .tanhtable import FIXED_SCALE, FixedQ, tanh_fixed_raw

DEFAULT_K = 7
DEFAULT_TD_US = 5000.0
DEFAULT_RHO_US = 2500.0
MIN_WINDOW_PKTS = 2.0
MAX_WINDOW_PKTS = 10000.0


@dataclass
class NuwaParams:
    """Tunable surface: target delay, sensitivity, aggressiveness, bounds."""

    td_us: float = DEFAULT_TD_US
    rho_us: float = DEFAULT_RHO_US
    k: int = DEFAULT_K
    w_min: float = MIN_WINDOW_PKTS
    w_max: float = MAX_WINDOW_PKTS

    def __post_init__(self) -> None:
        if self.td_us < 0:
            raise ValueError("target delay must be non-negative")
        if self.rho_us <= 0:
            raise ValueError("rho must be positive")
        if not 1 <= self.k <= 9:
            raise ValueError("k must be in [1, 9]")


def compute_trend(td_us: float, q_d_us: float, rho_us: float) -> FixedQ:
    """theta = tanh((T_d - Q_d) / rho); quotient truncated toward zero in Q10."""
    if rho_us <= 0:
        raise ValueError("rho must be positive")
    x_raw = int((td_us - q_d_us) * FIXED_SCALE / rho_us)
    return FixedQ(tanh_fixed_raw(x_raw))


def update_window(
    w_old: float,
    theta: FixedQ,
    k: int,
    w_min: float = MIN_WINDOW_PKTS,
    w_max: float = MAX_WINDOW_PKTS,
) -> float:
    w = w_old + (theta.value * k) / w_old
    if w < w_min:
        return w_min
    if w > w_max:
        return w_max
    return w


@dataclass
class NuwaState:
    """Receiver-side per-flow state: fractional window plus the estimator."""

    params: NuwaParams = field(default_factory=NuwaParams)
    estimator: OwdEstimator = field(default_factory=OwdEstimator)
    w: float = MIN_WINDOW_PKTS
    last_theta: FixedQ = FixedQ(0)

    def __post_init__(self) -> None:
        self.w = max(self.params.w_min, min(self.w, self.params.w_max))


def on_ack(state: NuwaState, sent_at_us: int, recv_at_us: int, nbytes: int) -> int:
    """Per-packet pipeline; returns the integer window to advertise."""
    sample = state.estimator.observe(sent_at_us, recv_at_us, nbytes)
    p = state.params
    theta = compute_trend(p.td_us, sample.q_d_us, p.rho_us)
    state.w = update_window(state.w, theta, p.k, p.w_min, p.w_max)
    state.last_theta = theta
    return int(state.w)


def sender_apply(advertised: int, local_cwnd: float, in_slow_start: bool) -> float:
    """Sending window: receiver value replaces cwnd once in avoidance."""
    if in_slow_start:
        return local_cwnd
    return float(advertised)
