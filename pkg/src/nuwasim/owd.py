"""One-way queueing-delay estimation at the receiver.

Per packet: the raw delay sample is the current one-way delay minus the
minimum one-way delay observed in a sliding window (so unsynchronized
clocks cancel). A two-state Kalman filter then separates the queueing
component from transmission-time variation between packet groups.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

DEFAULT_MIN_WINDOW_US = 10_000_000  # 10 s sliding minimum
DEFAULT_BUCKET_US = 5_000  # packet-group span

# Kalman defaults: state is (1/capacity in us/byte, queue delay in us).
# Tight prior on capacity, loose on delay. The delay process noise sets
# the steady-state gain sqrt(q2/R) ~ 0.1 per packet; smaller values lag
# the window dynamics and destabilize the controller.
DEFAULT_INV_B = 0.8  # 1 / (10 Mbit/s) expressed in us/byte
DEFAULT_P11 = 1e-6
DEFAULT_P22 = 1e6
DEFAULT_Q1 = 1e-8
DEFAULT_Q2 = 1e5
DEFAULT_MEAS_VAR = 9e6  # (3 ms)^2


def measure_raw(q_t: int, r_t: int, q_m: int, r_m: int, paper_sign: bool = False) -> int:
    """Raw queueing-delay sample: current OWD minus the recorded minimum.

    Positive means more congestion. paper_sign flips the orientation
    (kept for comparison; see README).
    """
    d = (r_t - r_m) - (q_t - q_m)
    return -d if paper_sign else d


class MinOwdWindow:
    """Sliding-window minimum of one-way delay samples.

    Keeps a monotone deque of candidate minima; the reported (q_m, r_m)
    always belong to the minimum-OWD entry within window_us of the most
    recent receive time. Entries carry the group bucket they arrived in.
    """

    def __init__(self, window_us: int = DEFAULT_MIN_WINDOW_US):
        self.window_us = window_us
        self._entries: deque[tuple[int, int, int, int]] = deque()  # (recv, sent, owd, bucket)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def empty(self) -> bool:
        return not self._entries

    @property
    def min_owd(self) -> int:
        return self._entries[0][2]

    @property
    def r_m(self) -> int:
        return self._entries[0][0]

    @property
    def q_m(self) -> int:
        return self._entries[0][1]

    @property
    def min_bucket(self) -> int:
        return self._entries[0][3]

    def update(self, recv_us: int, sent_us: int, owd_us: int, bucket: int = 0) -> None:
        horizon = recv_us - self.window_us
        entries = self._entries
        while entries and entries[0][0] <= horizon:
            entries.popleft()
        # strict comparison keeps the oldest entry on equal delays
        while entries and entries[-1][2] > owd_us:
            entries.pop()
        entries.append((recv_us, sent_us, owd_us, bucket))


def update_min(window: MinOwdWindow, q_t: int, r_t: int, owd_us: int) -> MinOwdWindow:
    """Insert a sample and re-establish the windowed minimum."""
    window.update(r_t, q_t, owd_us)
    return window


@dataclass
class KalmanState:
    """Two-state filter over (1/capacity, queue delay) with covariance."""

    inv_b: float = DEFAULT_INV_B  # us per byte
    q_d: float = 0.0  # us
    p11: float = DEFAULT_P11
    p12: float = 0.0
    p22: float = DEFAULT_P22
    q1: float = DEFAULT_Q1
    q2: float = DEFAULT_Q2
    meas_var: float = DEFAULT_MEAS_VAR
    last_gain: tuple[float, float] = (0.0, 0.0)


def kalman_update(state: KalmanState, d_c: float, delta_m: float) -> tuple[float, KalmanState]:
    """One predict/correct step on measurement d_c with H = [delta_m, 1].

    The queue-delay correction reduces to
    q_d <- (1 - K) * q_d + K * (d_c - delta_m * inv_b), clamped at 0.
    """
    if not (math.isfinite(d_c) and math.isfinite(delta_m)):
        raise ValueError("non-finite measurement")
    # predict: random-walk state, covariance grows by process noise
    p11 = state.p11 + state.q1
    p12 = state.p12
    p22 = state.p22 + state.q2
    h = delta_m
    r = state.meas_var
    s = h * h * p11 + 2.0 * h * p12 + p22 + r
    k1 = (p11 * h + p12) / s
    k2 = (p12 * h + p22) / s
    innov = d_c - (h * state.inv_b + state.q_d)
    state.inv_b += k1 * innov
    state.q_d += k2 * innov
    if state.q_d < 0.0:
        state.q_d = 0.0
    # Joseph-form covariance update keeps P symmetric PSD
    a11 = 1.0 - k1 * h
    a12 = -k1
    a21 = -k2 * h
    a22 = 1.0 - k2
    b11 = a11 * p11 + a12 * p12
    b12 = a11 * p12 + a12 * p22
    b21 = a21 * p11 + a22 * p12
    b22 = a21 * p12 + a22 * p22
    state.p11 = b11 * a11 + b12 * a12 + r * k1 * k1
    state.p12 = b11 * a21 + b12 * a22 + r * k1 * k2
    state.p22 = b21 * a21 + b22 * a22 + r * k2 * k2
    state.last_gain = (k1, k2)
    return state.q_d, state


@dataclass(frozen=True)
class OwdSample:
    d_c_us: int
    delta_m_bytes: int
    q_d_us: float
    gain_q: float


class OwdEstimator:
    """Per-flow pipeline: raw sample -> min window -> group delta -> Kalman."""

    def __init__(
        self,
        window_us: int = DEFAULT_MIN_WINDOW_US,
        bucket_us: int = DEFAULT_BUCKET_US,
        kalman: Optional[KalmanState] = None,
        paper_sign: bool = False,
    ):
        self.window = MinOwdWindow(window_us)
        self.kalman = kalman if kalman is not None else KalmanState()
        self.bucket_us = bucket_us
        self.paper_sign = paper_sign
        self._cur_bucket: Optional[int] = None
        self._cur_bytes = 0
        self._last_closed_bytes: Optional[int] = None
        self._closed: dict[int, int] = {}  # bucket -> final bytes, pruned by age
        self._anchor_us: Optional[int] = None  # bucket grid origin (first packet)

    @property
    def q_d_us(self) -> float:
        return self.kalman.q_d

    def _update_group(self, recv_us: int, nbytes: int) -> int:
        # anchor the grid at the first receive time so that absolute clock
        # offsets cannot move bucket boundaries
        if self._anchor_us is None:
            self._anchor_us = recv_us
        bucket = (recv_us - self._anchor_us) // self.bucket_us
        if bucket != self._cur_bucket:
            if self._cur_bucket is not None:
                self._closed[self._cur_bucket] = self._cur_bytes
                self._last_closed_bytes = self._cur_bytes
                horizon = bucket - (self.window.window_us // self.bucket_us) - 2
                if len(self._closed) > 4 * (self.window.window_us // self.bucket_us):
                    self._closed = {b: v for b, v in self._closed.items() if b > horizon}
            self._cur_bucket = bucket
            self._cur_bytes = 0
        self._cur_bytes += nbytes
        return bucket

    def _delta_m(self) -> int:
        if self._last_closed_bytes is None or self.window.empty:
            return 0
        mb = self.window.min_bucket
        if mb == self._cur_bucket:
            min_bytes = self._cur_bytes
        else:
            min_bytes = self._closed.get(mb, 0)
        return self._last_closed_bytes - min_bytes

    def observe(self, sent_us: int, recv_us: int, nbytes: int) -> OwdSample:
        """Process one received packet; returns the sample fed to the filter."""
        owd = recv_us - sent_us
        if self.window.empty:
            d_c = 0
        else:
            d_c = measure_raw(sent_us, recv_us, self.window.q_m, self.window.r_m,
                              self.paper_sign)
        bucket = self._update_group(recv_us, nbytes)
        self.window.update(recv_us, sent_us, owd, bucket)
        delta_m = self._delta_m()
        q_d, _ = kalman_update(self.kalman, float(d_c), float(delta_m))
        return OwdSample(d_c, delta_m, q_d, self.kalman.last_gain[1])
