"""Sender-side CUBIC and Reno baselines.

Standard constants C = 0.4, beta = 0.7. Growth follows the cubic law
with the TCP-friendly (Reno-tracking) floor; the fast-convergence
heuristic is omitted. Losses trigger the multiplicative decrease.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

CUBIC_C = 0.4
CUBIC_BETA = 0.7
INITIAL_CWND = 10.0
MIN_CWND = 1.0


@dataclass
class CubicState:
    w_max: float = 0.0
    epoch_start_us: Optional[int] = None
    k_s: float = 0.0  # seconds to reach w_max again
    cwnd: float = INITIAL_CWND
    ssthresh: float = math.inf
    in_slow_start: bool = True
    c: float = CUBIC_C
    beta: float = CUBIC_BETA


def cubic_window(t_since_epoch_s: float, state: CubicState) -> float:
    """W(t) = C * (t - K)^3 + w_max."""
    d = t_since_epoch_s - state.k_s
    return state.c * d * d * d + state.w_max


def cubic_k(w_max: float, c: float = CUBIC_C, beta: float = CUBIC_BETA) -> float:
    return (w_max * (1.0 - beta) / c) ** (1.0 / 3.0)


def on_loss(state: CubicState, now_us: int) -> CubicState:
    state.w_max = state.cwnd
    state.cwnd = max(state.cwnd * state.beta, MIN_CWND)
    state.ssthresh = state.cwnd
    state.k_s = cubic_k(state.w_max, state.c, state.beta)
    state.epoch_start_us = now_us
    state.in_slow_start = False
    return state


def tcp_friendly_window(t_since_epoch_s: float, rtt_s: float, state: CubicState) -> float:
    """Reno-equivalent window the cubic flow must not undercut."""
    if rtt_s <= 0:
        return 0.0
    aimd = 3.0 * (1.0 - state.beta) / (1.0 + state.beta)
    return state.w_max * state.beta + aimd * t_since_epoch_s / rtt_s


def on_ack(state: CubicState, now_us: int, rtt_us: int) -> CubicState:
    if state.in_slow_start and state.cwnd < state.ssthresh:
        state.cwnd += 1.0
        return state
    state.in_slow_start = False
    if state.epoch_start_us is None:
        # entered avoidance without a loss epoch: plateau at current size
        state.epoch_start_us = now_us
        state.w_max = state.cwnd
        state.k_s = cubic_k(state.w_max, state.c, state.beta)
    t = (now_us - state.epoch_start_us + rtt_us) / 1e6
    target = cubic_window(t, state)
    w_est = tcp_friendly_window((now_us - state.epoch_start_us) / 1e6, rtt_us / 1e6, state)
    if w_est > target:
        target = w_est
    if target > state.cwnd:
        state.cwnd += (target - state.cwnd) / state.cwnd
    return state


@dataclass
class RenoState:
    cwnd: float = INITIAL_CWND
    ssthresh: float = math.inf
    in_slow_start: bool = True


def reno_on_ack(state: RenoState) -> RenoState:
    if state.in_slow_start and state.cwnd < state.ssthresh:
        state.cwnd += 1.0
    else:
        state.in_slow_start = False
        state.cwnd += 1.0 / state.cwnd
    return state


def reno_on_loss(state: RenoState) -> RenoState:
    state.ssthresh = max(state.cwnd / 2.0, 2.0)
    state.cwnd = state.ssthresh
    state.in_slow_start = False
    return state
