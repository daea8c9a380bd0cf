"""Per-flow controller wiring for the simulator.

A flow pairs a sender-side window controller with a receiver-side
window advertiser. Nuwa flows compute the window at the receiver; the
sender obeys it after slow start. Baseline flows (cubic/reno) keep the
classic sender-side logic and advertise an unbounded receive window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import baseline, nuwa
from .core import ConfigError
from .owd import KalmanState, OwdEstimator

NUWA_ACTIVATE_CWND = 16.0
UNLIMITED_WINDOW = 1_000_000


@dataclass
class FlowSpec:
    """Declarative flow description consumed by the simulator."""

    algo: str = "nuwa"
    start_us: int = 0
    k: int = nuwa.DEFAULT_K
    td_us: float = nuwa.DEFAULT_TD_US
    rho_us: float = nuwa.DEFAULT_RHO_US
    w_min: float = nuwa.MIN_WINDOW_PKTS
    w_max: float = nuwa.MAX_WINDOW_PKTS
    window: float = 10.0  # fixed-window algo only
    min_window_us: int = 10_000_000
    paper_sign: bool = False
    observe_owd: bool = False  # attach the estimator to a non-nuwa flow


class FixedSender:
    in_slow_start = False

    def __init__(self, window: float):
        self.cwnd = float(window)

    def on_ack(self, now_us: int, rtt_us: int, advertised: int,
               in_recovery: bool = False) -> None:
        pass

    def on_loss(self, now_us: int) -> None:
        pass


class CubicSender:
    def __init__(self) -> None:
        self.state = baseline.CubicState()

    @property
    def cwnd(self) -> float:
        return self.state.cwnd

    @property
    def in_slow_start(self) -> bool:
        return self.state.in_slow_start

    def on_ack(self, now_us: int, rtt_us: int, advertised: int,
               in_recovery: bool = False) -> None:
        if not in_recovery:
            baseline.on_ack(self.state, now_us, rtt_us)

    def on_loss(self, now_us: int) -> None:
        baseline.on_loss(self.state, now_us)


class RenoSender:
    def __init__(self) -> None:
        self.state = baseline.RenoState()

    @property
    def cwnd(self) -> float:
        return self.state.cwnd

    @property
    def in_slow_start(self) -> bool:
        return self.state.in_slow_start

    def on_ack(self, now_us: int, rtt_us: int, advertised: int,
               in_recovery: bool = False) -> None:
        if not in_recovery:
            baseline.reno_on_ack(self.state)

    def on_loss(self, now_us: int) -> None:
        baseline.reno_on_loss(self.state)


class NuwaSender:
    """Native doubling until the first congestion event or cwnd >= 16,
    then the advertised window replaces cwnd on every ACK.

    A loss event triggers the native multiplicative backoff for one
    recovery round trip; the receiver-computed window takes over again
    once recovery ends (congestion avoidance resumes).
    """

    LOSS_BETA = 0.7

    def __init__(self, w_min: float = nuwa.MIN_WINDOW_PKTS):
        self.cwnd = baseline.INITIAL_CWND
        self.active = False
        self._w_min = w_min

    @property
    def in_slow_start(self) -> bool:
        return not self.active

    def on_ack(self, now_us: int, rtt_us: int, advertised: int,
               in_recovery: bool = False) -> None:
        if not self.active:
            self.cwnd += 1.0
            if self.cwnd < NUWA_ACTIVATE_CWND:
                return
            self.active = True
        if not in_recovery:
            self.cwnd = nuwa.sender_apply(advertised, self.cwnd, in_slow_start=False)

    def on_loss(self, now_us: int) -> None:
        self.active = True
        self.cwnd = max(self.cwnd * self.LOSS_BETA, self._w_min)


class PlainReceiver:
    """Receiver that never constrains the sender."""

    def on_data(self, seq: int, sent_at_us: int, recv_at_us: int, nbytes: int) -> int:
        return UNLIMITED_WINDOW


class NuwaReceiver:
    """Runs the per-packet Nuwa pipeline and advertises floor(w)."""

    def __init__(
        self,
        params: nuwa.NuwaParams,
        min_window_us: int = 10_000_000,
        paper_sign: bool = False,
        log: Optional[Callable[[dict], None]] = None,
        flow_id: int = 0,
    ):
        est = OwdEstimator(window_us=min_window_us, paper_sign=paper_sign)
        self.state = nuwa.NuwaState(params=params, estimator=est)
        self._log = log
        self._flow_id = flow_id
        # interval accumulators read by the RL environment
        self.last_owd_us = 0
        self.owd_sum_us = 0
        self.owd_count = 0

    @property
    def params(self) -> nuwa.NuwaParams:
        return self.state.params

    def on_data(self, seq: int, sent_at_us: int, recv_at_us: int, nbytes: int) -> int:
        owd = recv_at_us - sent_at_us
        self.last_owd_us = owd
        self.owd_sum_us += owd
        self.owd_count += 1
        sample = self.state.estimator.observe(sent_at_us, recv_at_us, nbytes)
        p = self.state.params
        theta = nuwa.compute_trend(p.td_us, sample.q_d_us, p.rho_us)
        self.state.w = nuwa.update_window(self.state.w, theta, p.k, p.w_min, p.w_max)
        self.state.last_theta = theta
        if self._log is not None:
            self._log({
                "t_us": recv_at_us, "kind": "owd", "flow": self._flow_id, "seq": seq,
                "d_c": sample.d_c_us, "q_d": sample.q_d_us,
                "gain": sample.gain_q, "delta_m": sample.delta_m_bytes,
            })
            x_raw = int((p.td_us - sample.q_d_us) * 1024 / p.rho_us)
            self._log({
                "t_us": recv_at_us, "kind": "nuwa", "flow": self._flow_id, "seq": seq,
                "q_d": sample.q_d_us, "x": x_raw / 1024.0,
                "theta": theta.value, "w": self.state.w,
            })
        return int(self.state.w)


def build_flow(spec: FlowSpec, log: Optional[Callable[[dict], None]] = None,
               flow_id: int = 0):
    """Instantiate (sender, receiver) for a flow spec."""
    algo = spec.algo.lower()
    if algo == "nuwa":
        params = nuwa.NuwaParams(td_us=spec.td_us, rho_us=spec.rho_us, k=spec.k,
                                 w_min=spec.w_min, w_max=spec.w_max)
        recv = NuwaReceiver(params, min_window_us=spec.min_window_us,
                            paper_sign=spec.paper_sign, log=log, flow_id=flow_id)
        return NuwaSender(w_min=spec.w_min), recv
    if algo in ("cubic", "reno", "fixed"):
        if spec.observe_owd:
            params = nuwa.NuwaParams(td_us=spec.td_us, rho_us=spec.rho_us, k=spec.k,
                                     w_min=spec.w_min, w_max=spec.w_max)
            receiver = NuwaReceiver(params, min_window_us=spec.min_window_us,
                                    paper_sign=spec.paper_sign, log=log, flow_id=flow_id)
        else:
            receiver = PlainReceiver()
        if algo == "cubic":
            return CubicSender(), receiver
        if algo == "reno":
            return RenoSender(), receiver
        return FixedSender(spec.window), receiver
    raise ConfigError(f"unknown controller: {spec.algo!r}")
