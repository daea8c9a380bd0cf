"""Deterministic trace-driven bottleneck simulator.

Single FIFO droptail queue fed by any number of flows. Capacity is a
sequence of delivery opportunities (one MTU packet each); unused
opportunities are wasted, never banked. Identical config and seed give
bit-identical event sequences: ties break on (kind priority, insertion
order) with delivery < enqueue < receive < ack < timer.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .core import ConfigError, FlowMetrics, MTU_BYTES, TraceSchedule
from .flows import FlowSpec, build_flow

EV_OPP = 0
EV_ENQ = 1
EV_RECV = 2
EV_ACK = 3
EV_TIMER = 4

TIMER_START = 0
TIMER_RTO = 1

REORDER_THRESHOLD = 3
MIN_RTO_US = 200_000
INITIAL_RTO_US = 1_000_000


@dataclass
class LinkConfig:
    trace: TraceSchedule
    queue_capacity: int = 250
    fwd_delay_us: int = 20_000  # sender->receiver one-way, split at the bottleneck
    rev_delay_us: int = 20_000
    random_loss_rate: float = 0.0
    rng_seed: int = 1
    mtu: int = MTU_BYTES
    loop_trace: bool = True

    def __post_init__(self) -> None:
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")
        if self.fwd_delay_us < 0 or self.rev_delay_us < 0:
            raise ConfigError("delays must be non-negative")
        if not 0.0 <= self.random_loss_rate < 1.0:
            raise ConfigError("loss rate must be in [0, 1)")


class _FlowRt:
    __slots__ = (
        "spec", "sender", "receiver", "metrics", "next_seq", "inflight",
        "highest_acked", "recovery_until", "last_progress_us", "srtt_us",
        "timer_at", "started", "flow_id",
    )

    def __init__(self, spec: FlowSpec, sender, receiver, flow_id: int):
        self.spec = spec
        self.sender = sender
        self.receiver = receiver
        self.metrics = FlowMetrics()
        self.next_seq = 0
        self.inflight: dict[int, int] = {}
        self.highest_acked = -1
        self.recovery_until = -1
        self.last_progress_us = 0
        self.srtt_us: Optional[int] = None
        self.timer_at = -1
        self.started = False
        self.flow_id = flow_id

    def rto_us(self) -> int:
        if self.srtt_us is None:
            return INITIAL_RTO_US
        return max(4 * self.srtt_us, MIN_RTO_US)


@dataclass
class SimResult:
    metrics: list[FlowMetrics]
    duration_us: int
    network_residents: list[int]


class Simulation:
    """Event loop over one bottleneck link; advance incrementally or run."""

    def __init__(
        self,
        link: LinkConfig,
        flows: Sequence[FlowSpec],
        duration_us: int,
        event_sink: Optional[Callable[[dict], None]] = None,
    ):
        if not flows:
            raise ConfigError("at least one flow required")
        trace_us = link.trace.duration_ms * 1000
        if not link.loop_trace and duration_us > trace_us:
            raise ConfigError("duration exceeds trace length and looping is disabled")
        self.link = link
        self.duration_us = duration_us
        self.now = 0
        self._sink = event_sink
        self._rng = random.Random(link.rng_seed)
        self._heap: list = []
        self._evseq = 0
        self._queue: deque[tuple[int, int, int, int]] = deque()  # (enq_t, flow, seq, sent_at)
        self._s2b = link.fwd_delay_us // 2
        self._b2r = link.fwd_delay_us - self._s2b
        self.flows: list[_FlowRt] = []
        for i, spec in enumerate(flows):
            sender, receiver = build_flow(spec, log=event_sink, flow_id=i)
            self.flows.append(_FlowRt(spec, sender, receiver, i))
            self._push(spec.start_us, EV_TIMER, i, TIMER_START)
        self._opp_idx = 0
        self._opp_offset_us = 0
        self._trace_us = trace_us
        self._schedule_next_opportunity()

    # -- event plumbing ----------------------------------------------------

    def _push(self, t: int, kind: int, a: int = 0, b: int = 0, c: int = 0, d: int = 0) -> None:
        self._evseq += 1
        heapq.heappush(self._heap, (t, kind, self._evseq, a, b, c, d))

    def _log(self, t: int, kind: str, flow: int, seq: int, **extra) -> None:
        if self._sink is not None:
            row = {"t_us": t, "kind": kind, "flow": flow, "seq": seq,
                   "qlen": len(self._queue)}
            row.update(extra)
            self._sink(row)

    def _schedule_next_opportunity(self) -> None:
        opps = self.link.trace.opportunities
        if self._opp_idx >= len(opps):
            if not self.link.loop_trace:
                return
            self._opp_idx = 0
            self._opp_offset_us += self._trace_us
        t = opps[self._opp_idx] * 1000 + self._opp_offset_us
        self._push(t, EV_OPP)

    # -- per-event handlers ------------------------------------------------

    def _handle_opportunity(self, now: int) -> None:
        self._opp_idx += 1
        self._schedule_next_opportunity()
        if not self._queue:
            return  # wasted; no backlog credit
        enq_t, fi, seq, sent_at = self._queue.popleft()
        wait = now - enq_t
        fl = self.flows[fi]
        fl.metrics.queue_delay_samples.append((now, wait))
        self._log(now, "deliver", fi, seq, wait_us=wait)
        self._push(now + self._b2r, EV_RECV, fi, seq, sent_at)

    def _handle_enqueue(self, now: int, fi: int, seq: int, sent_at: int) -> None:
        fl = self.flows[fi]
        if self.link.random_loss_rate > 0.0 and self._rng.random() < self.link.random_loss_rate:
            fl.metrics.record_loss(now)
            self._log(now, "rloss", fi, seq)
            return
        if len(self._queue) >= self.link.queue_capacity:
            fl.metrics.record_loss(now)
            self._log(now, "drop", fi, seq)
            return
        self._queue.append((now, fi, seq, sent_at))
        self._log(now, "enqueue", fi, seq)

    def _handle_recv(self, now: int, fi: int, seq: int, sent_at: int) -> None:
        fl = self.flows[fi]
        fl.metrics.record_delivery(now, self.link.mtu)
        advertised = fl.receiver.on_data(seq, sent_at, now, self.link.mtu)
        self._push(now + self.link.rev_delay_us, EV_ACK, fi, seq, sent_at, advertised)

    def _handle_ack(self, now: int, fi: int, seq: int, sent_at: int, advertised: int) -> None:
        fl = self.flows[fi]
        rtt = now - sent_at
        fl.srtt_us = rtt if fl.srtt_us is None else (7 * fl.srtt_us + rtt) // 8
        fl.metrics.rtt_samples.append((now, rtt))
        fl.inflight.pop(seq, None)
        if seq > fl.highest_acked:
            fl.highest_acked = seq
        # gap report: older unacked packets are treated as lost by the sender
        declared = -1
        horizon = fl.highest_acked - REORDER_THRESHOLD
        while fl.inflight:
            oldest = next(iter(fl.inflight))
            if oldest > horizon:
                break
            del fl.inflight[oldest]
            declared = oldest
        if declared >= 0 and declared > fl.recovery_until:
            fl.sender.on_loss(now)
            fl.recovery_until = fl.next_seq - 1
        fl.sender.on_ack(now, rtt, advertised,
                         in_recovery=fl.highest_acked < fl.recovery_until)
        fl.last_progress_us = now
        fl.metrics.cwnd_samples.append((now, fl.sender.cwnd))
        self._log(now, "ack", fi, seq, cwnd=fl.sender.cwnd)
        self._try_send(fl, now)
        self._ensure_timer(fl, now)

    def _handle_timer(self, now: int, fi: int, which: int) -> None:
        fl = self.flows[fi]
        if which == TIMER_START:
            fl.started = True
            fl.last_progress_us = now
            fl.metrics.cwnd_samples.append((now, fl.sender.cwnd))
            self._try_send(fl, now)
            self._ensure_timer(fl, now)
            return
        fl.timer_at = -1
        if not fl.inflight:
            return
        deadline = fl.last_progress_us + fl.rto_us()
        if now < deadline:
            fl.timer_at = deadline
            self._push(deadline, EV_TIMER, fi, TIMER_RTO)
            return
        # coarse idle timeout: give up on all outstanding packets
        fl.inflight.clear()
        fl.sender.on_loss(now)
        fl.recovery_until = fl.next_seq - 1
        fl.last_progress_us = now
        self._try_send(fl, now)
        self._ensure_timer(fl, now)

    def _try_send(self, fl: _FlowRt, now: int) -> None:
        window = int(fl.sender.cwnd)
        while len(fl.inflight) < window:
            seq = fl.next_seq
            fl.next_seq += 1
            fl.inflight[seq] = now
            fl.metrics.packets_sent += 1
            self._log(now, "send", fl.flow_id, seq)
            self._push(now + self._s2b, EV_ENQ, fl.flow_id, seq, now)

    def _ensure_timer(self, fl: _FlowRt, now: int) -> None:
        if fl.inflight and fl.timer_at < 0:
            fl.timer_at = now + fl.rto_us()
            self._push(fl.timer_at, EV_TIMER, fl.flow_id, TIMER_RTO)

    # -- driving -----------------------------------------------------------

    def advance_to(self, t_us: int) -> None:
        """Process all events strictly before min(t_us, duration)."""
        limit = min(t_us, self.duration_us)
        heap = self._heap
        while heap and heap[0][0] < limit:
            t, kind, _, a, b, c, d = heapq.heappop(heap)
            self.now = t
            if kind == EV_OPP:
                self._handle_opportunity(t)
            elif kind == EV_ENQ:
                self._handle_enqueue(t, a, b, c)
            elif kind == EV_RECV:
                self._handle_recv(t, a, b, c)
            elif kind == EV_ACK:
                self._handle_ack(t, a, b, c, d)
            else:
                self._handle_timer(t, a, b)
        if limit > self.now:
            self.now = limit

    def network_residents(self) -> list[int]:
        """Packets still queued or propagating, per flow."""
        counts = [0] * len(self.flows)
        for (_, fi, _, _) in self._queue:
            counts[fi] += 1
        for ev in self._heap:
            if ev[1] in (EV_ENQ, EV_RECV):
                counts[ev[3]] += 1
        return counts

    def run(self) -> SimResult:
        self.advance_to(self.duration_us)
        return SimResult(
            metrics=[fl.metrics for fl in self.flows],
            duration_us=self.duration_us,
            network_residents=self.network_residents(),
        )


def run(
    link: LinkConfig,
    flows: Sequence[FlowSpec],
    duration_us: int,
    event_sink: Optional[Callable[[dict], None]] = None,
) -> SimResult:
    """Run a complete scenario; see Simulation for stepped execution."""
    return Simulation(link, flows, duration_us, event_sink).run()
