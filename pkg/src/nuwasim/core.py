"""Shared time base, packet records, trace ingestion, and flow metrics.

Internal time unit is the integer microsecond. Trace files carry
millisecond timestamps and are scaled on ingest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

MTU_BYTES = 1500
US_PER_MS = 1000
BUCKET_US = 100_000  # 100 ms metric buckets, aligned to the RL monitor interval

METRICS_CSV_HEADER = "t_ms,flow,cwnd_pkts,rtt_us,qdelay_us,thru_bps,lost"


class TraceError(ValueError):
    """Malformed or unusable trace input."""


class ConfigError(ValueError):
    """Invalid simulation or controller configuration."""


@dataclass
class Packet:
    flow_id: int
    seq: int
    size: int = MTU_BYTES
    sent_at: int = 0
    delivered_at: Optional[int] = None
    dropped: bool = False

    def __post_init__(self) -> None:
        if self.delivered_at is not None:
            if self.dropped:
                raise ValueError("packet cannot be both delivered and dropped")
            if self.delivered_at < self.sent_at:
                raise ValueError("delivered_at precedes sent_at")


@dataclass
class AckFeedback:
    flow_id: int
    acked_seq: int
    sent_at: int
    received_at: int
    advertised_window: int

    def __post_init__(self) -> None:
        if self.received_at < self.sent_at:
            raise ValueError("received_at precedes sent_at")


@dataclass(frozen=True)
class TraceSchedule:
    """Ordered delivery-opportunity timestamps (ms); one MTU packet may
    depart the bottleneck at each timestamp."""

    opportunities: tuple[int, ...]
    duration_ms: int

    def __post_init__(self) -> None:
        if not self.opportunities:
            raise TraceError("empty trace")
        last = -1
        for t in self.opportunities:
            if t < last:
                raise TraceError("opportunities not sorted")
            last = t
        if last >= self.duration_ms:
            raise TraceError("timestamp beyond trace duration")

    @property
    def mean_rate_bps(self) -> float:
        return len(self.opportunities) * MTU_BYTES * 8 * 1000.0 / self.duration_ms

    def rate_per_second_bps(self) -> list[float]:
        """Deliverable capacity per whole second of the trace, bits/s."""
        n_sec = (self.duration_ms + 999) // 1000
        counts = [0] * n_sec
        for t in self.opportunities:
            counts[t // 1000] += 1
        return [c * MTU_BYTES * 8.0 for c in counts]


def parse_trace(text: bytes | str) -> TraceSchedule:
    """Parse a newline-delimited list of millisecond timestamps.

    Rejects unsorted input rather than silently sorting it.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    stamps: list[int] = []
    last = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            t = int(line, 10)
        except ValueError:
            raise TraceError(f"line {lineno}: not an integer: {line!r}") from None
        if t < 0:
            raise TraceError(f"line {lineno}: negative timestamp")
        if t < last:
            raise TraceError(f"line {lineno}: unsorted timestamp")
        stamps.append(t)
        last = t
    if not stamps:
        raise TraceError("empty trace")
    return TraceSchedule(tuple(stamps), stamps[-1] + 1)


def serialize_trace(trace: TraceSchedule) -> str:
    return "\n".join(str(t) for t in trace.opportunities) + "\n"


def piecewise_trace(segments: Iterable[tuple[float, int]], mtu: int = MTU_BYTES) -> TraceSchedule:
    """Build a trace from (rate_mbps, duration_ms) segments."""
    stamps: list[int] = []
    start_ms = 0
    for rate_mbps, dur_ms in segments:
        if dur_ms <= 0:
            raise TraceError("segment duration must be positive")
        if rate_mbps > 0:
            step_ms = mtu * 8 / (rate_mbps * 1000.0)  # ms per packet
            t = float(start_ms)
            end = start_ms + dur_ms
            while t < end:
                stamps.append(int(t))
                t += step_ms
        start_ms += dur_ms
    if not stamps:
        raise TraceError("trace has no delivery opportunities")
    # duration covers the full last segment even if it ends idle
    return TraceSchedule(tuple(stamps), max(start_ms, stamps[-1] + 1))


def constant_trace(rate_mbps: float, duration_ms: int, mtu: int = MTU_BYTES) -> TraceSchedule:
    return piecewise_trace([(rate_mbps, duration_ms)], mtu)


def square_wave_trace(
    hi_mbps: float, lo_mbps: float, period_ms: int, duration_ms: int, mtu: int = MTU_BYTES
) -> TraceSchedule:
    """Alternate hi/lo capacity every period_ms, starting with hi."""
    segments = []
    t = 0
    hi = True
    while t < duration_ms:
        d = min(period_ms, duration_ms - t)
        segments.append((hi_mbps if hi else lo_mbps, d))
        t += d
        hi = not hi
    return piecewise_trace(segments, mtu)


def jain_index(rates: Sequence[float]) -> float:
    """Jain fairness index (sum x)^2 / (n * sum x^2), in (0, 1]."""
    if not rates:
        raise ValueError("jain_index needs at least one rate")
    if any(r < 0 for r in rates):
        raise ValueError("rates must be non-negative")
    total = sum(rates)
    if total == 0:
        raise ValueError("jain_index undefined for all-zero rates")
    sq = sum(r * r for r in rates)
    return (total * total) / (len(rates) * sq)


@dataclass
class FlowMetrics:
    """Per-flow counters and time series collected by the simulator.

    Sample series hold (t_us, value_us) pairs in time order. Bucketed
    series are indexed by t_us // BUCKET_US.
    """

    bytes_delivered: int = 0
    packets_sent: int = 0
    packets_delivered: int = 0
    packets_lost: int = 0
    queue_delay_samples: list[tuple[int, int]] = field(default_factory=list)
    rtt_samples: list[tuple[int, int]] = field(default_factory=list)
    cwnd_samples: list[tuple[int, float]] = field(default_factory=list)
    bytes_buckets: list[int] = field(default_factory=list)
    delivered_buckets: list[int] = field(default_factory=list)
    lost_buckets: list[int] = field(default_factory=list)

    def _bucket(self, t_us: int) -> int:
        i = t_us // BUCKET_US
        while len(self.bytes_buckets) <= i:
            self.bytes_buckets.append(0)
            self.delivered_buckets.append(0)
            self.lost_buckets.append(0)
        return i

    def record_delivery(self, t_us: int, nbytes: int) -> None:
        self.bytes_delivered += nbytes
        self.packets_delivered += 1
        i = self._bucket(t_us)
        self.bytes_buckets[i] += nbytes
        self.delivered_buckets[i] += 1

    def record_loss(self, t_us: int) -> None:
        self.packets_lost += 1
        self.lost_buckets[self._bucket(t_us)] += 1

    @property
    def throughput_series(self) -> list[float]:
        """Delivered bits/s per 100 ms bucket."""
        scale = 8 * 1_000_000 / BUCKET_US
        return [b * scale for b in self.bytes_buckets]

    def bytes_in_window(self, t1_us: int, t2_us: int) -> int:
        i1, i2 = t1_us // BUCKET_US, t2_us // BUCKET_US
        return sum(self.bytes_buckets[i1:min(i2, len(self.bytes_buckets))])


@dataclass(frozen=True)
class FlowSummary:
    mean_queue_delay_us: float
    max_queue_delay_us: int
    loss_rate: float
    total_bytes: int
    mean_throughput_bps: float


def summarize(metrics: FlowMetrics, window_us: tuple[int, int]) -> FlowSummary:
    """Aggregate metrics over [t1, t2). Bucketed counters are clipped to
    whole 100 ms buckets; sample series use exact times."""
    t1, t2 = window_us
    if t2 <= t1 or t1 < 0:
        raise ValueError("empty window")
    waits = [w for (t, w) in metrics.queue_delay_samples if t1 <= t < t2]
    i1, i2 = t1 // BUCKET_US, (t2 + BUCKET_US - 1) // BUCKET_US
    i2 = min(i2, len(metrics.bytes_buckets))
    delivered = sum(metrics.delivered_buckets[i1:i2])
    lost = sum(metrics.lost_buckets[i1:i2])
    nbytes = sum(metrics.bytes_buckets[i1:i2])
    loss_rate = lost / (lost + delivered) if (lost + delivered) else 0.0
    return FlowSummary(
        mean_queue_delay_us=sum(waits) / len(waits) if waits else 0.0,
        max_queue_delay_us=max(waits) if waits else 0,
        loss_rate=loss_rate,
        total_bytes=nbytes,
        mean_throughput_bps=nbytes * 8 * 1_000_000 / (t2 - t1),
    )
