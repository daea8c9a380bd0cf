"""Experiment front-end.

Subcommands: run, fairness, sweep-k, trace-validate, env-serve.
Exit codes: 0 ok, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
from typing import Optional, Sequence

from .core import (
    BUCKET_US, ConfigError, METRICS_CSV_HEADER, MTU_BYTES, TraceError,
    TraceSchedule, jain_index, parse_trace,
)
from .flows import FlowSpec
from .netsim import LinkConfig, SimResult, Simulation
from .rlenv import EnvServer


def _load_trace(path: str) -> TraceSchedule:
    try:
        with open(path, "rb") as fh:
            return parse_trace(fh.read())
    except OSError as exc:
        raise TraceError(f"cannot read trace {path!r}: {exc.strerror}") from None


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w"), True


class _EventLogWriter:
    def __init__(self, path: str):
        self._fh = open(path, "w")

    def __call__(self, row: dict) -> None:
        self._fh.write(json.dumps(row, separators=(",", ":")))
        self._fh.write("\n")

    def close(self) -> None:
        self._fh.close()


def _link_from_args(args, trace: TraceSchedule) -> LinkConfig:
    return LinkConfig(
        trace=trace,
        queue_capacity=args.queue_cap,
        fwd_delay_us=args.prop_us,
        rev_delay_us=args.rev_us,
        random_loss_rate=args.loss_rate,
        rng_seed=args.seed,
        mtu=args.mtu,
        loop_trace=not args.no_loop,
    )


def _nuwa_spec_from_args(args, start_us: int = 0) -> FlowSpec:
    return FlowSpec(algo="nuwa", start_us=start_us, k=args.k,
                    td_us=args.td, rho_us=args.rho, w_max=args.w_max,
                    min_window_us=args.min_window_us, paper_sign=args.paper_sign)


def _spec_for(algo: str, args, start_us: int) -> FlowSpec:
    if algo == "nuwa":
        return _nuwa_spec_from_args(args, start_us)
    return FlowSpec(algo=algo, start_us=start_us, window=args.window)


def write_metrics_csv(result: SimResult, out) -> None:
    """One row per (100 ms bucket, flow); carries last-known cwnd/rtt."""
    out.write(METRICS_CSV_HEADER + "\n")
    n_buckets = result.duration_us // BUCKET_US
    for fi, m in enumerate(result.metrics):
        cwnd_iter = iter(m.cwnd_samples)
        rtt_iter = iter(m.rtt_samples)
        q_iter = iter(m.queue_delay_samples)
        cw_next = next(cwnd_iter, None)
        rtt_next = next(rtt_iter, None)
        q_next = next(q_iter, None)
        cwnd, rtt = 0.0, 0
        for b in range(n_buckets):
            t_end = (b + 1) * BUCKET_US
            while cw_next is not None and cw_next[0] < t_end:
                cwnd = cw_next[1]
                cw_next = next(cwnd_iter, None)
            rtts = []
            while rtt_next is not None and rtt_next[0] < t_end:
                rtts.append(rtt_next[1])
                rtt_next = next(rtt_iter, None)
            if rtts:
                rtt = sum(rtts) // len(rtts)
            waits = []
            while q_next is not None and q_next[0] < t_end:
                waits.append(q_next[1])
                q_next = next(q_iter, None)
            qdelay = sum(waits) // len(waits) if waits else 0
            nbytes = m.bytes_buckets[b] if b < len(m.bytes_buckets) else 0
            lost = m.lost_buckets[b] if b < len(m.lost_buckets) else 0
            thru = nbytes * 8 * 1_000_000 // BUCKET_US
            out.write(f"{b * BUCKET_US // 1000},{fi},{cwnd:.4f},{rtt},{qdelay},{thru},{lost}\n")


def _run_scenario(args, flows: list[FlowSpec], trace: TraceSchedule) -> SimResult:
    sink = None
    writer = None
    if args.event_log:
        writer = _EventLogWriter(args.event_log)
        sink = writer
    try:
        sim = Simulation(_link_from_args(args, trace), flows,
                         duration_us=int(args.dur * 1_000_000), event_sink=sink)
        return sim.run()
    finally:
        if writer is not None:
            writer.close()


def cmd_run(args) -> int:
    trace = _load_trace(args.trace)
    flows = [_spec_for(args.algo, args, 0)]
    result = _run_scenario(args, flows, trace)
    out, owned = _open_out(args.out)
    try:
        write_metrics_csv(result, out)
    finally:
        if owned:
            out.close()
    return 0


def cmd_fairness(args) -> int:
    trace = _load_trace(args.trace)
    a, _, b = args.pair.partition(",")
    if not b:
        raise ConfigError("--pair needs two comma-separated algorithms")
    stagger_us = int(args.stagger * 1_000_000)
    flows = [
        _spec_for(a, args, 0),
        _spec_for(a, args, stagger_us),
        _spec_for(b, args, 2 * stagger_us),
        _spec_for(b, args, 3 * stagger_us),
    ]
    result = _run_scenario(args, flows, trace)
    out, owned = _open_out(args.out)
    try:
        out.write("t_s," + ",".join(f"flow{i}_bps" for i in range(4)) + ",jain\n")
        per_sec = 1_000_000 // BUCKET_US
        n_sec = int(args.dur)
        for s in range(n_sec):
            rates = []
            for m in result.metrics:
                i1, i2 = s * per_sec, (s + 1) * per_sec
                rates.append(sum(m.bytes_buckets[i1:min(i2, len(m.bytes_buckets))]) * 8.0)
            started = [r for f, r in zip(flows, rates) if f.start_us <= s * 1_000_000]
            jain = jain_index(started) if started and any(started) else ""
            jtxt = f"{jain:.6f}" if jain != "" else ""
            out.write(f"{s}," + ",".join(f"{r:.0f}" for r in rates) + f",{jtxt}\n")
    finally:
        if owned:
            out.close()
    return 0


def time_to_track_s(trace: TraceSchedule, metrics, smooth_buckets: int = 5) -> float:
    """Seconds after the largest capacity step-up until smoothed
    throughput first reaches 90% of the new capacity."""
    caps = trace.rate_per_second_bps()
    if len(caps) < 2:
        return float("inf")
    best, step_sec = 0.0, -1
    for i in range(len(caps) - 1):
        if caps[i + 1] - caps[i] > best:
            best, step_sec = caps[i + 1] - caps[i], i + 1
    if step_sec < 0:
        return float("inf")
    new_cap = caps[step_sec]
    series = metrics.throughput_series
    per_sec = 1_000_000 // BUCKET_US
    start = step_sec * per_sec
    for i in range(start, len(series)):
        lo = max(0, i - smooth_buckets + 1)
        window = series[lo:i + 1]
        if sum(window) / len(window) >= 0.9 * new_cap:
            return (i + 1) * BUCKET_US / 1e6 - step_sec
    return float("inf")


def cmd_sweep_k(args) -> int:
    trace = _load_trace(args.trace)
    out, owned = _open_out(args.out)
    try:
        out.write("k,thru_bps,mean_qdelay_us,max_qdelay_us,losses,time_to_track_s\n")
        for k in range(1, 10):
            spec = FlowSpec(algo="nuwa", k=k, td_us=args.td, rho_us=args.rho,
                            min_window_us=args.min_window_us,
                            paper_sign=args.paper_sign)
            sim = Simulation(_link_from_args(args, trace), [spec],
                             duration_us=int(args.dur * 1_000_000))
            result = sim.run()
            m = result.metrics[0]
            waits = [w for (_, w) in m.queue_delay_samples]
            mean_q = sum(waits) / len(waits) if waits else 0.0
            max_q = max(waits) if waits else 0
            thru = m.bytes_delivered * 8 / args.dur
            ttt = time_to_track_s(trace, m)
            ttxt = f"{ttt:.3f}" if ttt != float("inf") else "inf"
            out.write(f"{k},{thru:.0f},{mean_q:.1f},{max_q},{m.packets_lost},{ttxt}\n")
    finally:
        if owned:
            out.close()
    return 0


def cmd_trace_validate(args) -> int:
    trace = _load_trace(args.trace)
    print(f"ok: {len(trace.opportunities)} opportunities, "
          f"{trace.duration_ms} ms, mean rate {trace.mean_rate_bps / 1e6:.3f} Mbit/s")
    return 0


def cmd_env_serve(args) -> int:
    defaults = {
        "k0": args.k, "td_us": args.td, "rho_us": args.rho, "seed": args.seed,
        "queue_capacity": args.queue_cap, "fwd_delay_us": args.prop_us,
        "rev_delay_us": args.rev_us, "random_loss_rate": args.loss_rate,
        "min_window_us": args.min_window_us,
    }
    if args.trace:
        defaults["trace"] = args.trace
    try:
        server = EnvServer(args.host, args.port, defaults)
    except OSError as exc:
        print(f"bind failed: {exc}", file=sys.stderr)
        return 1

    def _stop(signum, frame):
        server.stop()

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    print(f"serving on {server.address[0]}:{server.address[1]}", flush=True)
    server.serve_forever()
    return 0


def _add_link_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--queue-cap", type=int, default=250, help="bottleneck queue, packets")
    p.add_argument("--prop-us", type=int, default=20_000, help="one-way forward delay, us")
    p.add_argument("--rev-us", type=int, default=20_000, help="ACK path delay, us")
    p.add_argument("--loss-rate", type=float, default=0.0, help="random loss probability")
    p.add_argument("--mtu", type=int, default=MTU_BYTES)
    p.add_argument("--no-loop", action="store_true", help="do not repeat the trace")


def _add_nuwa_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=7, help="aggressiveness, [1, 9]")
    p.add_argument("--td", type=float, default=5000.0, help="target queueing delay, us")
    p.add_argument("--rho", type=float, default=2500.0, help="delay sensitivity, us")
    p.add_argument("--w-max", type=float, default=10000.0,
                   help="receive-window bound, packets")
    p.add_argument("--min-window-us", type=int, default=10_000_000,
                   help="sliding minimum-delay window, us")
    p.add_argument("--paper-sign", action="store_true",
                   help="use the inverted raw-delay orientation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nuwasim")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single-flow simulation, metrics CSV")
    p_run.add_argument("--trace", required=True)
    p_run.add_argument("--algo", choices=["nuwa", "cubic", "reno", "fixed"], default="nuwa")
    p_run.add_argument("--window", type=float, default=10.0, help="fixed algo window")
    p_run.add_argument("--dur", type=float, default=80.0, help="seconds")
    _add_nuwa_flags(p_run)
    _add_link_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_fair = sub.add_parser("fairness", help="staggered 4-flow competition")
    p_fair.add_argument("--trace", required=True)
    p_fair.add_argument("--pair", default="nuwa,cubic",
                        help="two algos; flows start A,A,B,B every stagger")
    p_fair.add_argument("--stagger", type=float, default=10.0, help="seconds between starts")
    p_fair.add_argument("--dur", type=float, default=80.0)
    p_fair.add_argument("--window", type=float, default=10.0)
    _add_nuwa_flags(p_fair)
    _add_link_flags(p_fair)
    p_fair.set_defaults(func=cmd_fairness)

    p_sweep = sub.add_parser("sweep-k", help="summary table over k in [1, 9]")
    p_sweep.add_argument("--trace", required=True)
    p_sweep.add_argument("--dur", type=float, default=60.0)
    _add_nuwa_flags(p_sweep)
    _add_link_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep_k)

    p_val = sub.add_parser("trace-validate", help="parse and summarize a trace file")
    p_val.add_argument("--trace", required=True)
    p_val.set_defaults(func=cmd_trace_validate)

    p_env = sub.add_parser("env-serve", help="serve the RL environment protocol")
    p_env.add_argument("--host", default="127.0.0.1")
    p_env.add_argument("--port", type=int, default=9000)
    p_env.add_argument("--trace", default=None)
    _add_nuwa_flags(p_env)
    _add_link_flags(p_env)
    p_env.set_defaults(func=cmd_env_serve)

    for p in (p_run, p_fair, p_sweep, p_env):
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--out", default=None, help="CSV path (default stdout)")
        p.add_argument("--event-log", default=None, help="NDJSON event log path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TraceError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
