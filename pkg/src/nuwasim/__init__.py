"""Trace-driven bottleneck simulator and receiver-driven congestion control.

Contents:
- core: time base, trace ingestion, flow metrics
- netsim: deterministic discrete-event link simulator
- owd: one-way queueing-delay estimation (windowed min + Kalman)
- tanhtable: integer-only tanh for the window trend
- nuwa: the receiver-driven controller
- baseline: CUBIC and Reno senders
- rlenv: RL environment and its wire protocol
- cli: experiment front-end
"""

from .core import (
    FlowMetrics, TraceSchedule, constant_trace, jain_index, parse_trace,
    piecewise_trace, serialize_trace, square_wave_trace, summarize,
)
from .flows import FlowSpec
from .netsim import LinkConfig, SimResult, Simulation, run
from .nuwa import NuwaParams, NuwaState, compute_trend, update_window
from .rlenv import NuwaEnv, alpha_utility, apply_action, reward

__all__ = [
    "FlowMetrics", "TraceSchedule", "constant_trace", "jain_index",
    "parse_trace", "piecewise_trace", "serialize_trace", "square_wave_trace",
    "summarize", "FlowSpec", "LinkConfig", "SimResult", "Simulation", "run",
    "NuwaParams", "NuwaState", "compute_trend", "update_window",
    "NuwaEnv", "alpha_utility", "apply_action", "reward",
]

__version__ = "0.1.0"
