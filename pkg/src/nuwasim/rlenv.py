"""Episodic RL environment over a Nuwa-governed simulation.

Each step applies a multiplier to the aggressiveness parameter k,
advances the simulation one monitor interval (100 ms), and returns a
normalized history of receiver-side observations plus an alpha-fairness
reward over throughput, delay, and loss. A newline-delimited JSON
protocol exposes the environment to out-of-process agents.
"""

from __future__ import annotations

import json
import math
import selectors
import socket
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .core import BUCKET_US, ConfigError, TraceSchedule, parse_trace
from .flows import FlowSpec
from .netsim import LinkConfig, Simulation

ACTION_MULTIPLIERS = (0.25, 1.0, 1.05, 1.25, 2.85)
DEFAULT_HISTORY = 10
DEFAULT_INTERVAL_US = 100_000
DEFAULT_MAX_STEPS = 800
K_MIN, K_MAX = 1, 9


class ProtocolError(ValueError):
    """Client message violates the environment protocol."""


@dataclass(frozen=True)
class RewardWeights:
    gamma_w: float = 0.4
    theta_w: float = 0.4
    phi_w: float = 0.2
    alpha: float = 0.6
    epsilon_floor: float = 1e-6

    def __post_init__(self) -> None:
        if min(self.gamma_w, self.theta_w, self.phi_w) <= 0 or self.alpha <= 0:
            raise ConfigError("reward weights and alpha must be positive")


@dataclass(frozen=True)
class MonitorSample:
    g_bytes: int       # data received in the interval
    w_pkts: float      # receiver-computed window
    r_bytes: float     # receive-buffer occupancy
    l_owd_us: int      # one-way delay of the last packet


def alpha_utility(x: float, alpha: float = 0.6, epsilon_floor: float = 1e-6) -> float:
    """x^(1-alpha)/(1-alpha), or log(x) at alpha = 1 (floored away from 0)."""
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    if x < 0:
        raise ValueError("alpha utility needs x >= 0")
    if alpha == 1.0:
        return math.log(max(x, epsilon_floor))
    return x ** (1.0 - alpha) / (1.0 - alpha)


def reward(b_mbps: float, tau_r: float, tau_l: float,
           weights: RewardWeights = RewardWeights()) -> float:
    """gamma*U(b) - theta*U(tau_r) - phi*U(tau_l)."""
    a, e = weights.alpha, weights.epsilon_floor
    return (weights.gamma_w * alpha_utility(b_mbps, a, e)
            - weights.theta_w * alpha_utility(tau_r, a, e)
            - weights.phi_w * alpha_utility(tau_l, a, e))


def apply_action(k: int, action_index: int) -> int:
    """k' = clamp(round_half_up(k * multiplier), 1, 9)."""
    if not 0 <= action_index < len(ACTION_MULTIPLIERS):
        raise ProtocolError(f"action index out of range: {action_index}")
    scaled = k * ACTION_MULTIPLIERS[action_index]
    return max(K_MIN, min(K_MAX, math.floor(scaled + 0.5)))


class NuwaEnv:
    """Single governed Nuwa flow on a trace-driven link."""

    def __init__(
        self,
        trace: TraceSchedule,
        k0: int = 7,
        td_us: float = 5000.0,
        rho_us: float = 2500.0,
        seed: int = 1,
        queue_capacity: int = 250,
        fwd_delay_us: int = 20_000,
        rev_delay_us: int = 20_000,
        random_loss_rate: float = 0.0,
        min_window_us: int = 10_000_000,
        history: int = DEFAULT_HISTORY,
        interval_us: int = DEFAULT_INTERVAL_US,
        max_steps: int = DEFAULT_MAX_STEPS,
        weights: RewardWeights = RewardWeights(),
        loop_trace: bool = True,
    ):
        if not K_MIN <= k0 <= K_MAX:
            raise ConfigError("k0 must be in [1, 9]")
        self.trace = trace
        self.k0 = k0
        self.td_us = td_us
        self.rho_us = rho_us
        self.seed = seed
        self.queue_capacity = queue_capacity
        self.fwd_delay_us = fwd_delay_us
        self.rev_delay_us = rev_delay_us
        self.random_loss_rate = random_loss_rate
        self.min_window_us = min_window_us
        self.history = history
        self.interval_us = interval_us
        self.max_steps = max_steps
        self.weights = weights
        self.loop_trace = loop_trace
        self._drain_bps = trace.mean_rate_bps / 8.0  # bytes/s consumed by the app
        self._sim: Optional[Simulation] = None
        self._done = True

    # -- episode lifecycle ---------------------------------------------------

    def reset(self) -> list[float]:
        link = LinkConfig(
            trace=self.trace,
            queue_capacity=self.queue_capacity,
            fwd_delay_us=self.fwd_delay_us,
            rev_delay_us=self.rev_delay_us,
            random_loss_rate=self.random_loss_rate,
            rng_seed=self.seed,
            loop_trace=self.loop_trace,
        )
        spec = FlowSpec(algo="nuwa", start_us=0, k=self.k0,
                        td_us=self.td_us, rho_us=self.rho_us,
                        min_window_us=self.min_window_us)
        horizon = (self.max_steps + 1) * self.interval_us
        if not self.loop_trace:
            horizon = min(horizon, self.trace.duration_ms * 1000)
        self._sim = Simulation(link, [spec], duration_us=horizon)
        self._flow = self._sim.flows[0]
        self.k = self.k0
        self._step_i = 0
        self._done = False
        self._buffer_bytes = 0.0
        self._prev = (0, 0, 0, 0)  # bytes, delivered, lost, owd_sum/count marker
        self._prev_owd = (0, 0)
        self._maxes = [0.0, 0.0, 0.0, 0.0]
        self._hist: deque[list[float]] = deque(
            [[0.0, 0.0, 0.0, 0.0] for _ in range(self.history)], maxlen=self.history
        )
        return self._obs()

    def _obs(self) -> list[float]:
        out: list[float] = []
        for row in self._hist:
            out.extend(row)
        return out

    def _normalize(self, sample: MonitorSample) -> list[float]:
        raw = [float(sample.g_bytes), sample.w_pkts, sample.r_bytes, float(sample.l_owd_us)]
        normed = []
        for i, v in enumerate(raw):
            if v > self._maxes[i]:
                self._maxes[i] = v
            m = self._maxes[i]
            normed.append(min(max(v / m, 0.0), 1.0) if m > 0 else 0.0)
        return normed

    def step(self, action_index: int):
        if self._done or self._sim is None:
            raise ProtocolError("step after episode end (reset required)")
        self.k = apply_action(self.k, action_index)
        self._flow.receiver.params.k = self.k

        m = self._flow.metrics
        recv = self._flow.receiver
        b0, d0, l0 = m.bytes_delivered, m.packets_delivered, m.packets_lost
        o_sum0, o_cnt0 = recv.owd_sum_us, recv.owd_count

        self._step_i += 1
        t_end = self._step_i * self.interval_us
        self._sim.advance_to(t_end)

        g = m.bytes_delivered - b0
        delivered = m.packets_delivered - d0
        lost = m.packets_lost - l0
        o_cnt = recv.owd_count - o_cnt0
        mean_owd_us = (recv.owd_sum_us - o_sum0) / o_cnt if o_cnt else 0.0

        interval_s = self.interval_us / 1e6
        self._buffer_bytes = max(0.0, self._buffer_bytes + g - self._drain_bps * interval_s)
        sample = MonitorSample(g, recv.state.w, self._buffer_bytes, recv.last_owd_us)
        self._hist.append(self._normalize(sample))

        b_mbps = g * 8 / interval_s / 1e6
        tau_r = mean_owd_us / 100_000.0  # delay in units of 100 ms
        tau_l = lost / (lost + delivered) if (lost + delivered) else 0.0
        r = reward(b_mbps, tau_r, tau_l, self.weights)

        trace_done = (not self.loop_trace) and t_end >= self.trace.duration_ms * 1000
        self._done = self._step_i >= self.max_steps or trace_done
        info = {
            "b_mbps": b_mbps, "tau_r": tau_r, "tau_l": tau_l,
            "k": self.k, "t_ms": t_end // 1000,
        }
        return self._obs(), r, self._done, info


# -- wire protocol -----------------------------------------------------------


def _fmt(value) -> str:
    """JSON with floats at 9 significant digits (deterministic)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".9g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{_fmt(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"unserializable: {type(value)}")


def state_reply(obs, rew, done, info) -> bytes:
    msg = {"type": "state", "obs": obs, "reward": rew, "done": done, "info": info}
    return (_fmt(msg) + "\n").encode()


def error_reply(msg: str) -> bytes:
    return (_fmt({"type": "error", "msg": msg}) + "\n").encode()


class EnvServer:
    """Serves one protocol session at a time over a local TCP socket.

    Client messages: config, reset, step, close. reset/step get a state
    reply; config and close are silent. Malformed or unknown messages
    get an error reply and the connection is closed; state errors (step
    after done, bad action) get an error reply and the session stays up.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 defaults: Optional[dict] = None):
        self.defaults = dict(defaults or {})
        self._listener = socket.create_server((host, port))
        self._listener.setblocking(False)
        self.address = self._listener.getsockname()
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._listener, selectors.EVENT_READ, "listen")
        self._active: Optional[socket.socket] = None
        self._buf = b""
        self._env: Optional[NuwaEnv] = None
        self._config: dict = {}
        self._running = False

    def stop(self) -> None:
        self._running = False

    def close(self) -> None:
        self._drop_active()
        self._sel.unregister(self._listener)
        self._listener.close()

    def _drop_active(self) -> None:
        if self._active is not None:
            try:
                self._sel.unregister(self._active)
            except (KeyError, ValueError):
                pass
            self._active.close()
            self._active = None
        self._buf = b""
        self._env = None
        self._config = {}

    def _build_env(self) -> NuwaEnv:
        cfg = dict(self.defaults)
        cfg.update(self._config)
        trace = cfg.pop("trace", None)
        if isinstance(trace, str):
            with open(trace, "rb") as fh:
                trace = parse_trace(fh.read())
        if trace is None:
            raise ConfigError("no trace configured")
        kwargs = {}
        for key in ("k0", "td_us", "rho_us", "seed", "queue_capacity",
                    "fwd_delay_us", "rev_delay_us", "random_loss_rate",
                    "min_window_us", "history", "interval_us", "max_steps",
                    "loop_trace"):
            if key in cfg:
                kwargs[key] = cfg[key]
        return NuwaEnv(trace, **kwargs)

    def _handle_line(self, line: bytes) -> tuple[Optional[bytes], bool]:
        """Returns (reply bytes or None, keep_connection)."""
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("not an object")
        except ValueError:
            return error_reply("malformed message"), False
        mtype = msg.get("type")
        if mtype == "config":
            self._config = {k: v for k, v in msg.items() if k != "type"}
            self._env = None
            return None, True
        if mtype == "reset":
            try:
                self._env = self._build_env()
            except (ConfigError, OSError, ValueError) as exc:
                return error_reply(f"config error: {exc}"), True
            obs = self._env.reset()
            info = {"b_mbps": 0.0, "tau_r": 0.0, "tau_l": 0.0,
                    "k": self._env.k0, "t_ms": 0}
            return state_reply(obs, None, False, info), True
        if mtype == "step":
            if self._env is None:
                return error_reply("reset required before step"), True
            try:
                action = int(msg.get("action", -1))
                obs, rew, done, info = self._env.step(action)
            except ProtocolError as exc:
                return error_reply(str(exc)), True
            return state_reply(obs, rew, done, info), True
        if mtype == "close":
            return None, False
        return error_reply(f"unknown message type: {mtype!r}"), False

    def serve_forever(self, poll_s: float = 0.2) -> None:
        """Accept sessions until stop(); one session at a time."""
        self._running = True
        try:
            while self._running:
                for key, _ in self._sel.select(timeout=poll_s):
                    if key.data == "listen":
                        self._accept()
                    else:
                        self._read(key.fileobj)
        finally:
            self.close()

    def _accept(self) -> None:
        try:
            conn, _ = self._listener.accept()
        except OSError:
            return
        if self._active is not None:
            conn.sendall(error_reply("server busy: one session at a time"))
            conn.close()
            return
        conn.setblocking(False)
        self._active = conn
        self._sel.register(conn, selectors.EVENT_READ, "conn")

    def _read(self, conn: socket.socket) -> None:
        try:
            data = conn.recv(65536)
        except (BlockingIOError, InterruptedError):
            return
        except OSError:
            self._drop_active()
            return
        if not data:
            self._drop_active()
            return
        self._buf += data
        while b"\n" in self._buf:
            line, self._buf = self._buf.split(b"\n", 1)
            if not line.strip():
                continue
            reply, keep = self._handle_line(line)
            try:
                if reply is not None:
                    conn.sendall(reply)
            except OSError:
                keep = False
            if not keep:
                self._drop_active()
                return


def serve(host: str, port: int, defaults: Optional[dict] = None) -> EnvServer:
    """Bind and return a server; caller runs serve_forever()."""
    return EnvServer(host, port, defaults)
