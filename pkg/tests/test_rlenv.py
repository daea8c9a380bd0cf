import json
import math
import socket
import threading
import time

import pytest

from nuwasim.core import ConfigError, constant_trace, piecewise_trace, serialize_trace
from nuwasim.rlenv import (
    ACTION_MULTIPLIERS, EnvServer, NuwaEnv, ProtocolError, RewardWeights,
    alpha_utility, apply_action, reward,
)


class TestAlphaUtility:
    def test_unit_input(self):
        assert alpha_utility(1.0, 0.6) == pytest.approx(2.5)

    def test_log_branch(self):
        assert alpha_utility(1.0, 1.0) == 0.0

    def test_zero_input(self):
        assert alpha_utility(0.0, 0.6) == 0.0

    def test_ten(self):
        # 10^0.4 / 0.4
        assert alpha_utility(10.0, 0.6) == pytest.approx(6.2797, abs=1e-4)

    def test_log_floor(self):
        assert alpha_utility(0.0, 1.0) == math.log(1e-6)

    def test_alpha_must_be_positive(self):
        with pytest.raises(ConfigError):
            alpha_utility(1.0, 0.0)
        with pytest.raises(ConfigError):
            alpha_utility(1.0, -0.5)


class TestReward:
    def test_origin_is_zero(self):
        assert reward(0.0, 0.0, 0.0) == 0.0

    def test_hand_case(self):
        # 0.4*U(10) - 0.4*U(0.5) - 0: 10^0.4=2.51189, 0.5^0.4=0.75786
        assert reward(10.0, 0.5, 0.0) == pytest.approx(1.7540, abs=2e-4)

    def test_monotone_in_throughput(self):
        assert reward(12.0, 0.5, 0.1) > reward(10.0, 0.5, 0.1)

    def test_monotone_in_delay(self):
        assert reward(10.0, 0.8, 0.1) < reward(10.0, 0.5, 0.1)

    def test_monotone_in_loss(self):
        assert reward(10.0, 0.5, 0.2) < reward(10.0, 0.5, 0.1)

    def test_weights_validated(self):
        with pytest.raises(ConfigError):
            RewardWeights(gamma_w=0.0)
        with pytest.raises(ConfigError):
            RewardWeights(alpha=-1.0)


class TestApplyAction:
    def test_identity(self):
        assert apply_action(7, 1) == 7

    def test_quarter(self):
        assert apply_action(8, 0) == 2

    def test_clamp_high(self):
        assert apply_action(4, 4) == 9  # 11.4 clamps

    def test_round_half_up(self):
        assert apply_action(7, 3) == 9  # 8.75 rounds up

    def test_clamp_low(self):
        assert apply_action(1, 0) == 1  # 0.25 clamps to floor

    def test_bad_index(self):
        with pytest.raises(ProtocolError):
            apply_action(7, 5)
        with pytest.raises(ProtocolError):
            apply_action(7, -1)

    def test_never_leaves_range_and_identity_fixed_point(self):
        for k in range(1, 10):
            assert apply_action(k, 1) == k
            for a in range(5):
                assert 1 <= apply_action(k, a) <= 9


class TestNuwaEnv:
    def _env(self, **kw):
        tr = constant_trace(8, 10_000)
        kw.setdefault("max_steps", 50)
        return NuwaEnv(tr, k0=7, td_us=5000.0, rho_us=2500.0, seed=1, **kw)

    def test_reset_returns_zero_history(self):
        env = self._env(history=10)
        obs = env.reset()
        assert len(obs) == 40
        assert all(v == 0.0 for v in obs)

    def test_obs_length_constant_and_normalized(self):
        env = self._env()
        env.reset()
        for _ in range(10):
            obs, r, done, info = env.step(1)
            assert len(obs) == 40
            assert all(0.0 <= v <= 1.0 for v in obs)

    def test_done_at_max_steps(self):
        env = self._env(max_steps=12)
        env.reset()
        done = False
        steps = 0
        while not done:
            _, _, done, _ = env.step(1)
            steps += 1
        assert steps == 12

    def test_step_after_done_rejected(self):
        env = self._env(max_steps=3)
        env.reset()
        for _ in range(3):
            env.step(1)
        with pytest.raises(ProtocolError):
            env.step(1)

    def test_info_carries_raw_quantities(self):
        env = self._env()
        env.reset()
        _, _, _, info = env.step(2)
        assert set(info) == {"b_mbps", "tau_r", "tau_l", "k", "t_ms"}
        assert info["t_ms"] == 100
        assert info["k"] == apply_action(7, 2)

    def test_k_evolves_with_actions(self):
        env = self._env()
        env.reset()
        env.step(0)  # 7 * 0.25 -> 2
        assert env.k == 2
        env.step(4)  # 2 * 2.85 -> 6 (5.7 rounds up)
        assert env.k == 6

    def test_steady_state_reward_stable(self):
        env = self._env(max_steps=80)
        env.reset()
        rewards = []
        for _ in range(80):
            _, r, _, _ = env.step(1)
            rewards.append(r)
        tail = rewards[-20:]
        mean = sum(tail) / len(tail)
        assert all(abs(r - mean) < 0.1 * abs(mean) for r in tail)

    def test_trace_end_terminates_without_loop(self):
        tr = constant_trace(8, 2000)  # 2 s trace
        env = NuwaEnv(tr, max_steps=800, loop_trace=False)
        env.reset()
        done = False
        steps = 0
        while not done:
            _, _, done, _ = env.step(1)
            steps += 1
        assert steps == 20


class _Client:
    def __init__(self, address, timeout=20.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.buf = b""

    def send(self, msg: dict) -> None:
        self.sock.sendall(json.dumps(msg).encode() + b"\n")

    def recv(self) -> dict:
        while b"\n" not in self.buf:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("server closed")
            self.buf += data
        line, self.buf = self.buf.split(b"\n", 1)
        return json.loads(line)

    def recv_raw(self) -> bytes:
        while b"\n" not in self.buf:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("server closed")
            self.buf += data
        line, self.buf = self.buf.split(b"\n", 1)
        return line

    def close(self):
        self.sock.close()


@pytest.fixture
def server(tmp_path):
    trace_path = tmp_path / "t.pps"
    trace_path.write_text(serialize_trace(constant_trace(8, 5000)))
    srv = EnvServer("127.0.0.1", 0, defaults={"trace": str(trace_path),
                                              "max_steps": 30})
    thread = threading.Thread(target=srv.serve_forever, kwargs={"poll_s": 0.02},
                              daemon=True)
    thread.start()
    yield srv
    srv.stop()
    thread.join(timeout=5)


class TestProtocol:
    def test_reset_reply_shape(self, server):
        c = _Client(server.address)
        c.send({"type": "reset"})
        msg = c.recv()
        assert msg["type"] == "state"
        assert len(msg["obs"]) == 40
        assert msg["reward"] is None
        assert msg["done"] is False
        c.close()

    def test_step_reply(self, server):
        c = _Client(server.address)
        c.send({"type": "reset"})
        c.recv()
        c.send({"type": "step", "action": 2})
        msg = c.recv()
        assert msg["type"] == "state"
        assert isinstance(msg["reward"], float)
        assert set(msg["info"]) == {"b_mbps", "tau_r", "tau_l", "k", "t_ms"}
        c.close()

    def test_config_overrides(self, server):
        c = _Client(server.address)
        c.send({"type": "config", "k0": 3, "td_us": 4000.0, "rho_us": 2000.0,
                "seed": 5})
        c.send({"type": "reset"})
        msg = c.recv()
        assert msg["info"]["k"] == 3
        c.close()

    def test_unknown_type_error(self, server):
        c = _Client(server.address)
        c.send({"type": "warp"})
        msg = c.recv()
        assert msg["type"] == "error"
        c.close()

    def test_malformed_errors_and_closes(self, server):
        c = _Client(server.address)
        c.sock.sendall(b"{nope\n")
        msg = c.recv()
        assert msg["type"] == "error"
        with pytest.raises(ConnectionError):
            c.recv()
        c.close()

    def test_step_before_reset_is_error(self, server):
        c = _Client(server.address)
        c.send({"type": "step", "action": 1})
        assert c.recv()["type"] == "error"
        # session survives a state error
        c.send({"type": "reset"})
        assert c.recv()["type"] == "state"
        c.close()

    def test_bad_action_is_error(self, server):
        c = _Client(server.address)
        c.send({"type": "reset"})
        c.recv()
        c.send({"type": "step", "action": 9})
        assert c.recv()["type"] == "error"
        c.close()

    def test_second_client_refused(self, server):
        c1 = _Client(server.address)
        c1.send({"type": "reset"})
        c1.recv()
        c2 = _Client(server.address)
        msg = c2.recv()
        assert msg["type"] == "error"
        assert "busy" in msg["msg"]
        c2.close()
        c1.close()

    def test_close_frees_session(self, server):
        c1 = _Client(server.address)
        c1.send({"type": "reset"})
        c1.recv()
        c1.send({"type": "close"})
        c1.close()
        time.sleep(0.1)
        c2 = _Client(server.address)
        c2.send({"type": "reset"})
        assert c2.recv()["type"] == "state"
        c2.close()

    def test_deterministic_serialized_rewards(self, server):
        def session():
            c = _Client(server.address)
            c.send({"type": "config", "seed": 9, "k0": 7})
            c.send({"type": "reset"})
            c.recv_raw()
            lines = []
            for a in [1, 2, 0, 4, 1, 3, 1, 1]:
                c.send({"type": "step", "action": a})
                lines.append(c.recv_raw())
            c.send({"type": "close"})
            c.close()
            time.sleep(0.05)
            return b"\n".join(lines)

        assert session() == session()
