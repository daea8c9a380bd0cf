import json

import pytest

from nuwasim.core import ConfigError, constant_trace, parse_trace
from nuwasim.flows import FlowSpec
from nuwasim.netsim import LinkConfig, Simulation, run


def _sink_to(rows):
    return rows.append


class TestLinkConfig:
    def test_validation(self):
        tr = constant_trace(10, 1000)
        with pytest.raises(ConfigError):
            LinkConfig(trace=tr, queue_capacity=0)
        with pytest.raises(ConfigError):
            LinkConfig(trace=tr, random_loss_rate=1.0)
        with pytest.raises(ConfigError):
            LinkConfig(trace=tr, fwd_delay_us=-1)

    def test_unknown_controller_rejected(self):
        tr = constant_trace(10, 1000)
        with pytest.raises(ConfigError, match="unknown controller"):
            run(LinkConfig(trace=tr), [FlowSpec(algo="warp")], 1_000_000)

    def test_needs_a_flow(self):
        tr = constant_trace(10, 1000)
        with pytest.raises(ConfigError):
            run(LinkConfig(trace=tr), [], 1_000_000)

    def test_no_loop_duration_check(self):
        tr = constant_trace(10, 1000)
        with pytest.raises(ConfigError, match="loop"):
            run(LinkConfig(trace=tr, loop_trace=False), [FlowSpec(algo="fixed")], 2_000_000)


class TestSinglePacketPipeline:
    """Fixed window 1 on a 1 pkt/ms trace, 10 ms one-way each direction."""

    def _run(self):
        tr = parse_trace("".join(f"{ms}\n" for ms in range(2000)))
        link = LinkConfig(trace=tr, fwd_delay_us=10_000, rev_delay_us=10_000)
        return run(link, [FlowSpec(algo="fixed", window=1)], 2_000_000)

    def test_steady_rtt_is_prop_plus_service(self):
        res = self._run()
        rtts = [r for (_, r) in res.metrics[0].rtt_samples]
        assert rtts, "no round trips completed"
        assert all(20_000 <= r <= 21_000 for r in rtts)

    def test_zero_queueing_beyond_service_wait(self):
        res = self._run()
        waits = [w for (_, w) in res.metrics[0].queue_delay_samples]
        assert all(w <= 1000 for w in waits)

    def test_no_losses(self):
        res = self._run()
        assert res.metrics[0].packets_lost == 0


class TestStartupBurstDrops:
    """Window 10 into a 5-packet queue: the excess burst is dropped."""

    def _run(self, sink=None):
        tr = parse_trace("".join(f"{ms}\n" for ms in range(2000)))
        link = LinkConfig(trace=tr, queue_capacity=5,
                          fwd_delay_us=10_000, rev_delay_us=10_000)
        return run(link, [FlowSpec(algo="fixed", window=10)], 2_000_000, sink)

    def test_exact_burst_drop_count(self):
        rows = []
        res = self._run(_sink_to(rows))
        drops = [r for r in rows if r["kind"] == "drop"]
        # 10 arrive simultaneously at t=5 ms; 5 fit, seqs 5..9 drop
        assert [r["seq"] for r in drops[:5]] == [5, 6, 7, 8, 9]
        assert all(r["t_us"] == 5000 for r in drops[:5])

    def test_drop_increments_owning_flow(self):
        res = self._run()
        assert res.metrics[0].packets_lost >= 5

    def test_queue_delay_bounded_by_capacity_times_gap(self):
        res = self._run()
        # max inter-opportunity gap is 1 ms, capacity 5
        assert all(w <= 5 * 1000 for (_, w) in res.metrics[0].queue_delay_samples)


class TestOpportunitySemantics:
    def test_two_same_ms_opportunities_fifo(self):
        tr = parse_trace("5\n5\n9\n")
        link = LinkConfig(trace=tr, fwd_delay_us=0, rev_delay_us=10_000,
                          loop_trace=False)
        rows = []
        run(link, [FlowSpec(algo="fixed", window=3)], 10_000, _sink_to(rows))
        delivered = [r for r in rows if r["kind"] == "deliver"]
        assert [(r["t_us"], r["seq"]) for r in delivered[:2]] == [(5000, 0), (5000, 1)]

    def test_wasted_opportunity_no_credit(self):
        # opportunities before any packet arrives must not bank up
        tr = parse_trace("0\n1\n2\n3\n100\n")
        link = LinkConfig(trace=tr, fwd_delay_us=10_000, rev_delay_us=10_000,
                          loop_trace=False)
        rows = []
        run(link, [FlowSpec(algo="fixed", window=4)], 101_000, _sink_to(rows))
        delivered = [r for r in rows if r["kind"] == "deliver"]
        # arrivals at t=5 ms miss opportunities 0..3; only ms 100 serves one
        assert len(delivered) == 1
        assert delivered[0]["t_us"] == 100_000

    def test_wait_is_dequeue_minus_enqueue(self):
        tr = parse_trace("5\n9\n")
        link = LinkConfig(trace=tr, fwd_delay_us=0, rev_delay_us=10_000,
                          loop_trace=False)
        rows = []
        run(link, [FlowSpec(algo="fixed", window=2)], 10_000, _sink_to(rows))
        delivered = {r["seq"]: r for r in rows if r["kind"] == "deliver"}
        assert delivered[0]["wait_us"] == 5000
        assert delivered[1]["wait_us"] == 9000


class TestConservation:
    @pytest.mark.parametrize("algo", ["nuwa", "cubic", "reno", "fixed"])
    def test_sent_equals_delivered_plus_lost_plus_resident(self, algo):
        tr = constant_trace(8, 5000)
        link = LinkConfig(trace=tr, queue_capacity=40, random_loss_rate=0.02,
                          rng_seed=7)
        res = run(link, [FlowSpec(algo=algo, window=60)], 5_000_000)
        m = res.metrics[0]
        assert m.packets_sent == (m.packets_delivered + m.packets_lost
                                  + res.network_residents[0])

    def test_multiflow_conservation(self):
        tr = constant_trace(10, 5000)
        link = LinkConfig(trace=tr, queue_capacity=50)
        res = run(link, [FlowSpec(algo="cubic"),
                         FlowSpec(algo="nuwa", start_us=1_000_000)], 5_000_000)
        for m, resident in zip(res.metrics, res.network_residents):
            assert m.packets_sent == m.packets_delivered + m.packets_lost + resident

    def test_no_loss_mechanism_no_losses(self):
        tr = constant_trace(10, 3000)
        link = LinkConfig(trace=tr, queue_capacity=100_000, random_loss_rate=0.0)
        res = run(link, [FlowSpec(algo="fixed", window=200)], 3_000_000)
        assert res.metrics[0].packets_lost == 0


class TestCapacityBound:
    def test_delivered_bounded_by_opportunities(self):
        tr = constant_trace(6, 4000)
        link = LinkConfig(trace=tr, queue_capacity=10_000)
        rows = []
        run(link, [FlowSpec(algo="fixed", window=10_000)], 4_000_000, _sink_to(rows))
        t1, t2 = 1_000_000, 3_000_000
        dequeues = sum(1 for r in rows if r["kind"] == "deliver" and t1 <= r["t_us"] < t2)
        opps = sum(1 for ms in tr.opportunities if t1 <= ms * 1000 < t2)
        assert dequeues <= opps


class TestDeterminism:
    def _event_bytes(self, stepped=False):
        tr = constant_trace(10, 4000)
        link = LinkConfig(trace=tr, queue_capacity=30, random_loss_rate=0.03,
                          rng_seed=42)
        rows = []
        flows = [FlowSpec(algo="nuwa"), FlowSpec(algo="cubic", start_us=500_000)]
        sim = Simulation(link, flows, 4_000_000, _sink_to(rows))
        if stepped:
            for t in range(0, 4_100_000, 100_000):
                sim.advance_to(t)
        else:
            sim.run()
        return b"\n".join(json.dumps(r, sort_keys=True).encode() for r in rows)

    def test_identical_runs_bit_identical(self):
        assert self._event_bytes() == self._event_bytes()

    def test_stepped_equals_oneshot(self):
        assert self._event_bytes(stepped=True) == self._event_bytes(stepped=False)


class TestTraceLooping:
    def test_loop_extends_capacity(self):
        tr = constant_trace(10, 1000)
        link = LinkConfig(trace=tr, loop_trace=True)
        res = run(link, [FlowSpec(algo="fixed", window=50)], 5_000_000)
        # ~10 Mbit/s sustained across 5 loops
        assert res.metrics[0].bytes_delivered > 4 * (10e6 / 8) * 0.8
