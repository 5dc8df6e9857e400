import numpy as np
import pytest

from tahfl import analytics as A
from tahfl.config import TimingConfig, TopologyConfig
from tahfl.timing_sim import (
    Event,
    EventKind,
    EventQueue,
    StalenessTrace,
    VersionLedger,
    empirical_bound_satisfaction,
    empirical_cloud_rate,
    empirical_mean_staleness,
    run_timing_sim,
)

UNIT = TimingConfig(lam=1.0, c=1.0, mu_tilde=1.0)


def topo(e, l, m, k):  # noqa: E741
    return TopologyConfig(n=e * l, e=e, l=l, m=m, k=k)


def brute_force_cycles(top, tc, cycles_per_edge, rng):
    """Independent per-cycle simulation via order statistics, no event queue.

    Returns (sorted aggregation events as (time, edge, responders), cycle durations).
    """
    events = []
    durations = []
    for s in range(top.e):
        t = 0.0
        for _ in range(cycles_per_edge):
            avail = rng.exponential(1 / tc.lam, top.l)
            order = np.argsort(avail)[: top.m]
            t_dispatch = avail[order[-1]]
            up = rng.exponential(1 / tc.mu_tilde, top.m)
            first = np.argsort(up)[: top.k]
            dur = t_dispatch + tc.c + up[first[-1]]
            t += dur
            durations.append(dur)
            events.append((t, s, sorted(s * top.l + order[first])))
    events.sort()
    return events, np.asarray(durations)


def replay_staleness(n, events):
    cloud = 0
    version = np.zeros(n, dtype=int)
    out = []
    for _, _, clients in events:
        for i in clients:
            out.append(cloud - version[i])
        cloud += 1
        version[clients] = cloud
    return np.asarray(out)


class TestEventQueue:
    def test_pops_in_time_order(self):
        q = EventQueue()
        rng = np.random.default_rng(0)
        for t in rng.random(200):
            q.push(Event(float(t), EventKind.UPLINK_ARRIVAL, 0, 0, 0))
        times = [q.pop().time for _ in range(len(q))]
        assert times == sorted(times)

    def test_tiebreak_is_lexicographic(self):
        q = EventQueue()
        evs = [
            Event(1.0, EventKind.UPLINK_ARRIVAL, 0, 0, 0),
            Event(1.0, EventKind.CLIENT_AVAILABLE, 1, 5, 0),
            Event(1.0, EventKind.CLIENT_AVAILABLE, 0, 3, 2),
            Event(1.0, EventKind.CLIENT_AVAILABLE, 0, 3, 1),
            Event(1.0, EventKind.CLIENT_AVAILABLE, 0, 2, 9),
        ]
        for ev in evs:
            q.push(ev)
        popped = [q.pop() for _ in range(len(evs))]
        assert popped == sorted(evs, key=lambda ev: (ev.time, int(ev.kind), ev.edge_id, ev.client_id, ev.cycle_id))
        assert not q

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            EventQueue().push(Event(-1.0, EventKind.CLIENT_AVAILABLE, 0, 0, 0))


def test_ledger():
    led = VersionLedger(4, 2)
    led.cloud_update([0, 1])
    led.cloud_update([2])
    assert led.cloud_version == 2
    assert [led.staleness(i) for i in range(4)] == [1, 1, 0, 2]


class TestSmallSystems:
    def test_lone_client_is_never_stale(self):
        r = run_timing_sim(topo(1, 1, 1, 1), UNIT, 500, seed=3)
        assert len(r.trace) == 500
        assert np.all(r.trace.staleness == 0)
        assert empirical_mean_staleness(r.trace) == 0.0

    def test_full_participation_single_cluster(self):
        r = run_timing_sim(topo(1, 6, 6, 6), UNIT, 200, seed=3)
        assert np.all(r.trace.staleness == 0)

    def test_two_symmetric_edges_against_renewal_oracle(self):
        tc = TimingConfig(lam=1.0, c=0.0, mu_tilde=1.0)
        top = topo(2, 1, 1, 1)
        r = run_timing_sim(top, tc, 200_000, seed=11)
        sim_mean = empirical_mean_staleness(r.trace)
        # two independent renewal processes with Gamma(2, 1) cycles
        rng = np.random.default_rng(99)
        times = [np.cumsum(rng.gamma(2.0, 1.0, 100_000)) for _ in range(2)]
        events = sorted([(t, s, [s]) for s in range(2) for t in times[s]])
        oracle = replay_staleness(2, events)
        oracle_mean = oracle[len(oracle) // 10 :].mean()
        assert oracle_mean == pytest.approx(1.0, rel=0.02)
        assert sim_mean == pytest.approx(1.0, rel=0.02)
        assert sim_mean == pytest.approx(oracle_mean, rel=0.03)
        # staleness distributions agree too, not only the means
        for s in range(4):
            assert np.mean(r.trace.staleness == s) == pytest.approx(np.mean(oracle == s), abs=0.01)

    def test_staleness_matches_edge_sequence_exactly(self):
        # with one client per edge, S is the number of other-edge updates since the client's last one
        top = topo(3, 1, 1, 1)
        r = run_timing_sim(top, UNIT, 3000, seed=5)
        last = {}
        expected = []
        for version, edge in enumerate(r.cycle_edge.tolist()):
            expected.append(version - last.get(edge, 0))
            last[edge] = version + 1
        assert r.trace.staleness.tolist() == expected
        assert r.trace.client_id.tolist() == r.cycle_edge.tolist()


@pytest.fixture(scope="module")
def run():
    return run_timing_sim(topo(4, 5, 3, 2), UNIT, 20_000, seed=7)


class TestInvariants:
    def test_determinism(self, run):
        again = run_timing_sim(topo(4, 5, 3, 2), UNIT, 20_000, seed=7)
        assert again.trace == run.trace
        assert np.array_equal(again.cycle_duration, run.cycle_duration)
        other = run_timing_sim(topo(4, 5, 3, 2), UNIT, 20_000, seed=8)
        assert not other.trace == run.trace

    def test_cloud_version_and_counts(self, run):
        assert run.cloud_version == 20_000
        assert run.updates_per_edge.sum() == 20_000
        assert np.array_equal(run.updates_per_edge, run.cycles_per_edge)
        assert len(run.trace) == 20_000 * 2
        assert len(run.cloud_gaps) == 20_000

    def test_nonnegative_staleness(self, run):
        assert run.trace.staleness.min() >= 0

    def test_event_index_counts_participations(self, run):
        tr = run.trace
        for i in range(20):
            rows = tr.for_client(i)
            assert [j for j, _, _ in rows] == list(range(1, len(rows) + 1))
            times = [t for _, _, t in rows]
            assert times == sorted(times)

    def test_responders_belong_to_the_aggregating_edge(self, run):
        # k consecutive samples per cloud update, all from one cluster
        cid = run.trace.client_id.reshape(-1, 2)
        assert np.array_equal(cid[:, 0] // 5, run.cycle_edge)
        assert np.array_equal(cid[:, 1] // 5, run.cycle_edge)
        assert np.all(cid[:, 0] < cid[:, 1])

    def test_gaps_are_nonnegative_and_sum_to_end_time(self, run):
        assert run.cloud_gaps.min() >= 0
        assert run.cloud_gaps.sum() == pytest.approx(run.end_time)

    def test_cycle_lower_bound(self, run):
        assert run.cycle_duration.min() >= UNIT.c

    def test_rejects_zero_updates(self):
        with pytest.raises(ValueError):
            run_timing_sim(topo(1, 1, 1, 1), UNIT, 0, seed=0)


def test_against_independent_order_statistic_simulation():
    top = topo(4, 5, 3, 2)
    ev, durations = brute_force_cycles(top, UNIT, 10_000, np.random.default_rng(1))
    oracle = replay_staleness(top.n, ev)
    sim = run_timing_sim(top, UNIT, 40_000, seed=1)
    assert durations.mean() == pytest.approx(sim.cycle_duration.mean(), rel=0.02)
    assert oracle[len(oracle) // 10 :].mean() == pytest.approx(empirical_mean_staleness(sim.trace), rel=0.05)


@pytest.mark.parametrize("top", [topo(4, 5, 3, 2), topo(2, 12, 6, 3), topo(3, 8, 8, 1)])
def test_cycle_time_matches_analytics(top):
    updates = 100_000
    r = run_timing_sim(top, UNIT, updates, seed=2)
    want = A.expected_cycle_time(UNIT, top)
    for s in range(top.e):
        assert r.edge_cycle_times(s).mean() == pytest.approx(want, rel=0.02)


class TestCloudRate:
    def test_single_edge(self):
        top = topo(1, 5, 3, 2)
        r = run_timing_sim(top, UNIT, 50_000, seed=4)
        assert empirical_cloud_rate(r.cloud_gaps) == pytest.approx(1 / A.expected_cycle_time(UNIT, top), rel=0.02)

    def test_four_edges(self):
        top = topo(4, 5, 3, 2)
        r = run_timing_sim(top, UNIT, 100_000, seed=4)
        assert 4 / 2.6166666666666667 == pytest.approx(1.5286624203821657)
        assert empirical_cloud_rate(r.cloud_gaps) == pytest.approx(1.5286624203821657, rel=0.02)

    def test_doubling_edges_doubles_rate(self):
        a = run_timing_sim(topo(3, 5, 3, 2), UNIT, 60_000, seed=6)
        b = run_timing_sim(topo(6, 5, 3, 2), UNIT, 120_000, seed=6)
        assert empirical_cloud_rate(b.cloud_gaps) / empirical_cloud_rate(a.cloud_gaps) == pytest.approx(2.0, rel=0.02)

    def test_rate_helper(self):
        assert empirical_cloud_rate([0.5, 1.5]) == 1.0
        with pytest.raises(ValueError):
            empirical_cloud_rate([])


@pytest.mark.parametrize(
    "top",
    [
        topo(2, 1, 1, 1),
        topo(4, 5, 3, 2),
        topo(10, 4, 2, 1),
        topo(10, 20, 10, 5),  # n=200: e/(alpha beta) - 1 = 39 with exact k
        TopologyConfig.from_fractions(100, 10),  # k rounds 2.5 -> 3: n/k - 1 = 32.33
    ],
    ids=lambda t: f"e{t.e}_l{t.l}_m{t.m}_k{t.k}",
)
def test_mean_staleness_matches_n_over_k(top):
    samples = 200_000
    updates = int(samples / top.k / 0.9) + 1
    r = run_timing_sim(top, UNIT, updates, seed=13)
    assert empirical_mean_staleness(r.trace, 0.1) == pytest.approx(A.expected_staleness(top), rel=0.05)


@pytest.mark.slow
def test_reference_anchor_79():
    top = TopologyConfig.from_fractions(400, 20)
    assert A.expected_staleness(top) == 79
    r = run_timing_sim(top, UNIT, 50_000, seed=21)
    assert empirical_mean_staleness(r.trace) == pytest.approx(79, rel=0.05)


class TestBoundSatisfaction:
    def test_markov_never_violated(self):
        top = topo(4, 5, 3, 2)
        r = run_timing_sim(top, UNIT, 60_000, seed=8)
        mean = A.expected_staleness(top)
        for mult in (1, 2, 5, 10):
            M = max(1, int(round(mult * mean)))
            assert empirical_bound_satisfaction(r.trace, M) >= A.staleness_bound_probability(top, M) - 0.005

    def test_trivial_cases(self):
        tr = StalenessTrace([0, 1, 0], [1, 1, 2], [0.5, 0.7, 1.0], [3, 0, 7])
        assert empirical_bound_satisfaction(tr, 7) == 1.0
        assert empirical_bound_satisfaction(tr, 3) == pytest.approx(2 / 3)
        zeros = StalenessTrace([0, 0], [1, 2], [1.0, 2.0], [0, 0])
        assert empirical_bound_satisfaction(zeros, 1) == 1.0
        with pytest.raises(ValueError):
            empirical_bound_satisfaction(StalenessTrace([], [], [], []), 1)


class TestMeanStalenessHelper:
    def test_zero_trace(self):
        tr = StalenessTrace([0, 0, 0], [1, 2, 3], [1.0, 2.0, 3.0], [0, 0, 0])
        assert empirical_mean_staleness(tr) == 0.0

    def test_burn_in_drops_early_samples(self):
        tr = StalenessTrace([0, 0, 0, 0], [1, 2, 3, 4], [1.0, 2.0, 3.0, 10.0], [100, 100, 2, 4])
        assert empirical_mean_staleness(tr, 0.0) == pytest.approx(51.5)
        assert empirical_mean_staleness(tr, 0.25) == pytest.approx(3.0)

    def test_errors(self):
        tr = StalenessTrace([0], [1], [0.0], [1])
        with pytest.raises(ValueError):
            empirical_mean_staleness(tr, 0.5)  # nothing strictly after the cutoff
        with pytest.raises(ValueError):
            empirical_mean_staleness(tr, 1.0)
        with pytest.raises(ValueError):
            empirical_mean_staleness(StalenessTrace([], [], [], []))
