"""Discrete-event simulation of the cloud/client version counters.

No learning happens here. Each edge runs back-to-back training cycles:

1. at cycle start every client of the cluster draws an exp(lambda)
   availability time;
2. once ``m`` clients are available they are dispatched; each trains for
   ``c`` and then draws an exp(mu_tilde) uplink delay;
3. the first ``k`` uplinks trigger an edge aggregation, which is forwarded
   to the cloud with zero delay. The cloud version increments and the ``k``
   participating clients catch up to it. Remaining in-flight events of the
   finished cycle are ignored when popped.

:class:`TimingSimulation` exposes hooks so the learning engine can ride on
exactly the same event sequence.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .config import TimingConfig, TopologyConfig

TIMING_STREAM = 0


def timing_rng(seed: int) -> np.random.Generator:
    """The RNG stream reserved for event timing."""
    return np.random.default_rng([seed, TIMING_STREAM])


class EventKind(IntEnum):
    CLIENT_AVAILABLE = 0
    UPLINK_ARRIVAL = 1


class Event(NamedTuple):
    # field order is the heap order: time, then the deterministic tiebreak
    time: float
    kind: EventKind
    edge_id: int
    client_id: int
    cycle_id: int


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []

    def push(self, event: Event) -> None:
        if event.time < 0:
            raise ValueError(f"negative event time {event.time}")
        heapq.heappush(self._heap, event)

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


class Phase(IntEnum):
    AWAITING_AVAILABILITY = 0
    AWAITING_UPLINKS = 1


@dataclass
class EdgeCycleState:
    cycle_id: int = -1
    phase: Phase = Phase.AWAITING_AVAILABILITY
    available: list[int] = field(default_factory=list)
    responded: list[int] = field(default_factory=list)
    cycle_start_time: float = 0.0
    tag: int = 0  # cloud version when the cycle started


class VersionLedger:
    """Cloud version counter and per-client version counters."""

    def __init__(self, n: int, e: int):
        self.cloud_version = 0
        self.client_version = np.zeros(n, dtype=np.int64)
        self.edge_cycle_tag = np.zeros(e, dtype=np.int64)

    def staleness(self, client_id: int) -> int:
        return self.cloud_version - int(self.client_version[client_id])

    def cloud_update(self, clients) -> int:
        self.cloud_version += 1
        for i in clients:
            self.client_version[i] = self.cloud_version
        return self.cloud_version


class StalenessTrace:
    """Staleness samples, one per (client, successful aggregation).

    Stored column-wise in logging order. ``event_index`` is the 1-based
    index j of the client's successful aggregation.
    """

    def __init__(self, client_id, event_index, time, staleness):
        self.client_id = np.asarray(client_id, dtype=np.int64)
        self.event_index = np.asarray(event_index, dtype=np.int64)
        self.time = np.asarray(time, dtype=np.float64)
        self.staleness = np.asarray(staleness, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.staleness)

    def for_client(self, client_id: int) -> list[tuple[int, int, float]]:
        mask = self.client_id == client_id
        return list(
            zip(self.event_index[mask].tolist(), self.staleness[mask].tolist(), self.time[mask].tolist())
        )

    def rows(self):
        for i, j, t, s in zip(self.client_id.tolist(), self.event_index.tolist(), self.time.tolist(), self.staleness.tolist()):
            yield i, j, t, s

    def __eq__(self, other) -> bool:
        if not isinstance(other, StalenessTrace):
            return NotImplemented
        return (
            np.array_equal(self.client_id, other.client_id)
            and np.array_equal(self.event_index, other.event_index)
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.staleness, other.staleness)
        )


@dataclass
class TimingRun:
    trace: StalenessTrace
    cloud_gaps: np.ndarray
    cycle_edge: np.ndarray
    cycle_index: np.ndarray
    cycle_duration: np.ndarray
    cloud_version: int
    updates_per_edge: np.ndarray
    cycles_per_edge: np.ndarray
    end_time: float

    def edge_cycle_times(self, edge_id: int) -> np.ndarray:
        return self.cycle_duration[self.cycle_edge == edge_id]


class TimingSimulation:
    """Event loop for one run. Single-threaded by design.

    Subclasses may override :meth:`on_cycle_start` and :meth:`on_cloud_update`;
    neither hook may touch ``self.rng``.
    """

    def __init__(self, top: TopologyConfig, tc: TimingConfig, seed: int):
        self.top = top
        self.tc = tc
        self.rng = timing_rng(seed)
        self.queue = EventQueue()
        self.ledger = VersionLedger(top.n, top.e)
        self.edges = [EdgeCycleState() for _ in range(top.e)]
        self.now = 0.0

        self._participations = np.zeros(top.n, dtype=np.int64)
        self._log_client: list[int] = []
        self._log_index: list[int] = []
        self._log_time: list[float] = []
        self._log_stale: list[int] = []
        self._cloud_times: list[float] = []
        self._cycle_edge: list[int] = []
        self._cycle_index: list[int] = []
        self._cycle_duration: list[float] = []
        self._updates_per_edge = np.zeros(top.e, dtype=np.int64)

    def on_cycle_start(self, edge_id: int, cycle_id: int, cloud_version: int, time: float) -> None:
        pass

    def on_cloud_update(self, edge_id: int, cycle_id: int, responders: list[int], tag: int, version: int, time: float) -> None:
        """Called after the ledger moved to ``version`` (``version - 1`` before)."""

    def _start_cycle(self, edge_id: int, time: float) -> None:
        st = self.edges[edge_id]
        st.cycle_id += 1
        st.phase = Phase.AWAITING_AVAILABILITY
        st.available = []
        st.responded = []
        st.cycle_start_time = time
        st.tag = self.ledger.cloud_version
        self.ledger.edge_cycle_tag[edge_id] = st.tag
        waits = self.rng.exponential(1.0 / self.tc.lam, size=self.top.l)
        base = edge_id * self.top.l
        for j in range(self.top.l):
            self.queue.push(Event(time + float(waits[j]), EventKind.CLIENT_AVAILABLE, edge_id, base + j, st.cycle_id))
        self.on_cycle_start(edge_id, st.cycle_id, st.tag, time)

    def _dispatch(self, edge_id: int, time: float) -> None:
        st = self.edges[edge_id]
        st.phase = Phase.AWAITING_UPLINKS
        delays = self.rng.exponential(1.0 / self.tc.mu_tilde, size=self.top.m)
        for client, delay in zip(st.available, delays.tolist()):
            self.queue.push(Event(time + self.tc.c + delay, EventKind.UPLINK_ARRIVAL, edge_id, client, st.cycle_id))

    def _aggregate(self, edge_id: int, time: float) -> None:
        st = self.edges[edge_id]
        responders = sorted(st.responded)
        ledger = self.ledger
        for i in responders:
            self._participations[i] += 1
            self._log_client.append(i)
            self._log_index.append(int(self._participations[i]))
            self._log_time.append(time)
            self._log_stale.append(ledger.staleness(i))
        version = ledger.cloud_update(responders)
        self._cloud_times.append(time)
        self._updates_per_edge[edge_id] += 1
        self._cycle_edge.append(edge_id)
        self._cycle_index.append(st.cycle_id)
        self._cycle_duration.append(time - st.cycle_start_time)
        self.on_cloud_update(edge_id, st.cycle_id, responders, st.tag, version, time)

    def run(self, num_cloud_updates: int) -> TimingRun:
        if num_cloud_updates < 1:
            raise ValueError(f"num_cloud_updates must be >= 1, got {num_cloud_updates}")
        top = self.top
        for s in range(top.e):
            self._start_cycle(s, 0.0)

        while self.ledger.cloud_version < num_cloud_updates:
            ev = self.queue.pop()
            st = self.edges[ev.edge_id]
            if ev.cycle_id != st.cycle_id:
                continue  # straggler from a finished cycle
            self.now = ev.time
            if ev.kind == EventKind.CLIENT_AVAILABLE:
                if st.phase != Phase.AWAITING_AVAILABILITY:
                    continue
                st.available.append(ev.client_id)
                if len(st.available) == top.m:
                    self._dispatch(ev.edge_id, ev.time)
            else:
                st.responded.append(ev.client_id)
                if len(st.responded) == top.k:
                    self._aggregate(ev.edge_id, ev.time)
                    if self.ledger.cloud_version < num_cloud_updates:
                        self._start_cycle(ev.edge_id, ev.time)

        return self._result()

    def _result(self) -> TimingRun:
        times = np.asarray(self._cloud_times)
        gaps = np.diff(times, prepend=0.0)
        cycle_edge = np.asarray(self._cycle_edge, dtype=np.int64)
        return TimingRun(
            trace=StalenessTrace(self._log_client, self._log_index, self._log_time, self._log_stale),
            cloud_gaps=gaps,
            cycle_edge=cycle_edge,
            cycle_index=np.asarray(self._cycle_index, dtype=np.int64),
            cycle_duration=np.asarray(self._cycle_duration),
            cloud_version=self.ledger.cloud_version,
            updates_per_edge=self._updates_per_edge.copy(),
            cycles_per_edge=np.bincount(cycle_edge, minlength=self.top.e),
            end_time=self.now,
        )


def run_timing_sim(top: TopologyConfig, tc: TimingConfig, num_cloud_updates: int, seed: int) -> TimingRun:
    """Simulate until the cloud has aggregated ``num_cloud_updates`` times."""
    return TimingSimulation(top, tc, seed).run(num_cloud_updates)


def empirical_mean_staleness(trace: StalenessTrace, burn_in_fraction: float = 0.1) -> float:
    """Mean staleness over samples logged after ``burn_in_fraction`` of the simulated time."""
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValueError(f"burn_in_fraction must lie in [0, 1), got {burn_in_fraction}")
    if len(trace) == 0:
        raise ValueError("empty staleness trace")
    cutoff = burn_in_fraction * float(trace.time.max())
    kept = trace.staleness[trace.time > cutoff] if burn_in_fraction > 0 else trace.staleness
    if kept.size == 0:
        raise ValueError("no staleness samples left after burn-in; run longer")
    return float(kept.mean())


def empirical_cloud_rate(gaps) -> float:
    gaps = np.asarray(gaps, dtype=np.float64)
    if gaps.size == 0:
        raise ValueError("no cloud inter-update gaps")
    return 1.0 / float(gaps.mean())


def empirical_bound_satisfaction(trace: StalenessTrace, M: int) -> float:
    """Fraction of staleness samples with S <= M."""
    if len(trace) == 0:
        raise ValueError("empty staleness trace")
    return float(np.mean(trace.staleness <= M))
