"""Full timely-AHFL training run on top of the timing simulation.

The learning side never draws from the timing RNG, so the staleness trace
of a training run is identical to that of :func:`run_timing_sim` with the
same topology, timing, seed and number of cloud updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fl_core
from .config import RunConfig
from .fl_core import Dataset, DivergenceError
from .timing_sim import StalenessTrace, TimingRun, TimingSimulation

SGD_STREAM = 2


@dataclass
class RunResult:
    versions: np.ndarray
    times: np.ndarray
    losses: np.ndarray
    grad_norm_sq: np.ndarray
    staleness_trace: StalenessTrace
    timing: TimingRun
    final_model: np.ndarray

    @property
    def loss_trace(self) -> list[tuple[int, float, float]]:
        return list(zip(self.versions.tolist(), self.times.tolist(), self.losses.tolist()))

    @property
    def min_grad_norm_sq(self) -> float:
        return float(self.grad_norm_sq.min())

    @property
    def initial_loss(self) -> float:
        return float(self.losses[0])

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])


class _AHFLSimulation(TimingSimulation):
    def __init__(self, cfg: RunConfig, ds: Dataset):
        super().__init__(cfg.topology, cfg.timing, cfg.seed)
        self.cfg = cfg
        self.ds = ds
        self.eval_rows = None if cfg.eval_rows is None else np.asarray(cfg.eval_rows)
        self.theta = np.zeros(ds.d)
        self.anchors: list[np.ndarray] = [self.theta] * cfg.topology.e

        loss0 = fl_core.loss(self.theta, self.eval_rows, ds)
        self._versions = [0]
        self._times = [0.0]
        self._losses = [loss0]
        self._grads = [self._grad_norm_sq()]

    def _grad_norm_sq(self) -> float:
        g = fl_core.gradient(self.theta, None, self.ds)
        return float(g @ g)

    def on_cycle_start(self, edge_id, cycle_id, cloud_version, time):
        # the global model is replaced, never mutated, so holding a reference is a snapshot
        self.anchors[edge_id] = self.theta

    def on_cloud_update(self, edge_id, cycle_id, responders, tag, version, time):
        cfg, ds = self.cfg, self.ds
        anchor = self.anchors[edge_id]
        where = f"edge {edge_id}, cycle {cycle_id}, cloud version {version}"
        local = []
        for i in responders:
            shard = ds.shards[i]
            seed = [cfg.seed, SGD_STREAM, edge_id, cycle_id, i]
            try:
                theta_i = fl_core.local_train(anchor, anchor, shard, cfg.learning, seed, ds)
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} at {where}, client {i}") from None
            local.append((theta_i, len(shard)))
        edge_model = fl_core.edge_aggregate(local)
        gap = (version - 1) - tag
        self.theta = fl_core.cloud_aggregate(self.theta, edge_model, gap, cfg.learning)

        value = fl_core.loss(self.theta, self.eval_rows, ds)
        if not np.isfinite(value):
            raise DivergenceError(f"global loss became non-finite at {where}")
        self._versions.append(version)
        self._times.append(time)
        self._losses.append(value)
        self._grads.append(self._grad_norm_sq())


def run(cfg: RunConfig, ds: Dataset | None = None) -> RunResult:
    """Execute ``cfg.T`` cloud aggregations of timely AHFL from theta_0 = 0.

    ``ds`` defaults to the synthetic dataset generated from ``cfg.seed``.

    Raises:
        DivergenceError: naming the edge/cycle where the model stopped being finite.
    """
    if ds is None:
        lc = cfg.learning
        ds = fl_core.generate_dataset(lc.d, lc.size, cfg.topology.n, cfg.seed)
    if ds.n != cfg.topology.n:
        raise ValueError(f"dataset has {ds.n} shards but topology has n={cfg.topology.n}")
    sim = _AHFLSimulation(cfg, ds)
    timing = sim.run(cfg.T)
    return RunResult(
        versions=np.asarray(sim._versions, dtype=np.int64),
        times=np.asarray(sim._times),
        losses=np.asarray(sim._losses),
        grad_norm_sq=np.asarray(sim._grads),
        staleness_trace=timing.trace,
        timing=timing,
        final_model=sim.theta,
    )


def min_gradient_norm(result: RunResult, stride: int = 1) -> float:
    """Smallest squared full-data gradient norm over every ``stride``-th logged model."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if len(result.grad_norm_sq) == 0:
        raise ValueError("empty loss trace")
    return float(result.grad_norm_sq[::stride].min())


def updates_to_reach(result: RunResult, fraction: float) -> int | None:
    """First cloud version whose loss is <= ``fraction`` of the initial loss."""
    hit = np.nonzero(result.losses <= fraction * result.losses[0])[0]
    return int(result.versions[hit[0]]) if hit.size else None
