"""Closed-form timing and staleness quantities for timely AHFL.

Everything here is a pure function of the configuration; nothing is
simulated. The simulation in :mod:`tahfl.timing_sim` is checked against
these values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import TimingConfig, TopologyConfig


def harmonic(j: int) -> float:
    """H_j = 1 + 1/2 + ... + 1/j, with H_0 = 0."""
    if j < 0:
        raise ValueError(f"harmonic number undefined for j={j}")
    total = 0.0
    for i in range(1, j + 1):
        total += 1.0 / i
    return total


def expected_availability_wait(tc: TimingConfig, l: int, m: int) -> float:  # noqa: E741
    """Mean time until ``m`` of ``l`` exp(lambda) clocks have fired."""
    if not 1 <= m <= l:
        raise ValueError(f"need 1 <= m <= l, got m={m}, l={l}")
    return (harmonic(l) - harmonic(l - m)) / tc.lam


def expected_uplink_wait(tc: TimingConfig, m: int, k: int) -> float:
    """Mean time until the first ``k`` of ``m`` exp(mu_tilde) uplinks arrive."""
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= m, got k={k}, m={m}")
    return (harmonic(m) - harmonic(m - k)) / tc.mu_tilde


def expected_cycle_time(tc: TimingConfig, top: TopologyConfig) -> float:
    return expected_availability_wait(tc, top.l, top.m) + tc.c + expected_uplink_wait(tc, top.m, top.k)


def expected_client_update_time(tc: TimingConfig, top: TopologyConfig) -> float:
    """Mean time between two successful aggregations of one client.

    A given client is among the ``k`` aggregated ones with probability k/l.
    """
    return top.l / top.k * expected_cycle_time(tc, top)


def expected_cloud_rate(tc: TimingConfig, top: TopologyConfig) -> float:
    """Cloud version increments per unit time: e edges, each a renewal process."""
    return top.e / expected_cycle_time(tc, top)


def expected_staleness(top: TopologyConfig) -> float:
    """Steady-state mean staleness n/k - 1, using the integer ``k`` actually configured."""
    return top.n / top.k - 1.0


def ideal_staleness(top: TopologyConfig) -> float:
    """e/(alpha*beta) - 1, the value obtained when k = alpha*beta*l holds exactly."""
    return top.e / (top.alpha * top.beta) - 1.0


def _mean(staleness: TopologyConfig | float) -> float:
    if isinstance(staleness, TopologyConfig):
        return expected_staleness(staleness)
    return float(staleness)


def staleness_bound_probability(staleness: TopologyConfig | float, M: int) -> float:
    """Markov lower bound on P(S <= M).

    ``staleness`` is either a topology or an already computed mean staleness.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    return max(0.0, 1.0 - _mean(staleness) / M)


def min_bound_for_confidence(staleness: TopologyConfig | float, epsilon: float) -> int:
    """Smallest integer M >= 1 with ``staleness_bound_probability(., M) >= 1 - epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    mean = _mean(staleness)
    M = max(1, math.ceil(mean / epsilon))
    # ceil of a float quotient can overshoot by one (e.g. 19/0.05)
    if M > 1 and staleness_bound_probability(mean, M - 1) >= 1.0 - epsilon:
        M -= 1
    return M


@dataclass(frozen=True)
class StalenessBound:
    expected_staleness: float
    bound_M: int
    confidence: float

    @classmethod
    def at(cls, staleness: TopologyConfig | float, M: int) -> "StalenessBound":
        mean = _mean(staleness)
        return cls(mean, M, staleness_bound_probability(mean, M))


def summary(tc: TimingConfig, top: TopologyConfig, epsilons=(0.1, 0.05, 0.01)) -> dict[str, float]:
    """All analytic quantities as an ordered name -> value mapping."""
    out = {
        "E[Z_m:l] availability wait": expected_availability_wait(tc, top.l, top.m),
        "E[X_k:m] uplink wait": expected_uplink_wait(tc, top.m, top.k),
        "E[Y_t] cycle time": expected_cycle_time(tc, top),
        "E[Y_i] client update time": expected_client_update_time(tc, top),
        "cloud update rate": expected_cloud_rate(tc, top),
        "expected staleness n/k-1": expected_staleness(top),
        "ideal staleness e/(ab)-1": ideal_staleness(top),
    }
    for eps in epsilons:
        out[f"M for eps={eps:g}"] = min_bound_for_confidence(top, eps)
    return out
