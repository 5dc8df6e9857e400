"""Configuration types and the flat ``section.key = value`` config format.

A config file looks like::

    # reference defaults
    topology.n = 100
    topology.e = 5
    topology.alpha = 0.5
    topology.beta = 0.5
    timing.lambda = 1.0
    run.T = 10000

Blank lines and ``#`` comments are ignored. Every key is optional and falls
back to the default listed in :data:`DEFAULTS`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """A config value is well-formed but violates a constraint."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ConfigParseError(ValueError):
    """A config file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.field = field_name


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class TopologyConfig:
    """Symmetric client-edge-cloud topology.

    ``m`` clients out of each cluster of ``l`` are dispatched per cycle and
    the first ``k`` of them are aggregated.
    """

    n: int
    e: int
    l: int  # noqa: E741
    m: int
    k: int
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        for name in ("n", "e", "l", "m", "k"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"topology.{name}", f"must be an integer, got {v!r}")
        if self.e < 1:
            raise ConfigError("topology.e", "must be >= 1")
        if self.l < 1:
            raise ConfigError("topology.l", "must be >= 1")
        if self.n != self.e * self.l:
            raise ConfigError("topology.n", f"n={self.n} must equal e*l={self.e * self.l}")
        if not 1 <= self.m <= self.l:
            raise ConfigError("topology.m", f"need 1 <= m <= l, got m={self.m}, l={self.l}")
        if not 1 <= self.k <= self.m:
            raise ConfigError("topology.k", f"need 1 <= k <= m, got k={self.k}, m={self.m}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"topology.{name}", f"must lie in (0, 1), got {v!r}")

    @classmethod
    def from_fractions(cls, n: int, e: int, alpha: float = 0.5, beta: float = 0.5) -> "TopologyConfig":
        """Build a topology with ``m = round(beta*l)`` and ``k = round(alpha*m)``.

        Rounding is half-up and both quorums are clamped to at least one.
        """
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError("topology.n", f"must be a positive integer, got {n!r}")
        if isinstance(e, bool) or not isinstance(e, int) or e < 1:
            raise ConfigError("topology.e", f"must be a positive integer, got {e!r}")
        if n % e:
            raise ConfigError("topology.e", f"n={n} is not divisible by e={e}")
        for name, v in (("alpha", alpha), ("beta", beta)):
            if not 0.0 < v < 1.0:
                raise ConfigError(f"topology.{name}", f"must lie in (0, 1), got {v!r}")
        l = n // e  # noqa: E741
        m = max(1, round_half_up(beta * l))
        k = max(1, round_half_up(alpha * m))
        return cls(n=n, e=e, l=l, m=m, k=k, alpha=alpha, beta=beta)

    def cluster(self, edge_id: int) -> range:
        """Client ids served by ``edge_id``."""
        return range(edge_id * self.l, (edge_id + 1) * self.l)


@dataclass(frozen=True)
class TimingConfig:
    lam: float = 1.0
    c: float = 1.0
    mu_tilde: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError("timing.lambda", f"must be > 0, got {self.lam!r}")
        if not (math.isfinite(self.mu_tilde) and self.mu_tilde > 0):
            raise ConfigError("timing.mu_tilde", f"must be > 0, got {self.mu_tilde!r}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ConfigError("timing.c", f"must be >= 0, got {self.c!r}")


@dataclass(frozen=True)
class LearningConfig:
    """Local training hyperparameters.

    ``batch=None`` means full-shard gradients.
    """

    rho: float = 0.01
    eta: float = 0.01
    t_tilde: int = 10
    sigma_exponent: float = 0.1
    batch: int | None = None
    d: int = 100
    size: int = 10000

    def __post_init__(self):
        if not self.rho >= 0:
            raise ConfigError("learning.rho", f"must be >= 0, got {self.rho!r}")
        if not self.eta > 0:
            raise ConfigError("learning.eta", f"must be > 0, got {self.eta!r}")
        if self.t_tilde < 0:
            raise ConfigError("learning.t_tilde", f"must be >= 0, got {self.t_tilde!r}")
        if not self.sigma_exponent > 0:
            raise ConfigError("learning.sigma_exponent", f"must be > 0, got {self.sigma_exponent!r}")
        if self.batch is not None and self.batch < 1:
            raise ConfigError("learning.batch", f"must be >= 1 or 'full', got {self.batch!r}")
        if self.d < 1:
            raise ConfigError("learning.d", f"must be >= 1, got {self.d!r}")
        if self.size < 1:
            raise ConfigError("learning.size", f"must be >= 1, got {self.size!r}")


@dataclass(frozen=True)
class RunConfig:
    topology: TopologyConfig
    timing: TimingConfig = field(default_factory=TimingConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    T: int = 10000
    seed: int = 0
    eval_rows: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("run.T", f"must be >= 1, got {self.T!r}")
        if self.learning.size < self.topology.n:
            raise ConfigError("learning.size", f"size={self.learning.size} is smaller than n={self.topology.n}")


# key -> (python type, default). Defaults are the values of the reference experiment.
DEFAULTS: dict[str, tuple[type, Any]] = {
    "topology.n": (int, 100),
    "topology.e": (int, 5),
    "topology.alpha": (float, 0.5),
    "topology.beta": (float, 0.5),
    "topology.m": (int, None),
    "topology.k": (int, None),
    "timing.lambda": (float, 1.0),
    "timing.c": (float, 1.0),
    "timing.mu_tilde": (float, 1.0),
    "learning.d": (int, 100),
    "learning.size": (int, 10000),
    "learning.rho": (float, 0.01),
    "learning.eta": (float, 0.01),
    "learning.t_tilde": (int, 10),
    "learning.sigma_exponent": (float, 0.1),
    "learning.batch": (int, None),
    "run.T": (int, 10000),
    "run.seed": (int, 0),
}


def _coerce(key: str, raw: str, line: int | None) -> Any:
    typ = DEFAULTS[key][0]
    raw = raw.strip()
    if raw.lower() in ("none", "full", "auto", ""):
        if DEFAULTS[key][1] is None:
            return None
        raise ConfigParseError(f"{key}: a value is required", line, key)
    try:
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigParseError(f"{key}: cannot parse {raw!r} as {typ.__name__}", line, key) from None


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse config text into a flat ``{dotted_key: value}`` dict (defaults filled)."""
    values = {key: default for key, (_, default) in DEFAULTS.items()}
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigParseError(f"unknown key {key!r}", lineno, key)
        if key in seen:
            raise ConfigParseError(f"duplicate key {key!r}", lineno, key)
        seen.add(key)
        values[key] = _coerce(key, raw, lineno)
    return values


def build_run_config(values: dict[str, Any]) -> RunConfig:
    n, e = values["topology.n"], values["topology.e"]
    alpha, beta = values["topology.alpha"], values["topology.beta"]
    top = TopologyConfig.from_fractions(n, e, alpha, beta)
    m, k = values["topology.m"], values["topology.k"]
    if m is not None or k is not None:
        m = top.m if m is None else m
        k = max(1, round_half_up(alpha * m)) if k is None else k
        top = TopologyConfig(n=n, e=e, l=top.l, m=m, k=k, alpha=alpha, beta=beta)
    timing = TimingConfig(lam=values["timing.lambda"], c=values["timing.c"], mu_tilde=values["timing.mu_tilde"])
    learning = LearningConfig(
        rho=values["learning.rho"],
        eta=values["learning.eta"],
        t_tilde=values["learning.t_tilde"],
        sigma_exponent=values["learning.sigma_exponent"],
        batch=values["learning.batch"],
        d=values["learning.d"],
        size=values["learning.size"],
    )
    return RunConfig(topology=top, timing=timing, learning=learning, T=values["run.T"], seed=values["run.seed"])


def loads(text: str) -> RunConfig:
    return build_run_config(parse_config_text(text))


def load(path: str | Path) -> RunConfig:
    return loads(Path(path).read_text())


def dumps(cfg: RunConfig) -> str:
    """Serialize ``cfg`` so that ``loads(dumps(cfg)) == cfg``.

    ``eval_rows`` is not part of the file format and is dropped.
    """
    top, tc, lc = cfg.topology, cfg.timing, cfg.learning
    rows = [
        ("topology.n", top.n),
        ("topology.e", top.e),
        ("topology.alpha", top.alpha),
        ("topology.beta", top.beta),
        ("topology.m", top.m),
        ("topology.k", top.k),
        ("timing.lambda", tc.lam),
        ("timing.c", tc.c),
        ("timing.mu_tilde", tc.mu_tilde),
        ("learning.d", lc.d),
        ("learning.size", lc.size),
        ("learning.rho", lc.rho),
        ("learning.eta", lc.eta),
        ("learning.t_tilde", lc.t_tilde),
        ("learning.sigma_exponent", lc.sigma_exponent),
        ("learning.batch", "full" if lc.batch is None else lc.batch),
        ("run.T", cfg.T),
        ("run.seed", cfg.seed),
    ]
    return "".join(f"{key} = {value!r}\n" if isinstance(value, float) else f"{key} = {value}\n" for key, value in rows)

