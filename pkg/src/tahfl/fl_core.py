"""Linear-regression learning primitives.

Synthetic Gaussian-mixture data with noiseless targets, mean-squared-error
loss and gradient, proximal local SGD, edge averaging, staleness-weighted
cloud mixing and the smoothness constant of the loss.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import LearningConfig

DATA_STREAM = 1


class DivergenceError(ArithmeticError):
    """Training produced a non-finite model or loss."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    shards: list[np.ndarray]
    w_star: np.ndarray
    seed: int | None = None

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return len(self.shards)

    def all_rows(self) -> np.ndarray:
        return np.arange(self.size)


def shard_indices(size: int, n: int) -> list[np.ndarray]:
    """Split ``range(size)`` into ``n`` contiguous blocks of ``size // n``.

    Leftover rows are dealt round-robin, one each to shards 0, 1, ...
    """
    base = size // n
    shards = [np.arange(i * base, (i + 1) * base) for i in range(n)]
    for r, row in enumerate(range(n * base, size)):
        shards[r % n] = np.append(shards[r % n], row)
    return shards


def generate_dataset(d: int, size: int, n: int, seed: int) -> Dataset:
    """Draw ``size`` rows from 0.5 N(+1.5/d w*, I) + 0.5 N(-1.5/d w*, I), y = X w*."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not size >= n >= 1:
        raise ValueError(f"need size >= n >= 1, got size={size}, n={n}")
    rng = np.random.default_rng([seed, DATA_STREAM])
    w_star = rng.uniform(0.0, 1.0, size=d)
    signs = np.where(rng.random(size) < 0.5, 1.0, -1.0)
    X = rng.standard_normal((size, d)) + np.outer(signs, (1.5 / d) * w_star)
    y = X @ w_star
    return Dataset(X=X, y=y, shards=shard_indices(size, n), w_star=w_star, seed=seed)


def _rows(ds: Dataset, rows):
    if rows is None:
        return ds.X, ds.y
    rows = np.asarray(rows)
    if rows.size == 0:
        raise ValueError("empty row set")
    return ds.X[rows], ds.y[rows]


def loss(theta: np.ndarray, rows, ds: Dataset) -> float:
    """Mean squared error over ``rows`` (``None`` = every row)."""
    X, y = _rows(ds, rows)
    r = X @ theta - y
    return float(r @ r) / len(y)


def gradient(theta: np.ndarray, rows, ds: Dataset) -> np.ndarray:
    X, y = _rows(ds, rows)
    return (2.0 / len(y)) * (X.T @ (X @ theta - y))


def loss_and_gradient(theta: np.ndarray, rows, ds: Dataset) -> tuple[float, np.ndarray]:
    X, y = _rows(ds, rows)
    r = X @ theta - y
    return float(r @ r) / len(y), (2.0 / len(y)) * (X.T @ r)


def local_train(theta_init, anchor, shard, lc: LearningConfig, seed, ds: Dataset) -> np.ndarray:
    """Run ``lc.t_tilde`` SGD steps on the proximal loss L(theta; shard) + rho/2 |theta - anchor|^2.

    With ``lc.batch=None`` every step uses the whole shard and ``seed`` is
    unused. Otherwise each step samples ``lc.batch`` rows without replacement.

    Raises:
        DivergenceError: if the iterate stops being finite.
    """
    shard = np.asarray(shard)
    if shard.size == 0:
        raise ValueError("empty shard")
    anchor = np.asarray(anchor, dtype=np.float64)
    theta = np.array(theta_init, dtype=np.float64)
    Xs, ys = ds.X[shard], ds.y[shard]
    full = lc.batch is None or lc.batch >= shard.size
    rng = None if full else np.random.default_rng(seed)
    for _ in range(lc.t_tilde):
        if full:
            Xb, yb = Xs, ys
        else:
            pick = rng.choice(shard.size, size=lc.batch, replace=False)
            Xb, yb = Xs[pick], ys[pick]
        g = (2.0 / len(yb)) * (Xb.T @ (Xb @ theta - yb)) + lc.rho * (theta - anchor)
        theta = theta - lc.eta * g
    if not np.all(np.isfinite(theta)):
        raise DivergenceError(f"local model diverged (eta={lc.eta}); lower the learning rate")
    return theta


def edge_aggregate(models) -> np.ndarray:
    """Data-size weighted average of ``[(theta, shard_size), ...]``."""
    models = list(models)
    if not models:
        raise ValueError("nothing to aggregate")
    total = float(sum(size for _, size in models))
    if total <= 0:
        raise ValueError("shard sizes must be positive")
    out = np.zeros_like(np.asarray(models[0][0], dtype=np.float64))
    for theta, size in models:
        out += (size / total) * np.asarray(theta, dtype=np.float64)
    return out


def staleness_weight(version_gap: int, exponent: float) -> float:
    """sigma = max(1, gap) ** -exponent."""
    if version_gap < 0:
        raise ValueError(f"version gap must be >= 0, got {version_gap}")
    return float(max(1, version_gap)) ** (-exponent)


def cloud_aggregate(global_model, incoming, version_gap: int, lc: LearningConfig) -> np.ndarray:
    sigma = staleness_weight(version_gap, lc.sigma_exponent)
    return (1.0 - sigma) * np.asarray(global_model) + sigma * np.asarray(incoming)


def spectral_norm_gram(X: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest eigenvalue of X^T X by power iteration.

    Raises:
        ArithmeticError: if the estimate has not settled within ``max_iter`` steps.
    """
    d = X.shape[1]
    v = np.random.default_rng(seed).standard_normal(d)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = X.T @ (X @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= tol * new:
            return new
        est = new
    raise ArithmeticError(f"power iteration did not converge in {max_iter} steps (degenerate data?)")


def smoothness_constant(ds: Dataset) -> float:
    """L = (2/|D|) ||X^T X||_2, the Lipschitz constant of the full-data gradient."""
    if ds.size == 0:
        raise ValueError("empty dataset")
    return 2.0 / ds.size * spectral_norm_gram(ds.X)


def save_dataset(ds: Dataset, csv_path: str | Path, meta_path: str | Path | None = None) -> None:
    """Write ``d`` feature columns plus a target column, and a JSON sidecar."""
    from .export import atomic_open

    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".meta.json")
    with atomic_open(csv_path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(ds.d)] + ["y"])
        for xrow, yv in zip(ds.X.tolist(), ds.y.tolist()):
            w.writerow([repr(v) for v in xrow] + [repr(yv)])
    meta = {
        "d": ds.d,
        "size": ds.size,
        "n": ds.n,
        "seed": ds.seed,
        "w_star": ds.w_star.tolist(),
        "shard_sizes": [len(s) for s in ds.shards],
    }
    with atomic_open(meta_path) as fh:
        json.dump(meta, fh, indent=1)


def load_dataset(csv_path: str | Path, meta_path: str | Path | None = None) -> Dataset:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text())
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    X, y = data[:, :-1], data[:, -1]
    if X.shape != (meta["size"], meta["d"]):
        raise ValueError(f"{csv_path}: shape {X.shape} disagrees with metadata ({meta['size']}, {meta['d']})")
    return Dataset(
        X=X,
        y=y,
        shards=shard_indices(meta["size"], meta["n"]),
        w_star=np.asarray(meta["w_star"], dtype=np.float64),
        seed=meta["seed"],
    )
