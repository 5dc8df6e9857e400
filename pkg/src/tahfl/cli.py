"""Command-line interface: ``tahfl {analyze,simulate-timing,train,figure,validate}``.

Exit codes (stable):

====  ==========================================
0     success
2     bad command-line usage (argparse)
3     config file could not be parsed
4     config parsed but failed validation
5     training diverged
6     simulated values outside the declared tolerances
7     figure inputs missing and ``--no-compute`` given
====  ==========================================

The output directory is ``--out``, else ``$TAHFL_OUT``, else ``./runs``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analytics, config, engine, export, svgplot, timing_sim
from .config import ConfigError, ConfigParseError, RunConfig, TopologyConfig
from .fl_core import DivergenceError

log = logging.getLogger("tahfl")

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_DIVERGENCE = 5
EXIT_TOLERANCE = 6
EXIT_MISSING = 7

OUT_ENV = "TAHFL_OUT"
QUICK_T = 2000
QUICK_REPETITIONS = 3

# relative tolerances for simulate-timing
CYCLE_TOL = 0.02
RATE_TOL = 0.02
STALENESS_TOL = 0.05


def output_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "runs")


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return config.loads("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror}") from None
    return config.loads(text)


# ---------------------------------------------------------------- analyze

def analyze_table(cfg: RunConfig) -> list[tuple[str, float]]:
    return list(analytics.summary(cfg.timing, cfg.topology).items())


def format_table(rows, header=("quantity", "value")) -> str:
    width = max(len(header[0]), *(len(name) for name, _ in rows))
    lines = [f"{header[0]:<{width}}  {header[1]}", f"{'-' * width}  {'-' * 12}"]
    for name, value in rows:
        shown = f"{value:d}" if isinstance(value, int) else f"{value:.6g}"
        lines.append(f"{name:<{width}}  {shown}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    top = cfg.topology
    head = f"n={top.n} e={top.e} l={top.l} m={top.m} k={top.k} alpha={top.alpha:g} beta={top.beta:g}\n"
    report = head + format_table(analyze_table(cfg))
    print(report, end="")
    if args.out or os.environ.get(OUT_ENV):
        export.write_text(output_dir(args.out) / "analysis.txt", report)
    return EXIT_OK


# -------------------------------------------------------- simulate-timing

def timing_comparison(cfg: RunConfig, trun: timing_sim.TimingRun, burn_in: float = 0.1):
    """Rows of (name, analytic, empirical, relative error, tolerance)."""
    top, tc = cfg.topology, cfg.timing
    rows = [
        ("mean cycle time", analytics.expected_cycle_time(tc, top), float(trun.cycle_duration.mean()), CYCLE_TOL),
        ("cloud update rate", analytics.expected_cloud_rate(tc, top), timing_sim.empirical_cloud_rate(trun.cloud_gaps), RATE_TOL),
        ("mean staleness", analytics.expected_staleness(top), timing_sim.empirical_mean_staleness(trun.trace, burn_in), STALENESS_TOL),
    ]
    out = []
    for name, want, got, tol in rows:
        if want == 0:
            err = abs(got)
        else:
            err = abs(got - want) / abs(want)
        out.append((name, want, got, err, tol))
    return out


def cmd_simulate_timing(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    updates = args.updates or cfg.T
    out = output_dir(args.out)
    t0 = time.perf_counter()
    trun = timing_sim.run_timing_sim(cfg.topology, cfg.timing, updates, cfg.seed)
    wall = time.perf_counter() - t0
    export.write_staleness_csv(out / "staleness.csv", trun.trace)
    export.write_cycles_csv(out / "cycles.csv", trun)

    rows = timing_comparison(cfg, trun, args.burn_in)
    ok = True
    print(f"{'quantity':<18}  {'analytic':>12}  {'empirical':>12}  {'rel.err':>8}  {'tol':>6}  verdict")
    record = {"cloud_updates": updates, "seed": cfg.seed, "samples": len(trun.trace), "wall_clock_s": wall}
    for name, want, got, err, tol in rows:
        passed = err <= tol
        ok &= passed
        print(f"{name:<18}  {want:>12.6g}  {got:>12.6g}  {err:>8.4f}  {tol:>6.3f}  {'PASS' if passed else 'FAIL'}")
        key = name.replace(" ", "_")
        record[f"{key}_analytic"] = want
        record[f"{key}_empirical"] = got
        record[f"{key}_pass"] = passed
    export.write_summary(out / "timing_summary.txt", record)
    return EXIT_OK if ok else EXIT_TOLERANCE


# ------------------------------------------------------------------ train

def run_and_write(cfg: RunConfig, out: Path) -> dict:
    t0 = time.perf_counter()
    result = engine.run(cfg)
    wall = time.perf_counter() - t0
    export.write_loss_csv(out / "loss.csv", result)
    export.write_staleness_csv(out / "staleness.csv", result.staleness_trace)
    export.write_cycles_csv(out / "cycles.csv", result.timing)
    record = {
        "n": cfg.topology.n,
        "e": cfg.topology.e,
        "m": cfg.topology.m,
        "k": cfg.topology.k,
        "T": cfg.T,
        "seed": cfg.seed,
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "mean_staleness": timing_sim.empirical_mean_staleness(result.staleness_trace, 0.1),
        "expected_staleness": analytics.expected_staleness(cfg.topology),
        "ideal_staleness": analytics.ideal_staleness(cfg.topology),
        "min_grad_norm_sq": engine.min_gradient_norm(result),
        "wall_clock_s": wall,
    }
    export.write_summary(out / "summary.txt", record)
    export.write_text(out / "config.txt", config.dumps(cfg))
    return record


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.quick:
        cfg = dataclasses.replace(cfg, T=QUICK_T)
    record = run_and_write(cfg, output_dir(args.out))
    print(export.format_summary(record), end="")
    return EXIT_OK


# ----------------------------------------------------------------- figure

@dataclass
class ExperimentSpec:
    base: RunConfig
    n: int
    edges: list[int]
    repetitions: int = 1
    master_seed: int = 0

    def seeds(self) -> list[int]:
        return [int(s) for s in np.random.SeedSequence(self.master_seed).generate_state(self.repetitions)]

    def variants(self) -> list[tuple[int, int, RunConfig]]:
        """(e, repetition, config) for every run; all variants share the seed list."""
        out = []
        for e in self.edges:
            top = TopologyConfig.from_fractions(self.n, e, self.base.topology.alpha, self.base.topology.beta)
            for r, seed in enumerate(self.seeds()):
                out.append((e, r, dataclasses.replace(self.base, topology=top, seed=seed)))
        return out


EXPERIMENT_KEYS = ("experiment.n", "experiment.edges", "experiment.repetitions", "experiment.master_seed")


def parse_experiment(text: str) -> ExperimentSpec:
    exp: dict[str, str] = {}
    rest = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if body.startswith("experiment."):
            key, sep, raw = (p.strip() for p in body.partition("="))
            if not sep or key not in EXPERIMENT_KEYS:
                raise ConfigParseError(f"bad experiment line {body!r}", lineno, key)
            exp[key] = raw
            rest.append("")  # keep line numbers aligned for base-config errors
        else:
            rest.append(line)
    base = config.loads("\n".join(rest))
    try:
        n = int(exp.get("experiment.n", base.topology.n))
        edges = [int(v) for v in exp.get("experiment.edges", "").replace(",", " ").split()]
        reps = int(exp.get("experiment.repetitions", 1))
        master = int(exp.get("experiment.master_seed", base.seed))
    except ValueError as exc:
        raise ConfigParseError(f"experiment: {exc}") from None
    if reps < 1:
        raise ConfigError("experiment.repetitions", "must be >= 1")
    spec = ExperimentSpec(base=base, n=n, edges=edges, repetitions=reps, master_seed=master)
    spec.variants()  # validates every topology
    return spec


def run_dir(out: Path, n: int, e: int, rep: int) -> Path:
    return out / f"n{n}_e{e}_r{rep}"


def _run_variant(job):
    cfg, path = job
    return run_and_write(cfg, Path(path))


def _staleness_series(path: Path):
    cols = export.read_csv_columns(path)
    t = np.asarray(cols["sim_time"], dtype=float)
    s = np.asarray(cols["staleness"], dtype=float)
    running = np.cumsum(s) / np.arange(1, len(s) + 1)
    return t.tolist(), running.tolist()


def figure_charts(spec: ExperimentSpec, out: Path) -> list[svgplot.Chart]:
    loss = svgplot.Chart(
        title=f"Loss vs. epochs, n={spec.n}", xlabel="cloud updates (epochs)", ylabel="global loss", log_y=True
    )
    stale = svgplot.Chart(
        title=f"Staleness, n={spec.n}", xlabel="simulated time", ylabel="running mean staleness"
    )
    for i, e in enumerate(spec.edges):
        color = svgplot.PALETTE[i % len(svgplot.PALETTE)]
        curves = []
        versions = None
        for r in range(spec.repetitions):
            cols = export.read_csv_columns(run_dir(out, spec.n, e, r) / "loss.csv")
            versions = [int(v) for v in cols["cloud_version"]]
            curves.append(np.asarray(cols["loss"], dtype=float))
        # geometric mean across repetitions; floor keeps log() finite once converged
        geo = np.exp(np.mean(np.log(np.maximum(np.vstack(curves), 1e-300)), axis=0))
        loss.series.append(svgplot.Series(f"e={e}", versions, geo.tolist(), color))

        t, running = _staleness_series(run_dir(out, spec.n, e, 0) / "staleness.csv")
        stale.series.append(svgplot.Series(f"e={e}", t, running, color))
        top = TopologyConfig.from_fractions(spec.n, e, spec.base.topology.alpha, spec.base.topology.beta)
        ideal = analytics.ideal_staleness(top)
        stale.refs.append(svgplot.RefLine(ideal, f"e/(ab)-1={ideal:g}", color))
        actual = analytics.expected_staleness(top)
        if actual != ideal:
            stale.refs.append(svgplot.RefLine(actual, f"n/k-1={actual:g}", color, dash="2,3"))
    return [loss, stale]


def cmd_figure(args) -> int:
    try:
        text = Path(args.config).read_text() if args.config else ""
    except OSError as exc:
        raise ConfigParseError(f"cannot read {args.config}: {exc.strerror}") from None
    spec = parse_experiment(text)
    if args.quick:
        spec = dataclasses.replace(
            spec, base=dataclasses.replace(spec.base, T=QUICK_T), repetitions=QUICK_REPETITIONS
        )
    out = output_dir(args.out)
    if not spec.edges:
        log.warning("experiment has no variants; nothing to plot")
        return EXIT_OK

    jobs, missing = [], []
    for e, r, cfg in spec.variants():
        path = run_dir(out, spec.n, e, r)
        cfg_file = path / "config.txt"
        done = (path / "loss.csv").exists() and cfg_file.exists() and cfg_file.read_text() == config.dumps(cfg)
        if not done:
            missing.append(f"n={spec.n} e={e} rep={r}")
            jobs.append((cfg, str(path)))
    if missing and args.no_compute:
        print("missing runs:\n  " + "\n  ".join(missing), file=sys.stderr)
        return EXIT_MISSING
    if jobs:
        log.info("running %d variant(s) with %d worker(s)", len(jobs), args.workers)
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                list(pool.map(_run_variant, jobs))
        else:
            for job in jobs:
                _run_variant(job)

    names = [f"fig_loss_n{spec.n}.svg", f"fig_staleness_n{spec.n}.svg"]
    for name, chart in zip(names, figure_charts(spec, out)):
        export.write_text(out / name, svgplot.render(chart))
        print(out / name)
    return EXIT_OK


# --------------------------------------------------------------- validate

def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    top = cfg.topology
    print(f"ok: n={top.n} e={top.e} l={top.l} m={top.m} k={top.k} T={cfg.T} seed={cfg.seed}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tahfl", description="Timely asynchronous hierarchical FL simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="config file (defaults used when omitted)")
        sp.add_argument("--out", help=f"output directory (env {OUT_ENV}, default ./runs)")
        if seed:
            sp.add_argument("--seed", type=int, help="override run.seed")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("analyze", help="closed-form timing and staleness table")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate-timing", help="version-counting simulation vs. analytic values")
    common(sp)
    sp.add_argument("--updates", type=int, help="cloud updates to simulate (default run.T)")
    sp.add_argument("--burn-in", type=float, default=0.1, help="fraction of simulated time discarded")
    sp.set_defaults(func=cmd_simulate_timing)

    sp = sub.add_parser("train", help="full AHFL run on the synthetic regression task")
    common(sp)
    sp.add_argument("--quick", action="store_true", help=f"T={QUICK_T}")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("figure", help="loss and staleness panels for an experiment grid")
    common(sp, seed=False)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--quick", action="store_true", help=f"T={QUICK_T}, {QUICK_REPETITIONS} repetitions")
    sp.add_argument("--no-compute", action="store_true", help="fail instead of running missing variants")
    sp.set_defaults(func=cmd_figure)

    sp = sub.add_parser("validate", help="parse and validate a config file")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
