"""Minimal line charts rendered straight to SVG text."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 55


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]
    color: str | None = None


@dataclass
class RefLine:
    y: float
    label: str
    color: str | None = None
    dash: str = "6,4"


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    refs: list[RefLine] = field(default_factory=list)
    log_y: bool = False


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * abs(hi):
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}"
    return f"{v:g}"


def _thin(xs, ys, limit=2000):
    """Keep at most ``limit`` points, always including the last."""
    if len(xs) <= limit:
        return list(xs), list(ys)
    step = math.ceil(len(xs) / limit)
    idx = list(range(0, len(xs), step))
    if idx[-1] != len(xs) - 1:
        idx.append(len(xs) - 1)
    return [xs[i] for i in idx], [ys[i] for i in idx]


def render(chart: Chart) -> str:
    tf = math.log10 if chart.log_y else (lambda v: v)
    pts = []
    for s in chart.series:
        for x, y in zip(s.x, s.y):
            if chart.log_y and y <= 0:
                continue
            pts.append((x, tf(y)))
    ys = [p[1] for p in pts] + [tf(r.y) for r in chart.refs if not chart.log_y or r.y > 0]
    xs = [p[0] for p in pts]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(chart.title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        X = px(t)
        out.append(f'<line x1="{X:.1f}" y1="{TOP + ph}" x2="{X:.1f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.1f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    if chart.log_y:
        yticks = list(range(math.ceil(y0), math.floor(y1) + 1))
        ylabels = [f"1e{t}" for t in yticks]
    else:
        yticks = _nice_ticks(y0, y1)
        ylabels = [_fmt(t) for t in yticks]
    for t, lab in zip(yticks, ylabels):
        Y = py(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{Y:.1f}" x2="{LEFT + pw}" y2="{Y:.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{Y + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(chart.xlabel)}</text>')
    out.append(
        f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(chart.ylabel)}</text>'
    )

    legend = []
    for i, s in enumerate(chart.series):
        color = s.color or PALETTE[i % len(PALETTE)]
        xs_, ys_ = _thin(s.x, s.y)
        coords = " ".join(
            f"{px(x):.2f},{py(tf(y)):.2f}" for x, y in zip(xs_, ys_) if not (chart.log_y and y <= 0)
        )
        if coords:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        legend.append((s.label, color, None))
    for i, r in enumerate(chart.refs):
        if chart.log_y and r.y <= 0:
            continue
        color = r.color or PALETTE[i % len(PALETTE)]
        Y = py(tf(r.y))
        out.append(
            f'<line x1="{LEFT}" y1="{Y:.2f}" x2="{LEFT + pw}" y2="{Y:.2f}" stroke="{color}" '
            f'stroke-dasharray="{r.dash}" stroke-width="1"/>'
        )
        legend.append((r.label, color, r.dash))

    lx = LEFT + pw + 12
    for j, (label, color, dash) in enumerate(legend):
        ly = TOP + 10 + 18 * j
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"{extra}/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
