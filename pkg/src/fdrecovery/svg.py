"""Minimal SVG line charts; output is a pure function of the inputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1b6f3a", "#c0392b", "#2c7fb8", "#7b3294", "#e08214", "#555555")


@dataclass
class Line:
    x: np.ndarray
    y: np.ndarray
    color: str | None = None
    width: float = 1.2
    opacity: float = 1.0
    dash: str | None = None
    label: str | None = None


@dataclass
class Chart:
    lines: list = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def _num(v: float) -> str:
    return f"{v:.3g}"


def _chart_body(chart: Chart, width: int, height: int) -> str:
    ml, mr, mt, mb = 58, 12, 26, 40
    pw, ph = width - ml - mr, height - mt - mb
    xs = np.concatenate([np.asarray(l.x, float) for l in chart.lines]) if chart.lines else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(l.y, float) for l in chart.lines]) if chart.lines else np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    out = [f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.2f}" y="{mt + ph + 14}" font-size="10" text-anchor="middle">{_num(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{ml - 4}" y="{sy(t) + 3:.2f}" font-size="10" text-anchor="end">{_num(t)}</text>')
    if y0 < 0 < y1:
        out.append(f'<line x1="{ml}" x2="{ml + pw}" y1="{sy(0):.2f}" y2="{sy(0):.2f}" stroke="#ccc"/>')
    for i, l in enumerate(chart.lines):
        color = l.color or PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(l.x, l.y))
        dash = f' stroke-dasharray="{l.dash}"' if l.dash else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{l.width}" '
                   f'stroke-opacity="{l.opacity}"{dash}/>')
    labels = [(l.label, l.color or PALETTE[i % len(PALETTE)]) for i, l in enumerate(chart.lines) if l.label]
    for k, (lab, color) in enumerate(labels):
        out.append(f'<text x="{ml + pw - 4}" y="{mt + 12 + 12 * k}" font-size="10" text-anchor="end" '
                   f'fill="{color}">{escape(lab)}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="16" font-size="12" text-anchor="middle">{escape(chart.title)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 6}" font-size="11" text-anchor="middle">'
               f'{escape(chart.xlabel)}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" font-size="11" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{escape(chart.ylabel)}</text>')
    return "\n".join(out)


def render(charts: list[Chart], ncols: int = 1, width: int = 420, height: int = 260) -> str:
    """Lay ``charts`` out on a grid and return the SVG document."""
    ncols = max(1, min(ncols, len(charts) or 1))
    nrows = -(-max(len(charts), 1) // ncols)
    W, H = ncols * width, nrows * height
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
             f'font-family="sans-serif">', f'<rect width="{W}" height="{H}" fill="white"/>']
    for k, chart in enumerate(charts):
        r, c = divmod(k, ncols)
        parts.append(f'<g transform="translate({c * width},{r * height})">')
        parts.append(_chart_body(chart, width, height))
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
