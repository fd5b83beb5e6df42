"""Minimal deterministic SVG line and band charts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from .errors import InvalidArgumentError

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=80, right=160, top=50, bottom=60)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
BAND_COLOR = "#9ecae1"


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def nice_ticks(lo: float, hi: float, target: int = 5) -> List[float]:
    """Ticks at multiples of 1, 2 or 5 times a power of ten covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidArgumentError("axis limits must be finite")
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9)
    last = math.floor(hi / step + 1e-9)
    digits = max(0, 3 - math.floor(math.log10(step)))
    return [round(k * step, digits) for k in range(first, last + 1)]


def _label(v: float) -> str:
    return f"{v:.6g}"


def _limits(values: Sequence[np.ndarray], fixed: Optional[Tuple[float, float]]) -> Tuple[float, float]:
    if fixed is not None:
        return float(fixed[0]), float(fixed[1])
    finite = np.concatenate([v[np.isfinite(v)] for v in values]) if values else np.array([])
    if finite.size == 0:
        return 0.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def line_chart(series: Sequence[Series], title: str = "", x_label: str = "", y_label: str = "",
               band: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
               band_label: str = "g± band",
               y_range: Optional[Tuple[float, float]] = None) -> str:
    """SVG text for polylines plus an optional shaded band (x, lower, upper)."""
    if not series and band is None:
        raise InvalidArgumentError("nothing to plot")
    xs = [s.x for s in series] + ([band[0]] if band is not None else [])
    ys = [s.y for s in series] + (list(band[1:]) if band is not None else [])
    x0, x1 = _limits(xs, None)
    y0, y1 = _limits(ys, y_range)
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return left + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (np.asarray(y, dtype=float) - y0) / (y1 - y0) * ph

    def pts(x, y):
        mask = np.isfinite(x) & np.isfinite(y)
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(x[mask]), py(y[mask])))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{left + pw / 2:.2f}" y="28" text-anchor="middle" '
                   f'font-size="16">{escape(title)}</text>')

    for t in nice_ticks(x0, x1):
        x = float(px(t))
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="#000"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 20}" text-anchor="middle">{_label(t)}</text>')
    for t in nice_ticks(y0, y1):
        y = float(py(t))
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#000"/>')
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#eeeeee"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{_label(t)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>')
    if x_label:
        out.append(f'<text x="{left + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(x_label)}</text>')
    if y_label:
        cy = top + ph / 2
        out.append(f'<text x="20" y="{cy:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 20 {cy:.2f})">{escape(y_label)}</text>')

    legend = []
    if band is not None:
        bx, lo, hi = (np.asarray(a, dtype=float) for a in band)
        poly = pts(bx, np.minimum(lo, hi)) + " " + pts(bx[::-1], np.maximum(lo, hi)[::-1])
        out.append(f'<polygon points="{poly}" fill="{BAND_COLOR}" fill-opacity="0.5" stroke="none"/>')
        legend.append((band_label, BAND_COLOR))
    for i, s in enumerate(series):
        color = COLORS[i % len(COLORS)]
        out.append(f'<polyline points="{pts(np.asarray(s.x, float), np.asarray(s.y, float))}" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        legend.append((s.label, color))
    for i, (label, color) in enumerate(legend):
        y = top + 10 + 20 * i
        lx = left + pw + 15
        out.append(f'<rect x="{lx}" y="{y - 8}" width="14" height="10" fill="{color}"/>')
        out.append(f'<text x="{lx + 20}" y="{y + 1}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
