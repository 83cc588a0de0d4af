"""Deterministic SVG plots: lead traces, ROC curves and row profiles.

Output depends only on the input numbers: fixed viewport, fixed number
formatting, no timestamps or random ids, so identical inputs give
byte-identical files.
"""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 300
MARGIN = 40
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _scale(vals, lo_px, hi_px, lo=None, hi=None):
    vals = np.asarray(vals, dtype=np.float64)
    lo = float(vals.min()) if lo is None else lo
    hi = float(vals.max()) if hi is None else hi
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo_px + (vals - lo) / (hi - lo) * (hi_px - lo_px), lo, hi


def _frame(title: str, width=WIDTH, height=HEIGHT) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{width - 2 * MARGIN}" height="{height - 2 * MARGIN}" '
        'fill="none" stroke="#999" stroke-width="1"/>',
        f'<text x="{MARGIN}" y="{MARGIN - 12}" font-family="monospace" font-size="12">{escape(title)}</text>',
    ]


def _polyline(xs, ys, color: str, width: float = 1.0) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def _runs(mask):
    """(start, stop) index ranges where ``mask`` is False."""
    out, start = [], None
    for i, m in enumerate(mask):
        if not m and start is None:
            start = i
        elif m and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def trace_svg(series: list, title: str = "trace") -> str:
    """One polyline per ``TimeSeries``; gap samples break the line.

    Every series shares the time and voltage axes.
    """
    if not series:
        raise ValueError("nothing to plot")
    t_hi = max(s.dt * max(len(s) - 1, 1) for s in series)
    allv = np.concatenate([s.values for s in series if len(s)] or [np.zeros(1)])
    v_lo, v_hi = float(allv.min()), float(allv.max())
    out = _frame(title)
    for k, s in enumerate(series):
        color = COLORS[k % len(COLORS)]
        xs, _, _ = _scale(s.times, MARGIN, WIDTH - MARGIN, 0.0, t_hi)
        ys, _, _ = _scale(s.values, HEIGHT - MARGIN, MARGIN, v_lo, v_hi)
        for a, b in _runs(s.gap):
            out.append(_polyline(xs[a:b], ys[a:b], color))
        out.append(f'<text x="{WIDTH - MARGIN - 60}" y="{MARGIN + 14 * (k + 1)}" font-family="monospace" '
                   f'font-size="11" fill="{color}">{escape(s.lead or f"series{k + 1}")}</text>')
    out.append(f'<text x="{MARGIN}" y="{HEIGHT - 12}" font-family="monospace" font-size="11">'
               f't 0..{_fmt(t_hi)} s, v {_fmt(v_lo)}..{_fmt(v_hi)} mV</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def roc_svg(curves: list, title: str = "ROC") -> str:
    """``curves`` holds ``(label, roc)`` pairs; roc rows are ``(fpr, tpr, threshold)``."""
    size = HEIGHT
    out = _frame(title, size, size)
    lo, hi = MARGIN, size - MARGIN
    out.append(f'<line x1="{lo}" y1="{hi}" x2="{hi}" y2="{lo}" stroke="#ccc" stroke-dasharray="4 4"/>')
    for k, (label, roc) in enumerate(curves):
        color = COLORS[k % len(COLORS)]
        pts = np.asarray([(r[0], r[1]) for r in roc], dtype=np.float64).reshape(-1, 2)
        xs, _, _ = _scale(pts[:, 0], lo, hi, 0.0, 1.0)
        ys, _, _ = _scale(pts[:, 1], hi, lo, 0.0, 1.0)
        d = " ".join(("M" if i == 0 else "L") + f"{_fmt(x)},{_fmt(y)}" for i, (x, y) in enumerate(zip(xs, ys)))
        out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{lo + 8}" y="{lo + 14 * (k + 1)}" font-family="monospace" font-size="11" '
                   f'fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def roc_points(svg: str) -> list:
    """Normalised ``(fpr, tpr)`` vertices of the first path in a ROC plot."""
    start = svg.index('<path d="') + len('<path d="')
    d = svg[start:svg.index('"', start)]
    lo, hi = MARGIN, HEIGHT - MARGIN
    pts = []
    for tok in d.split():
        x, y = (float(v) for v in tok[1:].split(","))
        pts.append(((x - lo) / (hi - lo), (hi - y) / (hi - lo)))
    return pts


def profile_svg(counts, peaks=(), cuts=(), title: str = "row profile") -> str:
    """Foreground count per row, rows running left to right; peaks red, cuts gray."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("empty profile")
    n = counts.size
    out = _frame(title)
    xs, _, _ = _scale(np.arange(n), MARGIN, WIDTH - MARGIN, 0.0, max(n - 1, 1))
    ys, _, c_hi = _scale(counts, HEIGHT - MARGIN, MARGIN, 0.0, None)
    out.append(_polyline(xs, ys, COLORS[0]))
    for r in cuts:
        x = xs[int(r)] if 0 <= int(r) < n else None
        if x is not None:
            out.append(f'<line x1="{_fmt(x)}" y1="{MARGIN}" x2="{_fmt(x)}" y2="{HEIGHT - MARGIN}" stroke="#888"/>')
    for r in peaks:
        if 0 <= int(r) < n:
            out.append(f'<circle cx="{_fmt(xs[int(r)])}" cy="{_fmt(ys[int(r)])}" r="3" fill="{COLORS[1]}"/>')
    out.append(f'<text x="{MARGIN}" y="{HEIGHT - 12}" font-family="monospace" font-size="11">'
               f'rows 0..{n - 1}, max count {_fmt(c_hi)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def polyline_vertices(svg: str) -> int:
    """Total vertex count over every polyline; used by tests."""
    total = 0
    for part in svg.split('<polyline points="')[1:]:
        pts = part[:part.index('"')].split()
        total += len(pts)
    return total


def finite_or_raise(values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError("cannot plot non-finite values")
