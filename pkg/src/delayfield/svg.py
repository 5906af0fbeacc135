"""Dependency-free SVG line and cell plots."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_W, _H = 640, 400
_M = {"l": 70, "r": 20, "t": 35, "b": 50}
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def _frame(xlim, ylim, xlabel: str, ylabel: str, title: str) -> list[str]:
    x0, y0 = _M["l"], _M["t"]
    pw, ph = _W - _M["l"] - _M["r"], _H - _M["t"] - _M["b"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="12">',
        f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle">{escape(title)}</text>',
        f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{_H / 2}" text-anchor="middle" transform="rotate(-90 15 {_H / 2})">{escape(ylabel)}</text>',
    ]
    for tx in _ticks(*xlim):
        px = x0 + (tx - xlim[0]) / ((xlim[1] - xlim[0]) or 1) * pw
        out.append(f'<text x="{px:.1f}" y="{y0 + ph + 16}" text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(*ylim):
        py = y0 + ph - (ty - ylim[0]) / ((ylim[1] - ylim[0]) or 1) * ph
        out.append(f'<text x="{x0 - 6}" y="{py + 4:.1f}" text-anchor="end">{ty:.3g}</text>')
    return out


def _limits(arrays) -> tuple[float, float]:
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def line_plot(series, xlabel: str, ylabel: str, title: str = "") -> str:
    """``series`` is a list of ``(x, y, label)``; NaNs break the polyline."""
    xlim = _limits([s[0] for s in series])
    ylim = _limits([s[1] for s in series])
    pw, ph = _W - _M["l"] - _M["r"], _H - _M["t"] - _M["b"]
    out = _frame(xlim, ylim, xlabel, ylabel, title)
    for i, (x, y, label) in enumerate(series):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        px = _M["l"] + (x - xlim[0]) / (xlim[1] - xlim[0]) * pw
        py = _M["t"] + ph - (y - ylim[0]) / (ylim[1] - ylim[0]) * ph
        color = _COLORS[i % len(_COLORS)]
        seg: list[str] = []
        for a, b in zip(px, py):
            if np.isfinite(a) and np.isfinite(b):
                seg.append(f"{a:.2f},{b:.2f}")
            elif seg:
                out.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(seg)}"/>')
                seg = []
        if seg:
            out.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(seg)}"/>')
        out.append(
            f'<text x="{_W - _M["r"] - 5}" y="{_M["t"] + 15 + 15 * i}" text-anchor="end" fill="{color}">{escape(label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cell_plot(x, y, flag, xlabel: str, ylabel: str, title: str = "") -> str:
    """Grid cells at ``(x, y)``; ``flag`` true cells are filled."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs, ys = np.unique(x), np.unique(y)
    dx = np.min(np.diff(xs)) if xs.size > 1 else 1.0
    dy = np.min(np.diff(ys)) if ys.size > 1 else 1.0
    xlim = (xs[0] - dx / 2, xs[-1] + dx / 2)
    ylim = (ys[0] - dy / 2, ys[-1] + dy / 2)
    pw, ph = _W - _M["l"] - _M["r"], _H - _M["t"] - _M["b"]
    out = _frame(xlim, ylim, xlabel, ylabel, title)
    cw = dx / (xlim[1] - xlim[0]) * pw
    chh = dy / (ylim[1] - ylim[0]) * ph
    for xi, yi, f in zip(x, y, flag):
        px = _M["l"] + (xi - dx / 2 - xlim[0]) / (xlim[1] - xlim[0]) * pw
        py = _M["t"] + ph - (yi + dy / 2 - ylim[0]) / (ylim[1] - ylim[0]) * ph
        fill = "#d62728" if f else "#dddddd"
        out.append(f'<rect x="{px:.2f}" y="{py:.2f}" width="{cw:.2f}" height="{chh:.2f}" fill="{fill}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
