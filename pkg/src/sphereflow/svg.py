"""Minimal static SVG line plots (axes, ticks, polylines, legend)."""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _fmt(x):
    return f"{x:.2f}"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def _escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def line_plot(series, title="", xlabel="", ylabel="", logy=False):
    """Render ``series`` = [(label, xs, ys), ...] as an SVG document string.

    With ``logy`` the y axis shows log10 of the data; nonpositive values are dropped.
    """
    curves = []
    for label, xs, ys in series:
        x = np.asarray(xs, dtype=float)
        y = np.asarray(ys, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if logy:
            keep &= y > 0
            y = np.where(keep, np.log10(np.where(keep, y, 1.0)), 0.0)
        curves.append((label, x[keep], y[keep]))
    pts = [c for c in curves if c[1].size]
    if pts:
        xlo = min(float(c[1].min()) for c in pts)
        xhi = max(float(c[1].max()) for c in pts)
        ylo = min(float(c[2].min()) for c in pts)
        yhi = max(float(c[2].max()) for c in pts)
    else:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def sx(x):
        return left + (x - xlo) / (xhi - xlo) * pw

    def sy(y):
        return top + (1.0 - (y - ylo) / (yhi - ylo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for xt in _ticks(xlo, xhi):
        X = _fmt(sx(xt))
        out.append(f'<line x1="{X}" y1="{top + ph}" x2="{X}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{top + ph + 18}" font-size="11" text-anchor="middle">{xt:.3g}</text>')
    for yt in _ticks(ylo, yhi):
        Y = _fmt(sy(yt))
        lab = f"1e{yt:.1f}" if logy else f"{yt:.3g}"
        out.append(f'<line x1="{left - 5}" y1="{Y}" x2="{left}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{Y}" font-size="11" text-anchor="end" dominant-baseline="middle">{lab}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" font-size="14" text-anchor="middle">{_escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 8}" font-size="12" text-anchor="middle">{_escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{_escape(ylabel)}</text>'
        )
    for i, (label, x, y) in enumerate(curves):
        color = COLORS[i % len(COLORS)]
        if x.size:
            path = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 120}" y1="{ly}" x2="{left + pw - 100}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 95}" y="{ly + 4}" font-size="11">{_escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(path, series, **kw):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(line_plot(series, **kw))


def pick_indices(count, k=5):
    """Up to k evenly spread indices into a sequence of length count, endpoints included."""
    if count <= k:
        return list(range(count))
    return sorted({int(round(i)) for i in np.linspace(0, count - 1, k)})


__all__ = ["line_plot", "write_plot", "pick_indices"]
