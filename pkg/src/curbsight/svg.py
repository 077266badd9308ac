"""Minimal deterministic SVG charts.

Each chart embeds its data as CSV inside an XML comment so tests can check
the plotted values without parsing geometry.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 360
MARGIN = (56, 20, 28, 48)  # left, right, top, bottom


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _nice_range(lo: float, hi: float) -> tuple[float, float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return 0.0, 1.0
    if hi <= lo:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    step = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(step))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= step), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + 1e-9 * step, step)]


class _Frame:
    def __init__(self, xlim, ylim):
        self.xlim, self.ylim = xlim, ylim
        left, right, top, bottom = MARGIN
        self.x0, self.x1 = left, WIDTH - right
        self.y0, self.y1 = HEIGHT - bottom, top

    def x(self, v: float) -> float:
        lo, hi = self.xlim
        return self.x0 + (v - lo) / (hi - lo) * (self.x1 - self.x0)

    def y(self, v: float) -> float:
        lo, hi = self.ylim
        return self.y0 + (v - lo) / (hi - lo) * (self.y1 - self.y0)


def _document(title: str, data_header: Sequence[str], data_rows: Sequence[Sequence], body: list[str]) -> str:
    table = "\n".join([",".join(data_header)] + [",".join(repr(v) if isinstance(v, float) else str(v) for v in r) for r in data_rows])
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<!-- data\n{table}\n-->",
        f"<title>{escape(title)}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    return "\n".join(out + body + ["</svg>"]) + "\n"


def _axes(frame: _Frame, xlabel: str, ylabel: str, xticks=True) -> list[str]:
    out = [
        f'<line x1="{frame.x0}" y1="{frame.y0}" x2="{frame.x1}" y2="{frame.y0}" stroke="black"/>',
        f'<line x1="{frame.x0}" y1="{frame.y0}" x2="{frame.x0}" y2="{frame.y1}" stroke="black"/>',
        f'<text x="{(frame.x0 + frame.x1) / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
        f'<text x="14" y="{(frame.y0 + frame.y1) / 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {(frame.y0 + frame.y1) / 2})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(*frame.ylim):
        y = _fmt(frame.y(t))
        out.append(f'<text x="{frame.x0 - 4}" y="{y}" text-anchor="end" font-size="9">{_fmt(t)}</text>')
    if xticks:
        for t in _ticks(*frame.xlim):
            x = _fmt(frame.x(t))
            out.append(f'<text x="{x}" y="{frame.y0 + 12}" text-anchor="middle" font-size="9">{_fmt(t)}</text>')
    return out


def scatter(
    x: Sequence[float],
    y: Sequence[float],
    title: str,
    xlabel: str,
    ylabel: str,
    identity_line: bool = True,
) -> str:
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("x and y must have equal length")
    if identity_line and xs.size:
        lo, hi = _nice_range(min(xs.min(), ys.min()), max(xs.max(), ys.max()))
        frame = _Frame((lo, hi), (lo, hi))
    else:
        frame = _Frame(_nice_range(*(xs.min(), xs.max()) if xs.size else (0, 1)), _nice_range(*(ys.min(), ys.max()) if ys.size else (0, 1)))
    body = _axes(frame, xlabel, ylabel)
    if identity_line:
        lo, hi = frame.xlim
        body.append(
            f'<line x1="{_fmt(frame.x(lo))}" y1="{_fmt(frame.y(lo))}" x2="{_fmt(frame.x(hi))}" y2="{_fmt(frame.y(hi))}" '
            'stroke="red" stroke-dasharray="4 3"/>'
        )
    for a, b in zip(xs, ys):
        body.append(f'<circle cx="{_fmt(frame.x(a))}" cy="{_fmt(frame.y(b))}" r="2" fill="seagreen" fill-opacity="0.6"/>')
    return _document(title, ("x", "y"), [(float(a), float(b)) for a, b in zip(xs, ys)], body)


def boxplot(groups: Mapping[str, Sequence[float]], title: str, ylabel: str) -> str:
    """Tukey boxplot per group: box at the quartiles, whiskers at 1.5 IQR, outliers as points."""
    labels = list(groups)
    arrays = [np.asarray(groups[k], dtype=float) for k in labels]
    all_values = np.concatenate([a for a in arrays if a.size] or [np.zeros(1)])
    frame = _Frame((0.0, float(max(len(labels), 1))), _nice_range(float(all_values.min()), float(all_values.max())))
    body = _axes(frame, "", ylabel, xticks=False)
    rows = []
    for i, (label, a) in enumerate(zip(labels, arrays)):
        cx = frame.x(i + 0.5)
        body.append(f'<text x="{_fmt(cx)}" y="{frame.y0 + 12}" text-anchor="middle" font-size="9">{escape(label)}</text>')
        if not a.size:
            rows.append((label, 0, "", "", "", "", ""))
            continue
        q1, med, q3 = (float(v) for v in np.quantile(a, [0.25, 0.5, 0.75]))
        iqr = q3 - q1
        inside = a[(a >= q1 - 1.5 * iqr) & (a <= q3 + 1.5 * iqr)]
        lo, hi = float(inside.min()), float(inside.max())
        rows.append((label, int(a.size), lo, q1, med, q3, hi))
        half = 0.3 * (frame.x(1) - frame.x(0))
        body += [
            f'<line x1="{_fmt(cx)}" y1="{_fmt(frame.y(lo))}" x2="{_fmt(cx)}" y2="{_fmt(frame.y(hi))}" stroke="black"/>',
            f'<rect x="{_fmt(cx - half)}" y="{_fmt(frame.y(q3))}" width="{_fmt(2 * half)}" '
            f'height="{_fmt(frame.y(q1) - frame.y(q3))}" fill="lightsteelblue" stroke="black"/>',
            f'<line x1="{_fmt(cx - half)}" y1="{_fmt(frame.y(med))}" x2="{_fmt(cx + half)}" y2="{_fmt(frame.y(med))}" '
            'stroke="black" stroke-width="2"/>',
        ]
        for v in a[(a < lo) | (a > hi)]:
            body.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(frame.y(float(v)))}" r="2" fill="none" stroke="black"/>')
    return _document(title, ("group", "n", "whisker_lo", "q25", "median", "q75", "whisker_hi"), rows, body)


def parse_embedded_data(svg_text: str) -> list[list[str]]:
    """CSV rows (header first) from a chart written by this module."""
    start = svg_text.index("<!-- data\n") + len("<!-- data\n")
    end = svg_text.index("\n-->", start)
    return [line.split(",") for line in svg_text[start:end].splitlines()]
