"""Minimal deterministic SVG scatterplots of estimated versus true R0.

The canvas is 800x600 px with margins left 70, right 30, top 40, bottom 60.
Points above the plotted range are drawn as open triangles on the top edge.
"""

from __future__ import annotations

import csv
import math

WIDTH, HEIGHT = 800, 600
MARGIN = {"left": 70, "right": 30, "top": 40, "bottom": 60}


def read_scatter_csv(path: str) -> list:
    with open(path, newline="") as fh:
        return [
            {k: float(v) if k not in ("index", "out_of_range") else int(v) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def _ticks(lo, hi, n=5):
    span = hi - lo
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12:
        out.append(round(v, 10))
        v += step
    return out


def scatter_svg(rows: list, log_scale: bool = False, title: str = "Estimated versus true R0", max_value=None) -> str:
    xk, yk = ("log_true_r0", "log_estimated_r0") if log_scale else ("true_r0", "estimated_r0")
    xs = [r[xk] for r in rows]
    ys = [r[yk] for r in rows]
    finite = [v for v in xs + ys if math.isfinite(v)]
    lo = math.floor(min(finite)) if log_scale and finite else 0.0
    top = max(xs, default=1.0)
    hi = max_value if max_value is not None else lo + 1.25 * (top - lo)
    if hi <= lo:
        hi = lo + 1.0
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    sx = lambda v: x0 + (v - lo) / (hi - lo) * (x1 - x0)
    sy = lambda v: y0 - (v - lo) / (hi - lo) * (y0 - y1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>',
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>',
        f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
        'stroke="gray" stroke-dasharray="6,4"/>',
    ]
    for t in _ticks(lo, hi):
        out.append(f'<line x1="{sx(t):.2f}" y1="{y0}" x2="{sx(t):.2f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(
            f'<text x="{sx(t):.2f}" y="{y0 + 20}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="12">{t:g}</text>'
        )
        out.append(f'<line x1="{x0 - 5}" y1="{sy(t):.2f}" x2="{x0}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(
            f'<text x="{x0 - 8}" y="{sy(t) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
            f'font-size="12">{t:g}</text>'
        )
    label = "ln(R0)" if log_scale else "R0"
    out.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">True {label}</text>'
    )
    out.append(
        f'<text x="18" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14" transform="rotate(-90 18 {(y0 + y1) / 2:.1f})">Estimated {label}</text>'
    )
    for x, y in zip(xs, ys):
        if not math.isfinite(x):
            continue
        if y > hi or not math.isfinite(y):
            px = sx(x)
            out.append(
                f'<polygon points="{px:.2f},{y1:.2f} {px - 4:.2f},{y1 + 7:.2f} {px + 4:.2f},{y1 + 7:.2f}" '
                'fill="none" stroke="firebrick"/>'
            )
        else:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="steelblue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
