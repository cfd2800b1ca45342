"""Tiny SVG line-chart writer for log-log error plots."""

from __future__ import annotations

import math

from .io import atomic_write_text

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def loglog_svg(series: dict, path, xlabel="H", ylabel="relative energy error", title="", width=480, height=360):
    """``series`` maps a label to ``(xs, ys)``; non-positive values are skipped."""
    pts = {k: [(x, y) for x, y in zip(*v) if x > 0 and y > 0] for k, v in series.items()}
    allx = [math.log10(x) for v in pts.values() for x, _ in v]
    ally = [math.log10(y) for v in pts.values() for _, y in v]
    if not allx:
        allx, ally = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = math.floor(min(ally)), math.ceil(max(ally))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    ml, mr, mt, mb = 60, 110, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (math.log10(x) - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + (y1 - math.log10(y)) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2:.1f})">{ylabel}</text>',
    ]
    if title:
        out.append(f'<text x="{ml + pw / 2:.1f}" y="18" text-anchor="middle">{title}</text>')
    for e in range(int(y0), int(y1) + 1):
        y = mt + (y1 - e) / (y1 - y0) * ph
        out.append(f'<line x1="{ml}" x2="{ml + pw}" y1="{y:.1f}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 4}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    xs = sorted({x for v in pts.values() for x, _ in v})
    for x in xs:
        out.append(f'<text x="{sx(x):.1f}" y="{mt + ph + 14}" text-anchor="middle">{x:.3g}</text>')
    for i, (label, v) in enumerate(pts.items()):
        color = _COLORS[i % len(_COLORS)]
        path_d = " ".join(f"{'M' if j == 0 else 'L'}{sx(x):.1f},{sy(y):.1f}" for j, (x, y) in enumerate(v))
        out.append(f'<path d="{path_d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in v:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        ly = mt + 12 + 16 * i
        out.append(f'<line x1="{ml + pw + 8}" x2="{ml + pw + 24}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 28}" y="{ly + 4}">{label}</text>')
    out.append("</svg>")
    atomic_write_text(path, "\n".join(out) + "\n")
