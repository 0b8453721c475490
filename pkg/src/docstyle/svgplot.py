"""Minimal hand-rolled SVG line charts for metric curves."""
from __future__ import annotations

from pathlib import Path

W, H = 640, 400
MARGIN = 56
COLORS = ("#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2")


def _scale(vals, lo, hi, out_lo, out_hi):
    span = (hi - lo) or 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in vals]


def line_chart(series: dict, path, title: str = "", x_label: str = "",
               y_label: str = ""):
    """Write a chart of named (x, y) series to an SVG file.

    series maps a legend name to a pair of equal-length sequences.
    """
    xs_all = [x for pts in series.values() for x in pts[0]]
    ys_all = [y for pts in series.values() for y in pts[1]]
    if not xs_all:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
             f'<rect width="{W}" height="{H}" fill="white"/>']
    ax = (MARGIN, W - MARGIN // 2, H - MARGIN, MARGIN)  # x0, x1, y0 (bottom), y1 (top)
    parts.append(f'<line x1="{ax[0]}" y1="{ax[2]}" x2="{ax[1]}" y2="{ax[2]}" stroke="#333"/>')
    parts.append(f'<line x1="{ax[0]}" y1="{ax[2]}" x2="{ax[0]}" y2="{ax[3]}" stroke="#333"/>')
    for i in range(5):
        fy = y_lo + (y_hi - y_lo) * i / 4
        py = _scale([fy], y_lo, y_hi, ax[2], ax[3])[0]
        parts.append(f'<line x1="{ax[0] - 4}" y1="{py:.1f}" x2="{ax[1]}" y2="{py:.1f}" '
                     f'stroke="#ddd" stroke-dasharray="3,3"/>')
        parts.append(f'<text x="{ax[0] - 8}" y="{py + 4:.1f}" text-anchor="end">{fy:.3g}</text>')
        fx = x_lo + (x_hi - x_lo) * i / 4
        px = _scale([fx], x_lo, x_hi, ax[0], ax[1])[0]
        parts.append(f'<text x="{px:.1f}" y="{ax[2] + 16}" text-anchor="middle">{fx:.3g}</text>')
    for ci, (name, (xs, ys)) in enumerate(series.items()):
        color = COLORS[ci % len(COLORS)]
        px = _scale(xs, x_lo, x_hi, ax[0], ax[1])
        py = _scale(ys, y_lo, y_hi, ax[2], ax[3])
        points = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(px, py))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in zip(px, py):
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')
        ly = MARGIN + 16 * ci
        parts.append(f'<rect x="{ax[1] - 120}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{ax[1] - 105}" y="{ly}">{name}</text>')
    if title:
        parts.append(f'<text x="{W // 2}" y="24" text-anchor="middle" font-size="15">{title}</text>')
    if x_label:
        parts.append(f'<text x="{(ax[0] + ax[1]) // 2}" y="{H - 12}" text-anchor="middle">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="16" y="{(ax[2] + ax[3]) // 2}" text-anchor="middle" '
                     f'transform="rotate(-90 16 {(ax[2] + ax[3]) // 2})">{y_label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="utf-8")
