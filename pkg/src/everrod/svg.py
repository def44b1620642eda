"""Minimal deterministic SVG line plots for force-displacement curves.

Output is a pure function of the input curves and style: fixed canvas,
fixed palette, numbers formatted with a fixed precision.  Re-rendering
the same data yields byte-identical documents, which keeps plot files
safe to diff and to hash in reproducibility checks.

Axes are displacement in millimeters and force in newtons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataError

PALETTE = ("#1f6fb2", "#d1495b", "#3d8f5f", "#8e6cae", "#c98a2b",
           "#4ca8a8", "#a34f8c", "#6b6b6b")


@dataclass(frozen=True)
class PlotStyle:
    width: int = 640
    height: int = 480
    margin_left: int = 64
    margin_right: int = 16
    margin_top: int = 20
    margin_bottom: int = 48
    stroke_width: float = 1.5
    font: str = "monospace"
    font_size: int = 12
    title: str = "force vs displacement"


def _fmt(v: float) -> str:
    # fixed decimal formatting keeps documents byte-stable
    return f"{v:.3f}".rstrip("0").rstrip(".") if v != int(v) else str(int(v))


def _tick_values(lo: float, hi: float, target: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target + 0.5:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * span:
        ticks.append(round(v, 10))
        v += step
    return ticks


def plot_curve(curves, style: PlotStyle | None = None) -> str:
    """Render one or more curves into an SVG document string."""
    if not isinstance(curves, (list, tuple)):
        curves = [curves]
    if not curves:
        raise DataError("no curves to plot")
    for c in curves:
        if not c.samples:
            raise DataError("cannot plot an empty curve")
    style = style or PlotStyle()

    xs_mm = [x * 1e3 for c in curves for x, _ in c.samples]
    ys_n = [f for c in curves for _, f in c.samples]
    x_lo, x_hi = 0.0, max(xs_mm) if max(xs_mm) > 0 else 1.0
    y_lo, y_hi = 0.0, max(ys_n) if max(ys_n) > 0 else 1.0
    y_hi *= 1.05  # headroom so the top sample is not clipped by the frame

    px_w = style.width - style.margin_left - style.margin_right
    px_h = style.height - style.margin_top - style.margin_bottom

    def sx(x_mm: float) -> float:
        return style.margin_left + (x_mm - x_lo) / (x_hi - x_lo) * px_w

    def sy(f_n: float) -> float:
        return style.margin_top + px_h - (f_n - y_lo) / (y_hi - y_lo) * px_h

    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width}" '
               f'height="{style.height}" viewBox="0 0 {style.width} {style.height}">')
    out.append(f'<rect width="{style.width}" height="{style.height}" fill="white"/>')
    out.append(f'<text x="{style.margin_left}" y="{style.margin_top - 6}" '
               f'font-family="{style.font}" font-size="{style.font_size}">'
               f'{style.title}</text>')

    frame = (f'<rect x="{style.margin_left}" y="{style.margin_top}" width="{px_w}" '
             f'height="{px_h}" fill="none" stroke="black" stroke-width="1"/>')
    out.append(frame)

    for tick in _tick_values(x_lo, x_hi):
        px = sx(tick)
        out.append(f'<line x1="{px:.2f}" y1="{style.margin_top + px_h}" x2="{px:.2f}" '
                   f'y2="{style.margin_top + px_h + 5}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{px:.2f}" y="{style.margin_top + px_h + 18}" '
                   f'font-family="{style.font}" font-size="{style.font_size}" '
                   f'text-anchor="middle">{_fmt(tick)}</text>')
    out.append(f'<text x="{style.margin_left + px_w / 2:.2f}" '
               f'y="{style.height - 10}" font-family="{style.font}" '
               f'font-size="{style.font_size}" text-anchor="middle">displacement (mm)</text>')

    for tick in _tick_values(y_lo, y_hi):
        py = sy(tick)
        out.append(f'<line x1="{style.margin_left - 5}" y1="{py:.2f}" '
                   f'x2="{style.margin_left}" y2="{py:.2f}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{style.margin_left - 8}" y="{py + 4:.2f}" '
                   f'font-family="{style.font}" font-size="{style.font_size}" '
                   f'text-anchor="end">{_fmt(tick)}</text>')
    out.append(f'<text x="14" y="{style.margin_top + px_h / 2:.2f}" '
               f'font-family="{style.font}" font-size="{style.font_size}" '
               f'text-anchor="middle" transform="rotate(-90 14 '
               f'{style.margin_top + px_h / 2:.2f})">force (N)</text>')

    for idx, curve in enumerate(curves):
        color = PALETTE[idx % len(PALETTE)]
        points = " ".join(f"{sx(x * 1e3):.2f},{sy(f):.2f}" for x, f in curve.samples)
        out.append(f'<polyline fill="none" stroke="{color}" '
                   f'stroke-width="{style.stroke_width}" points="{points}"/>')

    legend_y = style.margin_top + 14
    for idx, curve in enumerate(curves):
        color = PALETTE[idx % len(PALETTE)]
        label = curve.spec_id or f"curve {idx + 1}"
        y = legend_y + idx * (style.font_size + 4)
        out.append(f'<line x1="{style.margin_left + 8}" y1="{y - 4}" '
                   f'x2="{style.margin_left + 28}" y2="{y - 4}" stroke="{color}" '
                   f'stroke-width="{style.stroke_width}"/>')
        out.append(f'<text x="{style.margin_left + 34}" y="{y}" '
                   f'font-family="{style.font}" font-size="{style.font_size}">{label}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
