"""
Standalone SVG scatter plot with a categorical legend.

Output depends only on the inputs: colours come from a fixed matplotlib
palette in sorted label order and every number is written with fixed
precision.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import matplotlib
import numpy as np
from matplotlib.colors import to_hex

from models.errors import ContractViolation, DimensionError

WIDTH, HEIGHT = 720, 480
PLOT_LEFT, PLOT_TOP, PLOT_RIGHT, PLOT_BOTTOM = 60, 40, 540, 420
MARGIN_FRACTION = 0.05


def palette(labels: Sequence[str]) -> dict[str, str]:
    """Hex colour per distinct label; tab10 up to 10 labels, tab20 beyond, cycling after that."""
    ordered = sorted(set(labels))
    cmap = matplotlib.colormaps["tab10" if len(ordered) <= 10 else "tab20"]
    return {label: to_hex(cmap(i % cmap.N)) for i, label in enumerate(ordered)}


def _axis_range(values: np.ndarray) -> tuple[float, float]:
    low, high = float(values.min()), float(values.max())
    span = high - low
    if span == 0:
        return low - 0.5, high + 0.5
    return low - MARGIN_FRACTION * span, high + MARGIN_FRACTION * span


def render_scatter_svg(points, labels: Sequence[str], title: str = "") -> str:
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise ContractViolation("scatter plot needs at least one point")
    if points.ndim != 2 or points.shape[1] != 2:
        raise DimensionError(f"scatter points must be N x 2, got shape {points.shape}")
    if len(points) != len(labels):
        raise DimensionError(f"{len(points)} points but {len(labels)} labels")

    colours = palette(labels)
    x_low, x_high = _axis_range(points[:, 0])
    y_low, y_high = _axis_range(points[:, 1])

    def sx(x: float) -> float:
        return PLOT_LEFT + (x - x_low) / (x_high - x_low) * (PLOT_RIGHT - PLOT_LEFT)

    def sy(y: float) -> float:
        return PLOT_BOTTOM - (y - y_low) / (y_high - y_low) * (PLOT_BOTTOM - PLOT_TOP)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{PLOT_RIGHT - PLOT_LEFT}" '
        f'height="{PLOT_BOTTOM - PLOT_TOP}" fill="none" stroke="#333333" stroke-width="1"/>',
    ]
    if title:
        lines.append(f'<text x="{(PLOT_LEFT + PLOT_RIGHT) / 2:.1f}" y="24" font-family="sans-serif" '
                     f'font-size="14" text-anchor="middle">{escape(title)}</text>')
    tick_style = 'font-family="sans-serif" font-size="10" fill="#333333"'
    lines += [
        f'<text x="{PLOT_LEFT}" y="{PLOT_BOTTOM + 16}" {tick_style} text-anchor="start">{x_low:.3f}</text>',
        f'<text x="{PLOT_RIGHT}" y="{PLOT_BOTTOM + 16}" {tick_style} text-anchor="end">{x_high:.3f}</text>',
        f'<text x="{PLOT_LEFT - 6}" y="{PLOT_BOTTOM}" {tick_style} text-anchor="end">{y_low:.3f}</text>',
        f'<text x="{PLOT_LEFT - 6}" y="{PLOT_TOP + 10}" {tick_style} text-anchor="end">{y_high:.3f}</text>',
        f'<text x="{(PLOT_LEFT + PLOT_RIGHT) / 2:.1f}" y="{HEIGHT - 16}" {tick_style} text-anchor="middle">PC1</text>',
        f'<text x="16" y="{(PLOT_TOP + PLOT_BOTTOM) / 2:.1f}" {tick_style} text-anchor="middle" '
        f'transform="rotate(-90 16 {(PLOT_TOP + PLOT_BOTTOM) / 2:.1f})">PC2</text>',
    ]
    for (x, y), label in zip(points, labels):
        lines.append(f'<circle cx="{sx(x):.3f}" cy="{sy(y):.3f}" r="4" fill="{colours[label]}" '
                     f'fill-opacity="0.8"/>')

    legend_x = PLOT_RIGHT + 20
    lines.append('<g class="legend">')
    for i, label in enumerate(sorted(colours)):
        y = PLOT_TOP + 8 + i * 16
        lines.append(f'<rect x="{legend_x}" y="{y - 8}" width="10" height="10" fill="{colours[label]}"/>')
        lines.append(f'<text x="{legend_x + 16}" y="{y + 1}" font-family="sans-serif" font-size="11">'
                     f'{escape(str(label))}</text>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_scatter_svg(points, labels: Sequence[str], out: Path, title: str = "") -> Path:
    svg = render_scatter_svg(points, labels, title)
    out = Path(out)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg)
    return out
