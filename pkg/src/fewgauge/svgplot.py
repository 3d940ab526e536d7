"""Minimal deterministic SVG scatter plots (no plotting dependency)."""

from __future__ import annotations

from typing import Sequence

_WIDTH = 640
_HEIGHT = 480
_MARGIN = 60


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def scatter_svg(
    x: Sequence[float],
    y: Sequence[float],
    xlabel: str,
    ylabel: str,
    title: str = "",
) -> str:
    """Scatter plot as an SVG string; output is a pure function of the data."""
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if len(xs) != len(ys) or not xs:
        raise ValueError("x and y must be equal-length and non-empty")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN

    def px(v: float) -> float:
        return _MARGIN + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return _HEIGHT - _MARGIN - (v - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="black"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        out.append(
            f'<text x="{px(tx):.1f}" y="{_HEIGHT - _MARGIN + 20}" font-size="12" '
            f'text-anchor="middle">{tx:.3g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        out.append(
            f'<text x="{_MARGIN - 8}" y="{py(ty):.1f}" font-size="12" '
            f'text-anchor="end">{ty:.3g}</text>'
        )
    out.append(
        f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 12}" font-size="14" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{_HEIGHT / 2}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 16 {_HEIGHT / 2})">{ylabel}</text>'
    )
    if title:
        out.append(
            f'<text x="{_WIDTH / 2}" y="24" font-size="14" text-anchor="middle">{title}</text>'
        )
    for vx, vy in zip(xs, ys):
        out.append(f'<circle cx="{px(vx):.2f}" cy="{py(vy):.2f}" r="2.5" fill="steelblue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
