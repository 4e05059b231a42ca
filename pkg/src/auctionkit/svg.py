"""Standalone SVG charts: transaction price series and, for three-strategy
games, the population-dynamics field on the simplex.

Everything here is a pure function from data to SVG 1.1 text with fixed
number formatting, so a given input always produces identical bytes.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Union

import numpy as np

from .egt import HeuristicGame, _MixtureEvaluator, Equilibrium
from .game import GameLog

__all__ = ["emit_svg_price_series", "emit_svg_simplex_field"]

_WIDTH = 640
_HEIGHT = 400
_MARGIN_L = 54
_MARGIN_R = 16
_MARGIN_T = 16
_MARGIN_B = 42


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _header(width: int, height: int) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    else:
        step = 10.0 * mag
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9:
        ticks.append(round(t, 10))
        t += step
    return ticks


def emit_svg_price_series(
    log: GameLog,
    p0: Union[float, Sequence[Optional[float]]],
) -> str:
    """Chart every transaction price against its index, one tick per
    trade, with the equilibrium price dashed and day changes as vertical
    rules.

    p0 may be one number for the whole run or a per-day sequence (None
    entries skip that day's dashed segment, useful for days whose
    schedule admits no equilibrium).
    """
    prices = [t.price for t in log.transactions]
    days = [t.day for t in log.transactions]
    n_days = log.config.days
    if isinstance(p0, (int, float)):
        p0_by_day: list[Optional[float]] = [float(p0)] * n_days
    else:
        p0_by_day = [None if v is None else float(v) for v in p0]
        if len(p0_by_day) != n_days:
            raise ValueError(
                f"p0 has {len(p0_by_day)} entries for {n_days} days"
            )
    ys = prices + [v for v in p0_by_day if v is not None]
    if ys:
        y_lo, y_hi = min(ys), max(ys)
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
        pad = 0.06 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad
    else:
        y_lo, y_hi = 0.0, 1.0
    n = len(prices)
    x_lo, x_hi = -0.5, max(n - 0.5, 0.5)
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = _header(_WIDTH, _HEIGHT)
    # frame and axes
    out.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black" stroke-width="1"/>'
    )
    for tick in _nice_ticks(y_lo, y_hi):
        y = sy(tick)
        out.append(
            f'<line x1="{_MARGIN_L - 4}" y1="{_fmt(y)}" x2="{_MARGIN_L}" y2="{_fmt(y)}" '
            f'stroke="black" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_MARGIN_L - 8}" y="{_fmt(y + 3.5)}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{tick:g}</text>'
        )
    if n:
        step = max(1, n // 10)
        for i in range(0, n, step):
            x = sx(i)
            out.append(
                f'<line x1="{_fmt(x)}" y1="{_HEIGHT - _MARGIN_B}" x2="{_fmt(x)}" '
                f'y2="{_HEIGHT - _MARGIN_B + 4}" stroke="black" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{_fmt(x)}" y="{_HEIGHT - _MARGIN_B + 16}" font-family="sans-serif" '
                f'font-size="11" text-anchor="middle">{i}</text>'
            )
    out.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.2f}" y="{_HEIGHT - 8}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle">transaction</text>'
    )
    out.append(
        f'<text x="14" y="{_MARGIN_T + plot_h / 2:.2f}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 14 {_MARGIN_T + plot_h / 2:.2f})">price</text>'
    )
    # day boundaries and per-day dashed equilibrium price
    day_first: dict[int, int] = {}
    day_last: dict[int, int] = {}
    for i, d in enumerate(days):
        day_first.setdefault(d, i)
        day_last[d] = i
    boundaries = sorted(day_first[d] for d in day_first if d > 0 and day_first[d] > 0)
    for b in boundaries:
        x = sx(b - 0.5)
        out.append(
            f'<line x1="{_fmt(x)}" y1="{_MARGIN_T}" x2="{_fmt(x)}" '
            f'y2="{_HEIGHT - _MARGIN_B}" stroke="#888888" stroke-width="1"/>'
        )
    for d in range(n_days):
        v = p0_by_day[d]
        if v is None:
            continue
        if d in day_first:
            x1, x2 = sx(day_first[d] - 0.5), sx(day_last[d] + 0.5)
        elif n == 0 and d == 0:
            x1, x2 = _MARGIN_L, _WIDTH - _MARGIN_R
        else:
            continue
        y = sy(v)
        out.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y)}" x2="{_fmt(x2)}" y2="{_fmt(y)}" '
            f'stroke="black" stroke-width="1" stroke-dasharray="6 4"/>'
        )
    # the price path
    if n > 1:
        points = " ".join(f"{_fmt(sx(i))},{_fmt(sy(p))}" for i, p in enumerate(prices))
        out.append(
            f'<polyline points="{points}" fill="none" stroke="#1f5fa8" stroke-width="1"/>'
        )
    for i, p in enumerate(prices):
        out.append(
            f'<circle cx="{_fmt(sx(i))}" cy="{_fmt(sy(p))}" r="2.5" fill="#1f5fa8"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg_simplex_field(
    game: HeuristicGame,
    equilibria: Sequence[Equilibrium] = (),
    grid: int = 13,
) -> str:
    """Population-dynamics arrows over the three-strategy simplex, with
    attractors marked (filled when verified as equilibria)."""
    if game.n_strategies != 3:
        raise ValueError(
            f"the simplex chart needs exactly 3 strategies, got {game.n_strategies}"
        )
    width, height = 480, 460
    top = (240.0, 40.0)
    left = (50.0, 369.0)
    right = (430.0, 369.0)
    corners = (top, left, right)

    def project(x: Sequence[float]) -> tuple[float, float]:
        px = sum(float(x[i]) * corners[i][0] for i in range(3))
        py = sum(float(x[i]) * corners[i][1] for i in range(3))
        return px, py

    evaluator = _MixtureEvaluator(game)
    scale = game.scale()
    points = []
    for i in range(1, grid):
        for j in range(1, grid - i):
            k = grid - i - j
            if k < 1:
                continue
            points.append(np.array([i / grid, j / grid, k / grid]))
    fields = []
    for x in points:
        u = evaluator.payoffs(x) / scale
        ubar = float(x @ u)
        fields.append(x * (u - ubar))
    max_mag = max((float(np.max(np.abs(f))) for f in fields), default=1.0) or 1.0
    cell = 330.0 / grid
    out = _header(width, height)
    out.append(
        '<defs><marker id="tip" viewBox="0 0 6 6" refX="5" refY="3" '
        'markerWidth="5" markerHeight="5" orient="auto">'
        '<path d="M 0 0 L 6 3 L 0 6 z" fill="#333333"/></marker></defs>'
    )
    out.append(
        f'<polygon points="{_fmt(top[0])},{_fmt(top[1])} {_fmt(left[0])},{_fmt(left[1])} '
        f'{_fmt(right[0])},{_fmt(right[1])}" fill="none" stroke="black" stroke-width="1.5"/>'
    )
    anchors = ("middle", "end", "start")
    offsets = ((0.0, -10.0), (-6.0, 14.0), (6.0, 14.0))
    for i, name in enumerate(game.strategy_names):
        cx, cy = corners[i]
        dx, dy = offsets[i]
        out.append(
            f'<text x="{_fmt(cx + dx)}" y="{_fmt(cy + dy)}" font-family="sans-serif" '
            f'font-size="13" text-anchor="{anchors[i]}">{_esc(name)}</text>'
        )
    for x, f in zip(points, fields):
        mag = float(np.max(np.abs(f)))
        if mag < 1e-15:
            continue
        px, py = project(x)
        dx = sum(float(f[i]) * corners[i][0] for i in range(3))
        dy = sum(float(f[i]) * corners[i][1] for i in range(3))
        norm = math.hypot(dx, dy)
        if norm < 1e-12:
            continue
        length = 0.85 * cell * (mag / max_mag)
        qx, qy = px + dx / norm * length, py + dy / norm * length
        out.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(py)}" x2="{_fmt(qx)}" y2="{_fmt(qy)}" '
            f'stroke="#333333" stroke-width="1" marker-end="url(#tip)"/>'
        )
    for eq in equilibria:
        px, py = project(eq.point)
        fill = "#c0392b" if eq.is_ne else "white"
        out.append(
            f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="5" fill="{fill}" '
            f'stroke="#c0392b" stroke-width="1.5"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
