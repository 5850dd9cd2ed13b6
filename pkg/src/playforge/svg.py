"""Deterministic SVG plots of generated plays.

Drawing conventions: offense faces right; circles mark starting positions,
diamonds mark endpoints, and trajectory strokes taper from thick at the
start to thin at the end to show direction of movement.  Position-group
colors: QB red, RB/FB teal, WR blue, TE orange, line gray.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import Role

GROUP_COLORS = {
    "qb": "#d62728",
    "back": "#2ca089",
    "wr": "#1f77b4",
    "te": "#ff7f0e",
    "line": "#8a8a8a",
}

_ROLE_GROUP = {
    Role.QB: "qb",
    Role.RB: "back",
    Role.FB: "back",
    Role.WR: "wr",
    Role.TE: "te",
    Role.C: "line",
    Role.G: "line",
    Role.T: "line",
}

_PX_PER_YARD = 10.0
_HALF_X, _HALF_Y = 60.0, 26.65


def role_color(role: int) -> str:
    return GROUP_COLORS[_ROLE_GROUP[Role(int(role))]]


def _to_px(xy: np.ndarray) -> tuple[float, float]:
    return (
        round((float(xy[0]) + _HALF_X) * _PX_PER_YARD, 2),
        round((_HALF_Y - float(xy[1])) * _PX_PER_YARD, 2),
    )


def render_play_svg(
    trajectories: Sequence[np.ndarray],
    roles: Sequence[int],
    max_width: float = 4.5,
    min_width: float = 0.8,
) -> str:
    """Render trajectories (each (T, N, 2), anchor-relative yards) to SVG."""
    width = int(2 * _HALF_X * _PX_PER_YARD)
    height = int(2 * _HALF_Y * _PX_PER_YARD)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#2e7d32"/>',
    ]
    for x_yd in range(-50, 60, 10):
        px = (x_yd + _HALF_X) * _PX_PER_YARD
        parts.append(
            f'<line x1="{px:.1f}" y1="0" x2="{px:.1f}" y2="{height}" '
            f'stroke="#ffffff" stroke-opacity="0.35" stroke-width="1"/>'
        )
    origin = _to_px(np.zeros(2))
    parts.append(
        f'<circle cx="{origin[0]}" cy="{origin[1]}" r="4" fill="none" '
        f'stroke="#ffd54f" stroke-width="1.5"/>'
    )

    for traj in trajectories:
        traj = np.asarray(traj, dtype=np.float64)
        frames, agents = traj.shape[0], traj.shape[1]
        for agent in range(agents):
            color = role_color(roles[agent])
            for t in range(frames - 1):
                frac = t / max(frames - 2, 1)
                stroke = max_width + (min_width - max_width) * frac
                x1, y1 = _to_px(traj[t, agent])
                x2, y2 = _to_px(traj[t + 1, agent])
                parts.append(
                    f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                    f'stroke="{color}" stroke-width="{stroke:.2f}" '
                    f'stroke-linecap="round" stroke-opacity="0.9"/>'
                )
            sx, sy = _to_px(traj[0, agent])
            parts.append(f'<circle cx="{sx}" cy="{sy}" r="5" fill="{color}" stroke="#ffffff" stroke-width="1"/>')
            ex, ey = _to_px(traj[-1, agent])
            parts.append(
                f'<path d="M {ex} {round(ey - 6, 2)} L {round(ex + 6, 2)} {ey} '
                f'L {ex} {round(ey + 6, 2)} L {round(ex - 6, 2)} {ey} Z" '
                f'fill="{color}" stroke="#ffffff" stroke-width="1"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)
