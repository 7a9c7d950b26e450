"""Minimal deterministic SVG line plots of normalized joint-angle panels.

Hand-rolled on purpose: output must be byte-identical across runs, which
rules out plotting libraries that embed generated ids or timestamps. One
panel per joint, one polyline per (side, method), with a translucent
mean +/- SD band when the SD is available.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .gaitcycle import CycleEnsemble
from .kinematics import ANGLE_JOINTS
from .model import Side

PANEL_W, PANEL_H = 320, 220
MARGIN = 42
COLORS = {
    (Side.LEFT, 0): "#1f5fbf",
    (Side.RIGHT, 0): "#bf2f2f",
    (Side.LEFT, 1): "#59a14f",
    (Side.RIGHT, 1): "#e08214",
}


def _poly(points: list[tuple[float, float]]) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in points)


def _panel(
    joint: str,
    curves: list[tuple[str, Side, np.ndarray, np.ndarray]],
    ox: float,
    oy: float,
) -> list[str]:
    finite = [c[2][np.isfinite(c[2])] for c in curves]
    finite = [f for f in finite if len(f)]
    if not finite:
        return []
    lo = min(float(f.min()) for f in finite) - 5.0
    hi = max(float(f.max()) for f in finite) + 5.0
    span = max(hi - lo, 1e-6)

    def sx(pct: float) -> float:
        return ox + MARGIN + pct / 100.0 * (PANEL_W - 2 * MARGIN)

    def sy(val: float) -> float:
        return oy + PANEL_H - MARGIN - (val - lo) / span * (PANEL_H - 2 * MARGIN)

    parts = [
        f'<rect x="{ox + MARGIN}" y="{oy + MARGIN}" width="{PANEL_W - 2 * MARGIN}" '
        f'height="{PANEL_H - 2 * MARGIN}" fill="none" stroke="#888" stroke-width="1"/>',
        f'<text x="{ox + PANEL_W / 2:.1f}" y="{oy + MARGIN - 8:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{joint} angle (deg)</text>',
        f'<text x="{ox + PANEL_W / 2:.1f}" y="{oy + PANEL_H - 8:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="10">gait cycle (%)</text>',
    ]
    for tick in (lo + 5.0, hi - 5.0):
        parts.append(
            f'<text x="{ox + MARGIN - 4:.1f}" y="{sy(tick) + 3:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="9">{tick:.0f}</text>'
        )
    for m_idx, (method, side, mean, sd) in enumerate(curves):
        color = COLORS.get((side, m_idx % 2), "#555555")
        ok = np.isfinite(mean)
        pts = [(sx(k), sy(mean[k])) for k in range(len(mean)) if ok[k]]
        if len(pts) < 2:
            continue
        band_ok = ok & np.isfinite(sd)
        if band_ok.sum() >= 2:
            upper = [(sx(k), sy(mean[k] + sd[k])) for k in range(len(mean)) if band_ok[k]]
            lower = [(sx(k), sy(mean[k] - sd[k])) for k in range(len(mean)) if band_ok[k]]
            parts.append(
                f'<polygon points="{_poly(upper + lower[::-1])}" fill="{color}" '
                f'fill-opacity="0.12" stroke="none"/>'
            )
        parts.append(
            f'<polyline points="{_poly(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        label = f"{method} {side.value}"
        parts.append(
            f'<text x="{ox + MARGIN + 4:.1f}" y="{oy + MARGIN + 12 + 11 * m_idx:.1f}" '
            f'font-family="sans-serif" font-size="9" fill="{color}">{label}</text>'
        )
    return parts


def render_cycle_panels(
    per_method: Mapping[str, Mapping[Side, CycleEnsemble]], path: str | Path
) -> Path:
    """Write one SVG with a panel per joint showing every (method, side)
    ensemble curve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = PANEL_W * len(ANGLE_JOINTS)
    height = PANEL_H
    body: list[str] = []
    for j, joint in enumerate(ANGLE_JOINTS):
        curves = []
        for method in sorted(per_method):
            for side in (Side.LEFT, Side.RIGHT):
                ens = per_method[method].get(side)
                if ens is None:
                    continue
                curves.append((method, side, ens.mean[joint], ens.sd[joint]))
        body.extend(_panel(joint, curves, j * PANEL_W, 0))
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )
    path.write_text(svg)
    return path
