"""Dependency-free SVG scatter of (NDCG, ECE) points with the Pareto front."""

from __future__ import annotations

from html import escape
from typing import Sequence

from .pipeline import SweepPoint

WIDTH, HEIGHT, PAD = 480, 360, 50


def _scale(v, lo, hi, a, b):
    return a + (b - a) * (0.5 if hi == lo else (v - lo) / (hi - lo))


def tradeoff_svg(points: Sequence[SweepPoint], cutoff: int = 10) -> str:
    """NDCG on x, ECE on y (lower is better); Pareto points joined by a polyline."""
    if not points:
        raise ValueError("no points to plot")
    xs = [p.ndcg for p in points]
    ys = [p.ece for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    mx = 0.05 * (x1 - x0 or 1.0)
    my = 0.05 * (y1 - y0 or 1.0)
    x0, x1, y0, y1 = x0 - mx, x1 + mx, y0 - my, y1 + my

    def px(p):
        return (_scale(p.ndcg, x0, x1, PAD, WIDTH - PAD), _scale(p.ece, y0, y1, HEIGHT - PAD, PAD))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">NDCG@{cutoff}</text>',
        f'<text x="14" y="{HEIGHT / 2}" transform="rotate(-90 14 {HEIGHT / 2})" text-anchor="middle">ECE</text>',
        f'<text x="{PAD}" y="{HEIGHT - PAD + 14}">{x0:.4f}</text>',
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 14}" text-anchor="end">{x1:.4f}</text>',
        f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" text-anchor="end">{y0:.3f}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end">{y1:.3f}</text>',
    ]
    front = sorted((p for p in points if p.pareto), key=lambda p: p.ndcg)
    if len(front) > 1:
        coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in map(px, front))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    for p in points:
        x, y = px(p)
        if p.w is not None:
            fill = "steelblue" if p.pareto else "lightsteelblue"
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{fill}"><title>w={p.w:g}</title></circle>')
        else:
            parts.append(f'<rect x="{x - 4:.1f}" y="{y - 4:.1f}" width="8" height="8" fill="firebrick"/>')
            parts.append(f'<text x="{x + 6:.1f}" y="{y - 6:.1f}">{escape(p.label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
