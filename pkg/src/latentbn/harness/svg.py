"""Minimal deterministic SVG line/point plots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from html import escape

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=70, right=20, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    points: list = field(default_factory=list)  # (label, xs, ys, errs)
    lines: list = field(default_factory=list)  # (label, xs, ys, dashed)
    bands: list = field(default_factory=list)  # (label, xs, lower, upper)

    def _extent(self):
        xs, ys = [], []
        for _, px, py, pe in self.points:
            xs += list(px)
            ys += [y - e for y, e in zip(py, pe)] + [y + e for y, e in zip(py, pe)]
        for _, lx, ly, _ in self.lines:
            xs += list(lx)
            ys += list(ly)
        for _, bx, lo, hi in self.bands:
            xs += list(bx)
            ys += list(lo) + list(hi)
        xs = [v for v in xs if math.isfinite(v)] or [0.0, 1.0]
        ys = [v for v in ys if math.isfinite(v)] or [0.0, 1.0]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        pad_x = 0.05 * (x1 - x0 or 1.0)
        pad_y = 0.08 * (y1 - y0 or 1.0)
        return x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y

    def render(self) -> str:
        x0, x1, y0, y1 = self._extent()
        pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

        def sx(x):
            return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

        def sy(y):
            return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
        ]
        left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
        out.append(f'<rect x="{left}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        for t in _nice_ticks(x0, x1):
            out.append(f'<line x1="{_num(sx(t))}" y1="{bottom}" x2="{_num(sx(t))}" y2="{bottom + 5}" stroke="black"/>')
            out.append(f'<text x="{_num(sx(t))}" y="{bottom + 18}" text-anchor="middle">{t:g}</text>')
        for t in _nice_ticks(y0, y1):
            out.append(f'<line x1="{left - 5}" y1="{_num(sy(t))}" x2="{left}" y2="{_num(sy(t))}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{_num(sy(t) + 4)}" text-anchor="end">{t:g}</text>')
        out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(
            f'<text x="18" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
            f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2})">{escape(self.ylabel)}</text>'
        )

        legend = []
        for i, (label, bx, lo, hi) in enumerate(self.bands):
            pts = [f"{_num(sx(x))},{_num(sy(y))}" for x, y in zip(bx, hi)]
            pts += [f"{_num(sx(x))},{_num(sy(y))}" for x, y in reversed(list(zip(bx, lo)))]
            out.append(f'<polygon points="{" ".join(pts)}" fill="#999999" fill-opacity="0.25" stroke="none"/>')
            legend.append((label, "#999999", "band"))
        for i, (label, lx, ly, dashed) in enumerate(self.lines):
            color = PALETTE[(i + 1) % len(PALETTE)]
            pts = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in zip(lx, ly))
            dash = ' stroke-dasharray="6 4"' if dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            legend.append((label, color, "line"))
        for i, (label, px, py, pe) in enumerate(self.points):
            color = PALETTE[i % len(PALETTE)]
            for x, y, e in zip(px, py, pe):
                if e > 0:
                    out.append(
                        f'<line x1="{_num(sx(x))}" y1="{_num(sy(y - e))}" x2="{_num(sx(x))}" '
                        f'y2="{_num(sy(y + e))}" stroke="{color}"/>'
                    )
                out.append(f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="3" fill="{color}"/>')
            legend.append((label, color, "point"))
        for j, (label, color, style) in enumerate(legend):
            ly = MARGIN["top"] + 15 + 16 * j
            lx = left + 10
            if style == "point":
                out.append(f'<circle cx="{lx + 8}" cy="{ly - 4}" r="3" fill="{color}"/>')
            elif style == "band":
                out.append(f'<rect x="{lx}" y="{ly - 9}" width="16" height="10" fill="{color}" fill-opacity="0.25"/>')
            else:
                out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 16}" y2="{ly - 4}" stroke="{color}"/>')
            out.append(f'<text x="{lx + 22}" y="{ly}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
