"""Small dependency-free SVG charts; output is byte-stable for equal inputs."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]


def _f(v):
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlim, ylim):
        self.parts = []
        self.xlim, self.ylim = xlim, ylim
        x0, x1 = xlim
        y0, y1 = ylim
        self.sx = (W - LEFT - RIGHT) / ((x1 - x0) or 1.0)
        self.sy = (H - TOP - BOTTOM) / ((y1 - y0) or 1.0)
        self.parts.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
                          f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">')
        self.parts.append(f'<rect width="{W}" height="{H}" fill="white"/>')
        self.parts.append(f'<text x="{W / 2 - RIGHT / 2:.1f}" y="18" text-anchor="middle" font-size="14">'
                          f'{escape(title)}</text>')
        px0, py0 = self.px(x0), self.py(y0)
        self.parts.append(f'<line x1="{_f(px0)}" y1="{_f(py0)}" x2="{_f(self.px(x1))}" y2="{_f(py0)}" stroke="black"/>')
        self.parts.append(f'<line x1="{_f(px0)}" y1="{_f(py0)}" x2="{_f(px0)}" y2="{_f(self.py(y1))}" stroke="black"/>')
        for k in range(6):
            xv = x0 + (x1 - x0) * k / 5
            yv = y0 + (y1 - y0) * k / 5
            self.parts.append(f'<text x="{_f(self.px(xv))}" y="{_f(py0 + 16)}" text-anchor="middle">{xv:.3g}</text>')
            self.parts.append(f'<text x="{_f(px0 - 6)}" y="{_f(self.py(yv) + 4)}" text-anchor="end">{yv:.3g}</text>')
        self.parts.append(f'<text x="{(LEFT + W - RIGHT) / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
        self.parts.append(f'<text x="16" y="{(TOP + H - BOTTOM) / 2:.1f}" text-anchor="middle" '
                          f'transform="rotate(-90 16 {(TOP + H - BOTTOM) / 2:.1f})">{escape(ylabel)}</text>')
        self.n_legend = 0

    def px(self, x):
        return LEFT + (x - self.xlim[0]) * self.sx

    def py(self, y):
        return H - BOTTOM - (y - self.ylim[0]) * self.sy

    def legend(self, label, color):
        y = TOP + 10 + 18 * self.n_legend
        x = W - RIGHT + 12
        self.parts.append(f'<rect x="{x}" y="{y - 9}" width="12" height="10" fill="{color}"/>')
        self.parts.append(f'<text x="{x + 18}" y="{y}">{escape(label)}</text>')
        self.n_legend += 1

    def svg(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def histogram_svg(series, title="Collision-rate density (colliding trajectories)"):
    """``series`` is a list of ``(label, Histogram)``; empty histograms are noted in the legend."""
    full = [(l, h) for l, h in series if not h.empty]
    if full:
        x0 = min(float(h.edges[0]) for _, h in full)
        x1 = max(float(h.edges[-1]) for _, h in full)
        y1 = max(float(h.density.max()) for _, h in full)
    else:
        x0, x1, y1 = 0.0, 1.0, 1.0
    if x1 <= x0:
        x1 = x0 + 1.0
    c = _Canvas(title, "collisions per metre", "density", (x0, x1), (0.0, y1 * 1.05 or 1.0))
    for k, (label, h) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        if h.empty:
            c.legend(f"{label} (no collisions)", color)
            continue
        c.legend(label, color)
        for a, b, d in zip(h.edges[:-1], h.edges[1:], h.density):
            if d <= 0:
                continue
            x, w = c.px(float(a)), (float(b) - float(a)) * c.sx
            c.parts.append(f'<rect x="{_f(x)}" y="{_f(c.py(float(d)))}" width="{_f(w)}" '
                           f'height="{_f(float(d) * c.sy)}" fill="{color}" fill-opacity="0.45" stroke="{color}"/>')
    return c.svg()


def noise_svg(results, relative, title="Relative success-to-goal under steering noise"):
    """Lines of relative success versus alpha, one per evaluation batch."""
    alphas = sorted(results)
    n_batches = len(results[alphas[0]]) if alphas else 0
    vals = [v for a in alphas for v in relative[a] if v is not None and math.isfinite(v)]
    y1 = max(vals + [1.0]) * 1.05
    x1 = max(alphas) if alphas and max(alphas) > 0 else 1.0
    c = _Canvas(title, "alpha", "success / success at lowest alpha", (0.0, x1), (0.0, y1))
    for k in range(n_batches):
        color = COLORS[k % len(COLORS)]
        row = results[alphas[0]][k]
        c.legend(f"{row.n_vehicles} veh / {row.n_obstacles} obs", color)
        pts = [(a, relative[a][k]) for a in alphas if math.isfinite(relative[a][k])]
        if pts:
            path = " ".join(f"{_f(c.px(a))},{_f(c.py(v))}" for a, v in pts)
            c.parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
            for a, v in pts:
                c.parts.append(f'<circle cx="{_f(c.px(a))}" cy="{_f(c.py(v))}" r="3" fill="{color}"/>')
    return c.svg()
