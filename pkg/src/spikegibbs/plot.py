"""Minimal deterministic SVG line plots of activation curves."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .errors import ParameterError

WIDTH, HEIGHT = 640, 400
MARGIN = 50
COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def emit_svg(curves, title: str = "") -> str:
    """Render ``[(label, ActivationCurve), ...]`` as one polyline per curve.

    The y axis is fixed to [0, 1]; the x axis spans all curves' v values.
    """
    curves = list(curves)
    if not curves or any(len(c) == 0 for _, c in curves):
        raise ParameterError("cannot plot an empty curve")
    vmin = min(float(c.v.min()) for _, c in curves)
    vmax = max(float(c.v.max()) for _, c in curves)
    span = (vmax - vmin) or 1.0
    plot_w, plot_h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def x(v):
        return MARGIN + (float(v) - vmin) / span * plot_w

    def y(p):
        return HEIGHT - MARGIN - float(p) * plot_h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
           f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">v</text>',
           f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle">P</text>',
           f'<text x="{MARGIN - 6}" y="{HEIGHT - MARGIN + 4}" text-anchor="end">0</text>',
           f'<text x="{MARGIN - 6}" y="{MARGIN + 4}" text-anchor="end">1</text>',
           f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle">{vmin:g}</text>',
           f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 18}" '
           f'text-anchor="middle">{vmax:g}</text>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle">{escape(title)}</text>')
    for i, (label, curve) in enumerate(curves):
        colour = COLOURS[i % len(COLOURS)]
        points = " ".join(f"{x(v):.2f},{y(p):.2f}" for v, p in zip(curve.v, curve.p))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{points}"/>')
        ly = MARGIN + 16 * i
        out.append(f'<line x1="{WIDTH - MARGIN - 110}" y1="{ly}" x2="{WIDTH - MARGIN - 90}" '
                   f'y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 84}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
