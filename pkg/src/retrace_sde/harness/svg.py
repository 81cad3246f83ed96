"""Minimal SVG line charts for the noise sweep."""
from __future__ import annotations

from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _panel(series: dict, title: str, x0: float, w: float, h: float, pad: float = 40.0) -> list[str]:
    xs = sorted({x for pts in series.values() for x, _ in pts})
    ys = [y for pts in series.values() for _, y in pts]
    if not xs or not ys:
        return []
    xmin, xmax = xs[0], xs[-1]
    ymin, ymax = min(ys + [0.0]), max(ys)
    if xmax == xmin:
        xmax = xmin + 1.0
    if ymax == ymin:
        ymax = ymin + 1.0

    def px(x):
        return x0 + pad + (x - xmin) / (xmax - xmin) * (w - 2 * pad)

    def py(y):
        return h - pad - (y - ymin) / (ymax - ymin) * (h - 2 * pad)

    out = [f'<g class="panel" data-title="{escape(title)}">',
           f'<text x="{x0 + w / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{px(xmin):.1f}" y1="{py(ymin):.1f}" x2="{px(xmax):.1f}" y2="{py(ymin):.1f}" stroke="black"/>',
           f'<line x1="{px(xmin):.1f}" y1="{py(ymin):.1f}" x2="{px(xmin):.1f}" y2="{py(ymax):.1f}" stroke="black"/>',
           f'<text x="{px(xmin) - 4:.1f}" y="{py(ymax) + 4:.1f}" text-anchor="end" font-size="10">{ymax:.3g}</text>',
           f'<text x="{px(xmin) - 4:.1f}" y="{py(ymin) + 4:.1f}" text-anchor="end" font-size="10">{ymin:.3g}</text>']
    for x in xs:
        out.append(f'<text x="{px(x):.1f}" y="{h - pad + 14:.1f}" text-anchor="middle" font-size="10">{x:g}</text>')
    for i, (name, pts) in enumerate(sorted(series.items())):
        pts = sorted(pts)
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        data = " ".join(f"{x:g}:{y:.6g}" for x, y in pts)
        out.append(f'<polyline data-method="{escape(name)}" data-points="{data}" points="{coords}" '
                   f'fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x0 + w - pad:.1f}" y="{pad + 14 * i:.1f}" text-anchor="end" font-size="10" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</g>")
    return out


def noise_sweep_svg(accuracy: dict, mae_a: dict, width: int = 900, height: int = 360) -> str:
    """Two panels: accuracy and MAE of ``A`` against the noise level.

    Each argument maps a method name to a list of ``(sigma, value)`` points.
    """
    half = width / 2
    body = _panel(accuracy, "ordering accuracy vs noise sd", 0.0, half, height)
    body += _panel(mae_a, "MAE(A) vs noise sd", half, half, height)
    return "\n".join([f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
                      '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"
