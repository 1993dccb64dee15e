"""Static HTML rendering of the cluster inspection report.

Output depends only on the report contents, so the same report always
renders to the same bytes.
"""

from __future__ import annotations

import html
import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT, PAD = 360, 120, 6


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.3f}"


def svg_plot(plot: dict) -> str:
    series = plot["series"]
    values = [v for vs in series.values() for v in vs]
    n = max((len(vs) for vs in series.values()), default=0)
    if not values or n < 2:
        return "<svg></svg>"
    lo, hi = min(values), max(values)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5

    def xy(i, v):
        x = PAD + (WIDTH - 2 * PAD) * i / (n - 1)
        y = HEIGHT - PAD - (HEIGHT - 2 * PAD) * (v - lo) / (hi - lo)
        return f"{x:.1f},{y:.1f}"

    s0 = plot["start"] - plot["offset"]
    s1 = plot["end"] - plot["offset"]
    x0 = PAD + (WIDTH - 2 * PAD) * s0 / (n - 1)
    x1 = PAD + (WIDTH - 2 * PAD) * max(s1 - 1, s0) / (n - 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="{x0:.1f}" y="0" width="{max(x1 - x0, 1.0):.1f}" height="{HEIGHT}" fill="#eee"/>',
    ]
    for j, (name, vs) in enumerate(series.items()):
        pts = " ".join(xy(i, v) for i, v in enumerate(vs))
        color = PALETTE[j % len(PALETTE)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}">'
                     f"<title>{html.escape(name)}</title></polyline>")
    parts.append("</svg>")
    return "".join(parts)


def render_inspection_html(report) -> str:
    out = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>Cluster inspection</title>',
        "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
        "td,th{border:1px solid #ccc;padding:2px 6px}.null{color:#888}</style></head><body>",
        "<h1>Cluster inspection</h1>",
    ]
    for region, rr in report.regions.items():
        out.append(f"<h2>{html.escape(region.value)}</h2>")
        legend = ", ".join(f'<span style="color:{PALETTE[j % len(PALETTE)]}">{html.escape(c)}</span>'
                           for j, c in enumerate(rr.channels))
        out.append(f"<p>Channels: {legend}. Null cluster: {rr.null_cluster}</p>")
        for note in rr.model_notes:
            out.append(f"<p><em>{html.escape(note)}</em></p>")
        for c in rr.clusters:
            cls = ' class="null"' if c.is_null else ""
            out.append(f"<h3{cls}>Cluster {c.cluster}{' (null)' if c.is_null else ''}: "
                       f"{c.member_frames} frames</h3>")
            out.append("<table><tr>" + "".join(f"<th>{html.escape(k)}</th>" for k in c.channel_means) + "</tr><tr>"
                       + "".join(f"<td>{_fmt(v)}</td>" for v in c.channel_means.values()) + "</tr></table>")
            for p in c.plots:
                out.append(f"<div><p>{html.escape(p['clip'])} frames {p['start']}-{p['end']}</p>{svg_plot(p)}</div>")
    out.append("</body></html>")
    return "\n".join(out) + "\n"


def svg_line_chart(xs, ys, xlabel: str, ylabel: str, width: int = 420, height: int = 260) -> str:
    """Single-series line chart with labelled axes and point markers."""
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    left, right, top, bottom = 56, 16, 16, 44
    if not xs:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"></svg>\n'
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys + [1.0])
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(x):
        return left + (width - left - right) * (x - x0) / (x1 - x0)

    def py(y):
        return height - bottom - (height - top - bottom) * (y - y0) / (y1 - y0)

    pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="#000"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="#000"/>',
        f'<polyline fill="none" stroke="{PALETTE[0]}" stroke-width="1.5" points="{pts}"/>',
    ]
    for x, y in zip(xs, ys):
        out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.5" fill="{PALETTE[0]}"/>')
        out.append(f'<text x="{px(x):.1f}" y="{height - bottom + 14}" text-anchor="middle">{x:g}</text>')
    for y in (y0, (y0 + y1) / 2, y1):
        out.append(f'<text x="{left - 4}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.2f}</text>')
    out.append(f'<text x="{(left + width - right) / 2:.1f}" y="{height - 8}" text-anchor="middle">{html.escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{(top + height - bottom) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(top + height - bottom) / 2:.1f})">{html.escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
