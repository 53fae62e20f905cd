"""Minimal, dependency-free SVG charts. Output is a deterministic string."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
           "#17becf")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
        f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="18" y="{TOP + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + ph / 2})">{escape(ylabel)}</text>',
    ]
    for tick in range(0, 101, 20):
        y = TOP + ph * (1 - tick / 100)
        out.append(f'<line x1="{LEFT - 4}" y1="{_fmt(y)}" x2="{LEFT}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_fmt(y + 4)}" text-anchor="end">{tick}</text>')
    return out


def scatter(points: list[tuple[str, float, float]], title: str, xlabel: str, ylabel: str) -> str:
    """Labelled points on fixed 0..100 axes."""
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = _frame(title, xlabel, ylabel)
    for tick in range(0, 101, 20):
        x = LEFT + pw * tick / 100
        out.append(f'<line x1="{_fmt(x)}" y1="{TOP + ph}" x2="{_fmt(x)}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{TOP + ph + 18}" text-anchor="middle">{tick}</text>')
    for k, (name, x, y) in enumerate(points):
        color = PALETTE[k % len(PALETTE)]
        cx, cy = LEFT + pw * x / 100, TOP + ph * (1 - y / 100)
        out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="5" fill="{color}"/>')
        ly = TOP + 10 + 16 * k
        out.append(f'<circle cx="{WIDTH - RIGHT + 20}" cy="{ly}" r="5" fill="{color}"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 30}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def grouped_bars(categories: list[str], series: dict[str, list[float]], title: str, xlabel: str,
                 ylabel: str) -> str:
    """One group of bars per category, one bar per series, 0..100 axis."""
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = _frame(title, xlabel, ylabel)
    n_cat, n_ser = max(len(categories), 1), max(len(series), 1)
    group_w = pw / n_cat
    bar_w = group_w * 0.8 / n_ser
    for c, cat in enumerate(categories):
        gx = LEFT + group_w * c
        out.append(f'<text x="{_fmt(gx + group_w / 2)}" y="{TOP + ph + 18}" text-anchor="middle">'
                   f'{escape(cat)}</text>')
    for s, (name, values) in enumerate(series.items()):
        color = PALETTE[s % len(PALETTE)]
        for c, v in enumerate(values):
            h = ph * max(0.0, min(v, 100.0)) / 100
            x = LEFT + group_w * c + group_w * 0.1 + bar_w * s
            out.append(f'<rect x="{_fmt(x)}" y="{_fmt(TOP + ph - h)}" width="{_fmt(bar_w)}" '
                       f'height="{_fmt(h)}" fill="{color}"/>')
        ly = TOP + 10 + 16 * s
        out.append(f'<rect x="{WIDTH - RIGHT + 15}" y="{ly - 5}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 30}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
