"""Minimal self-contained SVG writer for log-log convergence plots.

No plotting dependency: the experiment runner emits one SVG per figure
with decade ticks, one polyline per series, and an optional reference
slope triangle.
"""

import math

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 160, 40, 55
_WIDTH, _HEIGHT = 640, 440


def _decades(lo, hi):
    start = math.floor(math.log10(lo))
    stop = math.ceil(math.log10(hi))
    return [10.0**k for k in range(start, stop + 1)]


class _LogAxis:
    def __init__(self, values, pix_lo, pix_hi, flip=False):
        lo, hi = min(values), max(values)
        if lo <= 0:
            raise ValueError("log axis needs positive data")
        if lo == hi:
            lo, hi = lo / 2.0, hi * 2.0
        pad = 0.05 * (math.log10(hi) - math.log10(lo) or 1.0)
        self.lo = math.log10(lo) - pad
        self.hi = math.log10(hi) + pad
        self.pix_lo, self.pix_hi = pix_lo, pix_hi
        self.flip = flip

    def __call__(self, v):
        frac = (math.log10(v) - self.lo) / (self.hi - self.lo)
        if self.flip:
            frac = 1.0 - frac
        return self.pix_lo + frac * (self.pix_hi - self.pix_lo)

    def ticks(self):
        return [t for t in _decades(10.0**self.lo, 10.0**self.hi)
                if self.lo <= math.log10(t) <= self.hi]


def _fmt_pow10(v):
    k = round(math.log10(v))
    return f"1e{k}" if abs(10.0**k - v) <= 1e-9 * v else f"{v:g}"


def log_log_plot(series, xlabel, ylabel, title="", ref_slope=None):
    """Render series = [(label, xs, ys), ...] as a log-log SVG string.

    ref_slope, when given, draws a reference triangle with that slope
    anchored to the first series.
    """
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if y > 0]
    if not xs_all or not ys_all:
        raise ValueError("nothing to plot")
    ax = _LogAxis(xs_all, _MARGIN_L, _WIDTH - _MARGIN_R)
    ay = _LogAxis(ys_all, _HEIGHT - _MARGIN_B, _MARGIN_T)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH/2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    # frame
    x0, x1 = _MARGIN_L, _WIDTH - _MARGIN_R
    y0, y1 = _HEIGHT - _MARGIN_B, _MARGIN_T
    parts.append(
        f'<rect x="{x0}" y="{y1}" width="{x1-x0}" height="{y0-y1}" '
        f'fill="none" stroke="black"/>'
    )
    for t in ax.ticks():
        px = ax(t)
        parts.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y1}" '
                     f'stroke="#dddddd"/>')
        parts.append(f'<text x="{px:.1f}" y="{y0+16}" text-anchor="middle">'
                     f"{_fmt_pow10(t)}</text>")
    for t in ay.ticks():
        py = ay(t)
        parts.append(f'<line x1="{x0}" y1="{py:.1f}" x2="{x1}" y2="{py:.1f}" '
                     f'stroke="#dddddd"/>')
        parts.append(f'<text x="{x0-6}" y="{py+4:.1f}" text-anchor="end">'
                     f"{_fmt_pow10(t)}</text>")
    parts.append(f'<text x="{(x0+x1)/2:.1f}" y="{_HEIGHT-12}" text-anchor="middle">'
                 f"{xlabel}</text>")
    parts.append(f'<text x="18" y="{(y0+y1)/2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 18 {(y0+y1)/2:.1f})">{ylabel}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{ax(x):.2f},{ay(y):.2f}" for x, y in zip(xs, ys) if y > 0)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            if y > 0:
                parts.append(f'<circle cx="{ax(x):.2f}" cy="{ay(y):.2f}" r="3" '
                             f'fill="{color}"/>')
        ly = _MARGIN_T + 16 * (i + 1)
        parts.append(f'<line x1="{x1+10}" y1="{ly-4}" x2="{x1+30}" y2="{ly-4}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{x1+35}" y="{ly}">{label}</text>')

    if ref_slope is not None:
        _, xs, ys = series[0]
        pos = [(x, y) for x, y in zip(xs, ys) if y > 0]
        if len(pos) >= 2:
            (xa, ya), (xb, _) = pos[-2], pos[-1]
            yb = ya * (xb / xa) ** ref_slope
            shift = 0.5  # drop below the data in log units
            pa = (ax(xa), ay(ya * 10**-shift))
            pb = (ax(xb), ay(yb * 10**-shift))
            corner = (pb[0], pa[1])
            parts.append(
                f'<polygon points="{pa[0]:.1f},{pa[1]:.1f} {pb[0]:.1f},{pb[1]:.1f} '
                f'{corner[0]:.1f},{corner[1]:.1f}" fill="none" stroke="#555555"/>'
            )
            parts.append(
                f'<text x="{(pa[0]+pb[0])/2:.1f}" y="{pa[1]+14:.1f}" '
                f'text-anchor="middle" fill="#555555">slope {ref_slope:g}</text>'
            )

    parts.append("</svg>")
    return "\n".join(parts)
