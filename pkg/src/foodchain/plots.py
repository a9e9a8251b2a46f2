"""Minimal dependency-free SVG line overlays (truth versus predictions)."""

from __future__ import annotations

import numpy as np

PALETTE = ("#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def overlay_svg(series: dict, title: str = "", width: int = 900, height: int = 320, x=None) -> str:
    """Polylines for each named 1-D series on shared axes; the first is drawn black."""
    arrays = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    n = max(len(v) for v in arrays.values())
    xs = np.arange(n, dtype=float) if x is None else np.asarray(x, dtype=float)
    finite = np.concatenate([v[np.isfinite(v)] for v in arrays.values()])
    lo, hi = (float(finite.min()), float(finite.max())) if len(finite) else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    pad, top = 40, 30
    x0, x1 = float(xs.min()), float(xs.max()) if len(xs) > 1 else float(xs.min()) + 1.0

    def px(a):
        return pad + (a - x0) / (x1 - x0 or 1.0) * (width - 2 * pad)

    def py(b):
        return height - pad - (b - lo) / (hi - lo) * (height - pad - top)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{pad}" y="20" font-family="sans-serif" font-size="13">{title}</text>',
           f'<text x="4" y="{top + 10}" font-family="sans-serif" font-size="10">{hi:.4g}</text>',
           f'<text x="4" y="{height - pad}" font-family="sans-serif" font-size="10">{lo:.4g}</text>']
    for k, (name, v) in enumerate(arrays.items()):
        colour = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, v) if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1" points="{pts}"/>')
        out.append(f'<text x="{width - 180}" y="{top + 14 * k}" font-family="sans-serif" font-size="11" '
                   f'fill="{colour}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
