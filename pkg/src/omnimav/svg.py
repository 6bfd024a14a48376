"""Minimal deterministic SVG time-series plots (no display dependencies)."""

from __future__ import annotations

from html import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
PANEL_W, PANEL_H = 640, 180
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 28, 30
MAX_POINTS = 1500


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _decimate(t, y):
    n = len(t)
    if n <= MAX_POINTS:
        return t, y
    idx = np.unique(np.linspace(0, n - 1, MAX_POINTS).astype(int))
    return t[idx], y[idx]


def _nice_range(lo: float, hi: float) -> tuple[float, float]:
    if not np.isfinite(lo) or not np.isfinite(hi):
        return -1.0, 1.0
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        pad = max(1e-9, 0.5 * abs(hi)) if hi != 0 else 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def timeseries_svg(t, panels, title: str = "", meta: dict | None = None) -> str:
    """Render stacked panels; ``panels`` is a list of (ylabel, [(label, y), ...])."""
    t = np.asarray(t, dtype=float)
    height = len(panels) * (PANEL_H + MARGIN_T + MARGIN_B) + 30
    width = PANEL_W + MARGIN_L + MARGIN_R
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">']
    if meta:
        desc = "; ".join(f"{k}={meta[k]}" for k in sorted(meta))
        out.append(f"<desc>{escape(desc)}</desc>")
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">'
               f'{escape(title)}</text>')
    t0, t1 = (float(t[0]), float(t[-1])) if len(t) else (0.0, 1.0)
    if t1 <= t0:
        t1 = t0 + 1.0
    for p, (ylabel, series) in enumerate(panels):
        top = 30 + p * (PANEL_H + MARGIN_T + MARGIN_B) + MARGIN_T
        vals = [np.asarray(y, dtype=float) for _, y in series]
        finite = np.concatenate([v[np.isfinite(v)] for v in vals]) if vals else np.zeros(0)
        lo, hi = _nice_range(*(float(finite.min()), float(finite.max())) if finite.size else (0, 1))

        def X(tv):
            return MARGIN_L + (tv - t0) / (t1 - t0) * PANEL_W

        def Y(v):
            return top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H

        out.append(f'<rect x="{MARGIN_L}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" '
                   f'fill="none" stroke="#888"/>')
        for frac in (0.0, 0.5, 1.0):
            v = lo + frac * (hi - lo)
            out.append(f'<text x="{MARGIN_L - 4}" y="{_fmt(Y(v) + 4)}" text-anchor="end">'
                       f'{v:.4g}</text>')
            tv = t0 + frac * (t1 - t0)
            out.append(f'<text x="{_fmt(X(tv))}" y="{top + PANEL_H + 14}" text-anchor="middle">'
                       f'{tv:.4g}</text>')
        out.append(f'<text x="14" y="{top + PANEL_H / 2}" transform="rotate(-90 14 '
                   f'{top + PANEL_H / 2})" text-anchor="middle">{escape(ylabel)}</text>')
        for k, ((label, _), y) in enumerate(zip(series, vals)):
            color = PALETTE[k % len(PALETTE)]
            tt, yy = _decimate(t, y)
            ok = np.isfinite(yy)
            pts = " ".join(f"{_fmt(X(a))},{_fmt(Y(b))}" for a, b in zip(tt[ok], yy[ok]))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
            out.append(f'<text x="{MARGIN_L + 8 + 110 * k}" y="{top - 6}" fill="{color}">'
                       f'{escape(label)}</text>')
    out.append(f'<text x="{MARGIN_L + PANEL_W / 2}" y="{height - 4}" text-anchor="middle">'
               f'time (s)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
