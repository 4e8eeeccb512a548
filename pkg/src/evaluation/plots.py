"""CED emitters: `threshold,fraction` CSV and a minimal SVG 1.1 polyline."""
import os

from ..core.errors import ConfigurationError
from ..models.evaluation import CedCurve

SVG_WIDTH = 480
SVG_HEIGHT = 360
_MARGIN = 40


def ced_csv(curve: CedCurve) -> str:
    lines = ["threshold,fraction"]
    lines.extend(f"{t!r},{f!r}" for t, f in zip(curve.thresholds.tolist(), curve.fractions.tolist()))
    return "\n".join(lines) + "\n"


def ced_svg(curve: CedCurve, width: int = SVG_WIDTH, height: int = SVG_HEIGHT, label: str = "") -> str:
    max_t = float(curve.thresholds[-1]) or 1.0
    plot_w, plot_h = width - 2 * _MARGIN, height - 2 * _MARGIN

    def xy(t: float, f: float):
        return _MARGIN + plot_w * t / max_t, height - _MARGIN - plot_h * f

    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in
                      (xy(t, f) for t, f in zip(curve.thresholds, curve.fractions)))
    x0, y0 = xy(0.0, 0.0)
    x1, y1 = xy(max_t, 1.0)
    title = label or f"CED (AUC {curve.auc:.4f}, failure {curve.failure_rate:.2%})"
    return "\n".join([
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        f'  <rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'  <line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>',
        f'  <line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="black"/>',
        f'  <text x="{x0:.2f}" y="{y0 + 16:.2f}" font-size="11">0</text>',
        f'  <text x="{x1 - 24:.2f}" y="{y0 + 16:.2f}" font-size="11">{max_t:g}</text>',
        f'  <text x="{x0 - 24:.2f}" y="{y1 + 4:.2f}" font-size="11">1.0</text>',
        f'  <text x="{x0:.2f}" y="{_MARGIN / 2:.2f}" font-size="12">{title}</text>',
        f'  <polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{points}"/>',
        '</svg>',
        ''
    ])


def write_ced(curve: CedCurve, path: str, fmt: str = None) -> str:
    """Write as csv or svg; the format defaults to the file extension"""
    fmt = (fmt or os.path.splitext(path)[1].lstrip('.')).lower()
    if fmt == 'csv':
        text = ced_csv(curve)
    elif fmt == 'svg':
        text = ced_svg(curve)
    else:
        raise ConfigurationError([f"unknown CED output format {fmt!r} (csv or svg)"])
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    return path
