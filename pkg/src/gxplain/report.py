"""Dependency-free SVG bar charts and plain-text summary tables."""

from __future__ import annotations

import math
from pathlib import Path

from .container import atomic_write_bytes

_W, _H = 640, 360
_MARGIN_L, _MARGIN_B, _MARGIN_T = 70, 60, 30
_COLORS = ["#4878b0", "#ee8544", "#6aa56a", "#c44e52", "#8172b2", "#937860", "#da8bc3", "#8c8c8c"]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def bar_chart_svg(
    labels: list[str],
    values: list[float],
    errors: list[float] | None = None,
    title: str = "",
    ylabel: str = "",
    log_scale: bool = False,
) -> str:
    """Grouped single-series bar chart as a standalone SVG document.

    ``log_scale`` plots log10 of the values (all values must be positive);
    error bars, when given, draw as whiskers around each bar top.
    """
    if len(labels) != len(values):
        raise ValueError("labels and values must align")
    n = len(values)
    plot_w = _W - _MARGIN_L - 20
    plot_h = _H - _MARGIN_T - _MARGIN_B

    if log_scale:
        if any(v <= 0 for v in values):
            raise ValueError("log-scale chart needs positive values")
        disp = [math.log10(v) for v in values]
    else:
        disp = list(values)
    lo = min(0.0, min(disp)) if disp else 0.0
    hi = max(disp) if disp else 1.0
    if errors and not log_scale:
        hi = max(hi, max(v + e for v, e in zip(disp, errors)))
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo

    def y_of(v: float) -> float:
        return _MARGIN_T + plot_h * (1.0 - (v - lo) / span)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" y2="{_MARGIN_T + plot_h}" stroke="black"/>',
        f'<line x1="{_MARGIN_L}" y1="{y_of(lo)}" x2="{_MARGIN_L + plot_w}" y2="{y_of(lo)}" stroke="black"/>',
        f'<text x="16" y="{_MARGIN_T + plot_h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MARGIN_T + plot_h / 2})">{_esc(ylabel)}</text>',
    ]
    # y axis ticks
    for t in range(5):
        v = lo + span * t / 4
        y = y_of(v)
        label = f"1e{v:.1f}" if log_scale else f"{v:.2f}"
        parts.append(f'<line x1="{_MARGIN_L - 4}" y1="{y}" x2="{_MARGIN_L}" y2="{y}" stroke="black"/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{y + 4}" text-anchor="end">{label}</text>')

    if n:
        slot = plot_w / n
        bar_w = slot * 0.6
        for i, (name, v) in enumerate(zip(labels, disp)):
            x = _MARGIN_L + slot * i + (slot - bar_w) / 2
            y = y_of(max(v, lo))
            base = y_of(lo)
            top = min(y, base)
            height = abs(base - y)
            color = _COLORS[i % len(_COLORS)]
            parts.append(f'<rect x="{x:.2f}" y="{top:.2f}" width="{bar_w:.2f}" '
                         f'height="{height:.2f}" fill="{color}"/>')
            if errors and not log_scale:
                cx = x + bar_w / 2
                e = errors[i]
                y_hi, y_lo = y_of(v + e), y_of(max(v - e, lo))
                parts.append(f'<line x1="{cx:.2f}" y1="{y_hi:.2f}" x2="{cx:.2f}" y2="{y_lo:.2f}" stroke="black"/>')
                parts.append(f'<line x1="{cx - 4:.2f}" y1="{y_hi:.2f}" x2="{cx + 4:.2f}" y2="{y_hi:.2f}" stroke="black"/>')
                parts.append(f'<line x1="{cx - 4:.2f}" y1="{y_lo:.2f}" x2="{cx + 4:.2f}" y2="{y_lo:.2f}" stroke="black"/>')
            parts.append(f'<text x="{x + bar_w / 2:.2f}" y="{_MARGIN_T + plot_h + 16}" '
                         f'text-anchor="middle">{_esc(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_svg(svg: str, path: str | Path) -> None:
    atomic_write_bytes(path, lambda fh: fh.write(svg.encode("utf-8")))


def summary_table(rows: list[dict], columns: list[str]) -> str:
    """Fixed-width plain-text table."""
    widths = {c: max(len(c), *(len(_fmt(r.get(c))) for r in rows)) if rows else len(c)
              for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for r in rows:
        lines.append("  ".join(_fmt(r.get(c)).ljust(widths[c]) for c in columns))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)
