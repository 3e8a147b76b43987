"""Dependency-free SVG plots.

Every plot embeds the numbers it draws in a leading XML comment so tests can
check the data without rasterizing anything.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..errors import BadColumns
from ..spectral import normal_cdf
from . import io

WIDTH, HEIGHT, PAD = 480, 360, 48
HIST_EDGES = np.linspace(-5.0, 5.0, 41)

_REQUIRED = {
    "loglog-scatter-with-fit": ("x", "y"),
    "histogram-vs-normal": ("value",),
    "error-vs-s": ("s", "err"),
}


def _f(v: float) -> str:
    return f"{v:.4f}"


def _frame(xmin, xmax, ymin, ymax):
    def sx(x):
        return PAD + (x - xmin) / ((xmax - xmin) or 1.0) * (WIDTH - 2 * PAD)

    def sy(y):
        return HEIGHT - PAD - (y - ymin) / ((ymax - ymin) or 1.0) * (HEIGHT - 2 * PAD)

    return sx, sy


def _svg(meta: str, body: list[str], title: str) -> str:
    head = [
        f"<!-- {meta} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
        f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" fill="none" stroke="black"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def histogram_counts(values, edges=HIST_EDGES) -> tuple[np.ndarray, int, int]:
    """Counts per half-open bin ``[e_k, e_{k+1})`` (last bin closed), plus under/overflow."""
    v = np.asarray(values, dtype=float)
    counts, _ = np.histogram(v, bins=edges)
    return counts, int(np.sum(v < edges[0])), int(np.sum(v > edges[-1]))


def _loglog(cols, title):
    x = np.asarray(cols["x"], dtype=float)
    y = np.asarray(cols["y"], dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise BadColumns("log-log plot needs positive x and y")
    lx, ly = np.log10(x), np.log10(y)
    if len(x) >= 2 and np.ptp(lx) > 0:
        slope, intercept = np.polyfit(lx, ly, 1)
    else:
        slope, intercept = float("nan"), float("nan")
    sx, sy = _frame(lx.min(), lx.max(), ly.min(), ly.max())
    body = [f'<circle cx="{_f(sx(a))}" cy="{_f(sy(b))}" r="3" fill="steelblue"/>' for a, b in zip(lx, ly)]
    if math.isfinite(slope):
        x0, x1 = lx.min(), lx.max()
        body.append(
            f'<line x1="{_f(sx(x0))}" y1="{_f(sy(intercept + slope * x0))}" x2="{_f(sx(x1))}" '
            f'y2="{_f(sy(intercept + slope * x1))}" stroke="crimson"/>'
        )
    meta = f"kind=loglog-scatter-with-fit fit slope={slope:.12g} intercept={intercept:.12g} points={len(x)}"
    return _svg(meta, body, title)


def _histogram(cols, title):
    v = np.asarray(cols["value"], dtype=float)
    counts, under, over = histogram_counts(v)
    total = len(v)
    widths = np.diff(HIST_EDGES)
    density = counts / (total * widths)
    expected = np.diff(normal_cdf(HIST_EDGES)) / widths
    ymax = max(density.max(), expected.max()) * 1.05
    sx, sy = _frame(HIST_EDGES[0], HIST_EDGES[-1], 0.0, ymax)
    body = []
    for k, c in enumerate(density):
        x0, x1 = sx(HIST_EDGES[k]), sx(HIST_EDGES[k + 1])
        body.append(
            f'<rect x="{_f(x0)}" y="{_f(sy(c))}" width="{_f(x1 - x0)}" height="{_f(sy(0) - sy(c))}" '
            'fill="lightsteelblue" stroke="white"/>'
        )
    centers = (HIST_EDGES[:-1] + HIST_EDGES[1:]) / 2
    pts = " ".join(f"{_f(sx(a))},{_f(sy(b))}" for a, b in zip(centers, expected))
    body.append(f'<polyline points="{pts}" fill="none" stroke="crimson"/>')
    meta = (
        "kind=histogram-vs-normal edges=" + ",".join(f"{e:g}" for e in HIST_EDGES)
        + " counts=" + ",".join(str(int(c)) for c in counts)
        + f" underflow={under} overflow={over} total={total}"
    )
    return _svg(meta, body, title)


def _error_vs_s(cols, title):
    s = np.asarray(cols["s"], dtype=float)
    err = np.asarray(cols["err"], dtype=float)
    order = np.argsort(s, kind="stable")
    s, err = s[order], err[order]
    ly = np.log10(np.maximum(err, 1e-300))
    sx, sy = _frame(0.0, max(1.0, s.max()), ly.min(), ly.max())
    pts = " ".join(f"{_f(sx(a))},{_f(sy(b))}" for a, b in zip(s, ly))
    body = [f'<polyline points="{pts}" fill="none" stroke="steelblue"/>']
    body += [f'<circle cx="{_f(sx(a))}" cy="{_f(sy(b))}" r="2.5" fill="steelblue"/>' for a, b in zip(s, ly)]
    best = int(np.argmin(err))
    meta = f"kind=error-vs-s argmin_s={s[best]:.12g} min_err={err[best]:.12g} points={len(s)}"
    return _svg(meta, body, title)


def emit_plot(data: dict, kind: str, path, title: str = "") -> Path:
    """Write a standalone SVG for a column table ``{name: sequence}``."""
    if kind not in _REQUIRED:
        raise BadColumns(f"unknown plot kind {kind!r}")
    if not data:
        raise BadColumns("empty table")
    missing = [c for c in _REQUIRED[kind] if c not in data]
    if missing:
        raise BadColumns(f"{kind} needs columns {_REQUIRED[kind]}, missing {missing}")
    lengths = {len(data[c]) for c in _REQUIRED[kind]}
    if len(lengths) != 1 or 0 in lengths:
        raise BadColumns("columns must be non-empty and of equal length")
    render = {"loglog-scatter-with-fit": _loglog, "histogram-vs-normal": _histogram, "error-vs-s": _error_vs_s}[kind]
    path = Path(path)
    path.write_text(render(data, title or kind))
    return path


def histogram_table(values, edges=HIST_EDGES) -> list[dict]:
    counts, _, _ = histogram_counts(values, edges)
    return [
        {"bin_lo": float(edges[k]), "bin_hi": float(edges[k + 1]), "count": int(counts[k])}
        for k in range(len(counts))
    ]


def emit_histogram_with_table(values, out, stem: str) -> list[Path]:
    """Histogram SVG plus the CSV bin table it was drawn from."""
    outset, owned = io.as_output_set(out)
    svg = emit_plot({"value": values}, "histogram-vs-normal", outset.path(f"{stem}.svg"))
    table = io.write_csv(outset.path(f"{stem}_bins.csv"), ("bin_lo", "bin_hi", "count"), histogram_table(values))
    if owned:
        return outset.commit()
    return [svg, table]
