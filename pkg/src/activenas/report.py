"""Run comparison and report rendering: summary tables and SVG plots.

All output is deterministic: fixed viewports, fixed palettes, fixed float
formatting, groups iterated in sorted order.  Summary numbers are produced
by the curve operations themselves, never recomputed ad hoc.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .curves import AggregateCurve, aggregate, auc, auc_gain, curve_from_run_dir
from .errors import DataError
from .space import SearchGrid, depth, edge_list

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 64, 16, 36, 48


def _px(value, lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return a + (value - lo) / span * (b - a)


def _fmt(v) -> str:
    return f"{v:.2f}"


def load_curves(run_dirs):
    dirs = [Path(d) for d in run_dirs]
    if not dirs:
        raise DataError("no run directories given")
    return [curve_from_run_dir(d) for d in dirs]


def group_curves(curves):
    """Curves bucketed by (strategy, arch_mode), insertion order sorted."""
    groups = {}
    for curve in curves:
        groups.setdefault((curve.strategy, curve.arch_mode), []).append(curve)
    return {key: groups[key] for key in sorted(groups)}


def summarize(curves, m_max) -> list[dict]:
    """One row per (strategy, arch_mode) group: mean AUC at m_max, spread,
    and the gain relative to the random group with the same arch mode."""
    groups = {key: aggregate(cs) for key, cs in group_curves(curves).items()}
    baselines = {
        key[1]: agg for key, agg in groups.items() if key[0] == "random"
    }
    rows = []
    for (strategy, arch_mode), agg in groups.items():
        mean = agg.mean_curve(strategy=strategy, arch_mode=arch_mode)
        per_seed = [auc(c, m_max) for c in agg.curves]
        sem = (
            float(np.std(per_seed, ddof=1) / np.sqrt(len(per_seed)))
            if len(per_seed) >= 2
            else 0.0
        )
        row = {
            "strategy": strategy,
            "arch_mode": arch_mode,
            "n_runs": agg.n_runs,
            "m_max": m_max,
            "auc_mean": auc(mean, m_max),
            "auc_sem": sem,
            "auc_gain_vs_random": "",
        }
        baseline = baselines.get(arch_mode)
        if baseline is not None and strategy != "random":
            row["auc_gain_vs_random"] = auc_gain(
                baseline.mean_curve(), mean, m_max
            )
        rows.append(row)
    return rows


def common_budget(curves) -> float:
    return float(min(c.m[-1] for c in curves))


def curves_svg(curves, title="learning curves") -> str:
    """Mean curve with a shaded standard-error band per strategy group."""
    groups = {key: aggregate(cs) for key, cs in group_curves(curves).items()}
    x0 = min(float(c.m[0]) for c in curves)
    x1 = max(float(c.m[-1]) for c in curves)
    tops = [float((agg.mean_error + agg.sem).max()) for agg in groups.values()]
    y1 = max(0.1, float(np.ceil(max(tops) * 10) / 10))
    y0 = 0.0

    def X(v):
        return _px(v, x0, x1, _ML, _W - _MR)

    def Y(v):
        return _px(v, y0, y1, _H - _MB, _MT)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{(_ML + _W - _MR) // 2}" y="{_H - 10}" text-anchor="middle">labels used</text>',
        f'<text x="14" y="{(_MT + _H - _MB) // 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(_MT + _H - _MB) // 2})">test error</text>',
    ]
    for tick in np.linspace(x0, x1, 5):
        tx = _fmt(X(tick))
        parts.append(
            f'<line x1="{tx}" y1="{_H - _MB}" x2="{tx}" y2="{_H - _MB + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{tx}" y="{_H - _MB + 18}" text-anchor="middle">{tick:g}</text>'
        )
    for tick in np.linspace(y0, y1, 6):
        ty = _fmt(Y(tick))
        parts.append(
            f'<line x1="{_ML - 4}" y1="{ty}" x2="{_ML}" y2="{ty}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{ty}" text-anchor="end" dominant-baseline="middle">{tick:.2f}</text>'
        )
    for color_idx, (key, agg) in enumerate(groups.items()):
        color = _PALETTE[color_idx % len(_PALETTE)]
        label = "/".join(p for p in key if p) or "runs"
        if agg.n_runs >= 2 and np.any(agg.sem > 0):
            upper = [(X(m), Y(e)) for m, e in zip(agg.m, agg.mean_error + agg.sem)]
            lower = [(X(m), Y(e)) for m, e in zip(agg.m, agg.mean_error - agg.sem)]
            pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in upper + lower[::-1])
            parts.append(
                f'<polygon points="{pts}" fill="{color}" opacity="0.15" stroke="none"/>'
            )
        pts = " ".join(
            f"{_fmt(X(m))},{_fmt(Y(e))}" for m, e in zip(agg.m, agg.mean_error)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _MT + 16 + 16 * color_idx
        parts.append(
            f'<line x1="{_W - _MR - 150}" y1="{ly - 4}" x2="{_W - _MR - 126}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="{_W - _MR - 120}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def grid_svg(grid: SearchGrid) -> str:
    """Search grid as nodes with expansion-edge arrows, stacks bottom-up."""
    cell = 72
    ml, mb = 56, 48
    w = ml + cell * grid.n_blocks + 24
    h = mb + cell * grid.n_stacks + 36

    def X(i):
        return ml + cell * (i - 1) + cell // 2

    def Y(j):
        return h - mb - cell * (j - 1) - cell // 2

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}" font-family="monospace" font-size="11">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        '<defs><marker id="arr" markerWidth="8" markerHeight="8" refX="7" refY="3" '
        'orient="auto"><path d="M0,0 L7,3 L0,6 z" fill="#555"/></marker></defs>',
        f'<text x="{w // 2}" y="{h - 10}" text-anchor="middle">blocks per stack (i)</text>',
        f'<text x="14" y="{h // 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {h // 2})">stacks (j)</text>',
    ]
    r = 17
    for src, dst in edge_list(grid):
        x1, y1, x2, y2 = X(src.i), Y(src.j), X(dst.i), Y(dst.j)
        norm = ((x2 - x1) ** 2 + (y2 - y1) ** 2) ** 0.5 or 1.0
        ux, uy = (x2 - x1) / norm, (y2 - y1) / norm
        parts.append(
            f'<line x1="{_fmt(x1 + r * ux)}" y1="{_fmt(y1 + r * uy)}" '
            f'x2="{_fmt(x2 - (r + 3) * ux)}" y2="{_fmt(y2 - (r + 3) * uy)}" '
            'stroke="#555" stroke-width="1" marker-end="url(#arr)"/>'
        )
    for node in grid.points():
        x, y = X(node.i), Y(node.j)
        parts.append(
            f'<circle cx="{x}" cy="{y}" r="{r}" fill="#eef3fa" stroke="#1f77b4"/>'
        )
        parts.append(
            f'<text x="{x}" y="{y - 2}" text-anchor="middle">{node.i},{node.j}</text>'
        )
        parts.append(
            f'<text x="{x}" y="{y + 11}" text-anchor="middle" fill="#555">'
            f"d{depth(node, grid.block)}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def edges_text(grid: SearchGrid) -> str:
    lines = [f"{s.i},{s.j} -> {d.i},{d.j}" for s, d in edge_list(grid)]
    return "\n".join(lines) + "\n"


def report(run_dirs, out_dir) -> list[dict]:
    """Render curve CSV, SVG plot, and summary table for a set of runs."""
    curves = load_curves(run_dirs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "strategy", "arch_mode", "seed", "labels_used", "test_error"])
        for curve in curves:
            for m, e in zip(curve.m, curve.error):
                writer.writerow(
                    [curve.name, curve.strategy, curve.arch_mode,
                     "" if curve.seed is None else curve.seed, int(m), e]
                )

    m_max = common_budget(curves)
    rows = summarize(curves, m_max)
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    with open(out / "curves.svg", "w") as fh:
        fh.write(curves_svg(curves))
    return rows
