"""Standalone SVG 1.1 figures: ROC curve, mean vs median bars, runtime histogram.

Output is a pure function of the report (fixed 800x600 viewBox, fixed number
formatting, no timestamps or generated ids).
"""

from __future__ import annotations

import os
import re
from pathlib import Path
from typing import Union
from xml.sax.saxutils import escape

from platebench.report import ComparisonReport, RunReport
from platebench.stats import gaussian_pdf

WIDTH, HEIGHT = 800, 600
LEFT, RIGHT, TOP, BOTTOM = 80, 40, 60, 70
PLOT_W = WIDTH - LEFT - RIGHT
PLOT_H = HEIGHT - TOP - BOTTOM
GAUSS_SAMPLES = 200


def _f(v: float) -> str:
    return f"{v:.2f}"


def _num(v: float) -> str:
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        ]
        self.text(WIDTH / 2, 30, title, size=18, anchor="middle")

    def text(self, x, y, s, size=12, anchor="start", fill="black"):
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}" fill="{fill}">{escape(s)}</text>'
        )

    def line(self, x1, y1, x2, y2, stroke="black", width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{width}"{extra}/>'
        )

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def polyline(self, pts, stroke, width=2.0):
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="{width}"/>'
        )

    def axes(self, xlabel: str, ylabel: str):
        self.line(LEFT, TOP + PLOT_H, LEFT + PLOT_W, TOP + PLOT_H)
        self.line(LEFT, TOP, LEFT, TOP + PLOT_H)
        self.text(LEFT + PLOT_W / 2, HEIGHT - 20, xlabel, anchor="middle")
        self.parts.append(
            f'<text x="20" y="{_f(TOP + PLOT_H / 2)}" font-family="sans-serif" font-size="12" '
            f'text-anchor="middle" transform="rotate(-90 20 {_f(TOP + PLOT_H / 2)})">{escape(ylabel)}</text>'
        )

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _px(fx: float, fy: float) -> tuple[float, float]:
    """Map unit-square coordinates to the plot area (y up)."""
    return LEFT + fx * PLOT_W, TOP + (1.0 - fy) * PLOT_H


def roc_svg(run: RunReport) -> str:
    c = _Canvas(f"ROC curve: {run.pipeline}")
    c.axes("False positive rate", "True positive rate")
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        x, y = _px(t, 0.0)
        c.text(x, y + 18, f"{t:.2f}", size=10, anchor="middle")
        x, y = _px(0.0, t)
        c.text(x - 8, y + 4, f"{t:.2f}", size=10, anchor="end")
    c.line(*_px(0, 0), *_px(1, 1), stroke="gray", dash="6,4")
    if run.roc is None:
        c.text(WIDTH / 2, HEIGHT / 2, run.roc_notice or "ROC unavailable", size=16, anchor="middle")
    else:
        c.polyline([_px(fpr, tpr) for fpr, tpr in run.roc.points], stroke="#1f77b4")
        c.text(LEFT + PLOT_W - 10, TOP + PLOT_H - 15, f"AUC = {run.roc.auc:.4f}", size=14, anchor="end")
    return c.finish()


def mean_median_svg(runs: list[RunReport]) -> str:
    """Mean and median of per-image total time, one bar pair per pipeline."""
    c = _Canvas("Execution time: mean vs median")
    c.axes("Pipeline", "Seconds per image")
    pairs = [(r.pipeline, r.runtime["total"].mean, r.runtime["total"].median) for r in runs]
    top = max(max(m, d) for _, m, d in pairs) or 1.0
    slot = PLOT_W / len(pairs)
    bar = slot * 0.3
    for i, (name, mean, median) in enumerate(pairs):
        x0 = LEFT + i * slot + slot * 0.2
        for j, (value, color) in enumerate(((mean, "#1f77b4"), (median, "#ff7f0e"))):
            h = PLOT_H * value / top
            x = x0 + j * bar
            c.rect(x, TOP + PLOT_H - h, bar, h, fill=color)
            c.text(x + bar / 2, TOP + PLOT_H - h - 4, _num(value), size=10, anchor="middle")
        c.text(LEFT + (i + 0.5) * slot, TOP + PLOT_H + 16, name[:40], size=10, anchor="middle")
    c.rect(LEFT + PLOT_W - 120, TOP, 12, 12, fill="#1f77b4")
    c.text(LEFT + PLOT_W - 102, TOP + 11, "mean")
    c.rect(LEFT + PLOT_W - 120, TOP + 18, 12, 12, fill="#ff7f0e")
    c.text(LEFT + PLOT_W - 102, TOP + 29, "median")
    return c.finish()


def histogram_svg(run: RunReport) -> str:
    """Histogram of per-image total time with the fitted Gaussian scaled by n * bin width."""
    stats = run.runtime["total"]
    hist = stats.histogram
    c = _Canvas(f"Gaussian distribution of execution times: {run.pipeline}")
    c.axes("Seconds per image", "Images")
    lo, hi = hist.edges[0], hist.edges[-1]
    span = hi - lo
    peak = max(hist.counts)
    overlay = []
    if stats.std > 0 and span > 0:
        scale = stats.n * hist.bin_width
        for i in range(GAUSS_SAMPLES + 1):
            x = lo + span * i / GAUSS_SAMPLES
            overlay.append((x, scale * gaussian_pdf(x, stats.mean, stats.std)))
        peak = max(peak, max(y for _, y in overlay))
    nb = len(hist.counts)
    for i, count in enumerate(hist.counts):
        x0, y0 = _px(i / nb, count / peak)
        x1, _ = _px((i + 1) / nb, 0.0)
        c.rect(x0, y0, x1 - x0, TOP + PLOT_H - y0, fill="#2ca02c", stroke="white")
    c.text(LEFT, TOP + PLOT_H + 16, _num(lo), size=10, anchor="middle")
    c.text(LEFT + PLOT_W, TOP + PLOT_H + 16, _num(hi), size=10, anchor="middle")
    if overlay:
        c.polyline([_px((x - lo) / span, y / peak) for x, y in overlay], stroke="#1f77b4")
        note = f"n = {stats.n}, mean = {_num(stats.mean)} s, std = {_num(stats.std)} s"
    else:
        note = f"n = {stats.n}, sigma = 0: no Gaussian overlay"
    c.text(LEFT + PLOT_W - 10, TOP + 15, note, anchor="end")
    return c.finish()


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")[:48] or "arm"


def render_plots(report: Union[RunReport, ComparisonReport], out_dir: Union[str, os.PathLike]) -> list[Path]:
    """Write ROC, mean/median and histogram SVGs; returns the paths in creation order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(report, RunReport):
        runs, prefixes = [report], [""]
    else:
        runs = report.runs
        prefixes = [f"{i:02d}_{_slug(r.pipeline)}_" for i, r in enumerate(runs)]
    written = []

    def write(name: str, body: str) -> None:
        path = out / name
        path.write_text(body, encoding="utf-8")
        written.append(path)

    for run, prefix in zip(runs, prefixes):
        write(f"{prefix}roc.svg", roc_svg(run))
        write(f"{prefix}runtime_histogram.svg", histogram_svg(run))
    write("mean_median.svg", mean_median_svg(runs))
    return written
