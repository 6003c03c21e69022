"""Minimal deterministic SVG charts: rank plots and amount histograms.

Every number is written with 6 significant digits and nothing depends
on time or environment, so identical inputs give identical bytes.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

MAX_OVERLAYS = 8
PALETTE = ("#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f")
_MARGIN = (70, 20, 40, 55)  # left, right, top, bottom


class PlotKind(str, enum.Enum):
    RANK_LOGLOG = "rank-loglog"
    RANK_LOGLINEAR = "rank-loglinear"
    HISTOGRAM = "histogram"


@dataclass(frozen=True)
class Overlay:
    """A fitted curve (``x`` and ``y`` both given) or a vertical marker (``x`` only).

    Coordinates are in data units: rank and value for rank plots, pounds
    for histogram markers.
    """

    label: str
    x: tuple[float, ...]
    y: tuple[float, ...] | None = None
    dashed: bool = False

    @property
    def is_marker(self) -> bool:
        return self.y is None


@dataclass(frozen=True)
class PlotSpec:
    kind: PlotKind
    width: int = 640
    height: int = 480
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    overlays: tuple[Overlay, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "kind", PlotKind(self.kind))
        object.__setattr__(self, "overlays", tuple(self.overlays))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")
        if self.width <= _MARGIN[0] + _MARGIN[1] or self.height <= _MARGIN[2] + _MARGIN[3]:
            raise ValueError("plot too small for its margins")
        if len(self.overlays) > MAX_OVERLAYS:
            raise ValueError(f"at most {MAX_OVERLAYS} overlays")


def fmt(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def _nice_step(span: float, target: int = 5) -> float:
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def _linear_ticks(lo: float, hi: float) -> list[float]:
    step = _nice_step(hi - lo)
    start = math.ceil(lo / step - 1e-9)
    ticks = []
    k = start
    while k * step <= hi + 1e-9 * step:
        ticks.append(k * step)
        k += 1
    return ticks


def _log_ticks(lo: float, hi: float) -> list[int]:
    # lo, hi are log10 values
    return list(range(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1))


class _Canvas:
    def __init__(self, spec: PlotSpec, xr, yr, x_log: bool, y_log: bool):
        self.spec = spec
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr
        self.x_log, self.y_log = x_log, y_log
        left, right, top, bottom = _MARGIN
        self.left, self.top = left, top
        self.pw = spec.width - left - right
        self.ph = spec.height - top - bottom
        self.parts: list[str] = []

    def px(self, x):
        return self.left + (np.asarray(x, dtype=np.float64) - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return self.top + self.ph - (np.asarray(y, dtype=np.float64) - self.y0) / (self.y1 - self.y0) * self.ph

    def add(self, s: str) -> None:
        self.parts.append(s)

    def axes(self) -> None:
        s = self.spec
        l, t, w, h = self.left, self.top, self.pw, self.ph
        self.add(f'<rect x="{l}" y="{t}" width="{w}" height="{h}" fill="none" stroke="#000"/>')
        xt = _log_ticks(self.x0, self.x1) if self.x_log else _linear_ticks(self.x0, self.x1)
        for v in xt:
            x = fmt(float(self.px(v)))
            self.add(f'<line x1="{x}" y1="{t + h}" x2="{x}" y2="{t + h + 5}" stroke="#000"/>')
            self.add(f'<text x="{x}" y="{t + h + 18}" text-anchor="middle">{self._label(v, self.x_log)}</text>')
        yt = _log_ticks(self.y0, self.y1) if self.y_log else _linear_ticks(self.y0, self.y1)
        for v in yt:
            y = fmt(float(self.py(v)))
            self.add(f'<line x1="{l - 5}" y1="{y}" x2="{l}" y2="{y}" stroke="#000"/>')
            self.add(f'<text x="{l - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">'
                     f'{self._label(v, self.y_log)}</text>')
        if s.title:
            self.add(f'<text x="{fmt(l + w / 2)}" y="{t - 15}" text-anchor="middle" '
                     f'font-weight="bold">{escape(s.title)}</text>')
        if s.x_label:
            self.add(f'<text x="{fmt(l + w / 2)}" y="{s.height - 10}" text-anchor="middle">'
                     f'{escape(s.x_label)}</text>')
        if s.y_label:
            cy = fmt(t + h / 2)
            self.add(f'<text x="15" y="{cy}" text-anchor="middle" transform="rotate(-90 15 {cy})">'
                     f'{escape(s.y_label)}</text>')

    @staticmethod
    def _label(v, log: bool) -> str:
        if log:
            return f'10<tspan baseline-shift="super" font-size="8">{int(v)}</tspan>'
        return fmt(v)

    def polyline(self, xs, ys, color: str, dashed=False, width=1.0, label=None) -> None:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        keep = np.isfinite(xs) & np.isfinite(ys)
        pts = " ".join(f"{fmt(a)},{fmt(b)}" for a, b in zip(self.px(xs[keep]), self.py(ys[keep])))
        dash = ' stroke-dasharray="6 3"' if dashed else ""
        self.add(f'<polyline fill="none" stroke="{color}" stroke-width="{fmt(width)}"{dash} '
                 f'points="{pts}">{self._title(label)}</polyline>')

    def vline(self, x: float, color: str, label: str) -> None:
        xp = fmt(float(self.px(x)))
        self.add(f'<line x1="{xp}" y1="{self.top}" x2="{xp}" y2="{self.top + self.ph}" stroke="{color}" '
                 f'stroke-dasharray="4 3">{self._title(label)}</line>')

    @staticmethod
    def _title(label) -> str:
        return f"<title>{escape(label)}</title>" if label else ""

    def legend(self, entries: Sequence[tuple[str, str]]) -> None:
        x = self.left + self.pw - 150
        for i, (label, color) in enumerate(entries):
            y = self.top + 15 + 15 * i
            self.add(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
            self.add(f'<text x="{x + 25}" y="{y}" dominant-baseline="middle">{escape(label)}</text>')

    def document(self) -> str:
        s = self.spec
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{s.width}" height="{s.height}" '
                f'viewBox="0 0 {s.width} {s.height}" font-family="sans-serif" font-size="11">')
        desc = f"<desc>{escape(s.kind.value)}</desc>"
        return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head, desc, *self.parts, "</svg>", ""])


def _pad(lo: float, hi: float, frac: float = 0.03) -> tuple[float, float]:
    if hi <= lo:
        return lo - 0.5, hi + 0.5
    d = (hi - lo) * frac
    return lo - d, hi + d


def render_rank(values: Sequence[float], spec: PlotSpec) -> str:
    """Rank plot of a positive non-increasing series with overlays."""
    if spec.kind is PlotKind.HISTOGRAM:
        raise ValueError("render_rank needs a rank plot kind")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("nothing to plot")
    y_log = spec.kind is PlotKind.RANK_LOGLOG
    x = np.log10(np.arange(1, v.size + 1))
    y = np.log10(v) if y_log else v
    ty = (lambda a: np.log10(np.asarray(a, dtype=np.float64))) if y_log else (lambda a: np.asarray(a, dtype=np.float64))
    ylo, yhi = float(y.min()), float(y.max())
    for ov in spec.overlays:
        if not ov.is_marker:
            with np.errstate(divide="ignore", invalid="ignore"):
                oy = ty(ov.y)
            oy = oy[np.isfinite(oy)]
            if oy.size:
                ylo, yhi = min(ylo, float(oy.min())), max(yhi, float(oy.max()))
    cv = _Canvas(spec, _pad(0.0, float(x[-1])), _pad(ylo, yhi), True, y_log)
    cv.axes()
    cv.polyline(x, y, "#1f77b4", width=1.5, label="data")
    entries = [("data", "#1f77b4")]
    for ov, color in zip(spec.overlays, PALETTE):
        if ov.is_marker:
            for xm in ov.x:
                cv.vline(math.log10(xm), color, ov.label)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                cv.polyline(np.log10(np.asarray(ov.x, dtype=np.float64)), ty(ov.y), color, ov.dashed, 1.5, ov.label)
        entries.append((ov.label, color))
    cv.legend(entries)
    return cv.document()


def render_histogram(bin_edges: Sequence[float], counts: Sequence[int], spec: PlotSpec) -> str:
    """Bars over log10(pounds) bins; marker overlays are amounts in pounds."""
    if spec.kind is not PlotKind.HISTOGRAM:
        raise ValueError("render_histogram needs the histogram kind")
    edges = np.asarray(bin_edges, dtype=np.float64)
    c = np.asarray(counts, dtype=np.float64)
    if edges.size != c.size + 1 or c.size == 0:
        raise ValueError("need len(bin_edges) == len(counts) + 1 >= 2")
    cv = _Canvas(spec, (float(edges[0]), float(edges[-1])), (0.0, max(float(c.max()), 1.0) * 1.05), True, False)
    cv.axes()
    base = cv.py(0.0)
    for lo, hi, n in zip(edges[:-1], edges[1:], c):
        if n <= 0:
            continue
        x0, x1, top = float(cv.px(lo)), float(cv.px(hi)), float(cv.py(n))
        cv.add(f'<rect x="{fmt(x0)}" y="{fmt(top)}" width="{fmt(x1 - x0)}" height="{fmt(base - top)}" '
               f'fill="#1f77b4" stroke="#fff" stroke-width="0.5"/>')
    entries = []
    for ov, color in zip(spec.overlays, PALETTE):
        for xm in ov.x:
            cv.vline(math.log10(xm), color, ov.label)
        entries.append((ov.label, color))
    if entries:
        cv.legend(entries)
    return cv.document()


def write_svg(text: str, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


