"""Deterministic SVG rendering of basin rasters and replicator vector fields.

Coordinates are written with fixed precision and elements in a fixed order,
so identical inputs give byte-identical documents.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .basins import BasinRaster, projection_profiles, stag_hunt_manifold
from .dynamics import field_array
from .errors import DomainError
from .games import Game

PALETTE = ("#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c", "#dc7ec0", "#797979")
SPECIAL = {"unresolved": "#000000", "mixed": "#ffffff"}


@dataclass(frozen=True)
class PlotOptions:
    size: int = 400
    margin: int = 20
    manifold: bool = False
    colors: tuple[tuple[str, str], ...] = ()
    legend: bool = True


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def color_map(labels: list[str], overrides: tuple[tuple[str, str], ...] = ()) -> dict[str, str]:
    cmap, k = {}, 0
    for lab in sorted(labels):
        if lab in SPECIAL:
            cmap[lab] = SPECIAL[lab]
        else:
            cmap[lab] = PALETTE[k % len(PALETTE)]
            k += 1
    cmap.update(dict(overrides))
    return cmap


class _Canvas:
    def __init__(self, opts: PlotOptions, extra_height: int = 0):
        self.o = opts
        self.height = opts.size + 2 * opts.margin + extra_height
        self.width = opts.size + 2 * opts.margin
        self.parts: list[str] = []

    def px(self, x: float) -> float:
        return self.o.margin + x * self.o.size

    def py(self, y: float) -> float:
        return self.o.margin + (1 - y) * self.o.size

    def add(self, s: str) -> None:
        self.parts.append(s)

    def frame(self) -> None:
        m, s = self.o.margin, self.o.size
        self.add(f'<rect x="{m}" y="{m}" width="{s}" height="{s}" fill="none" stroke="#000000" stroke-width="1"/>')

    def manifold(self) -> None:
        xs = np.linspace(0, 1, 201)
        ys = stag_hunt_manifold(xs)
        pts = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(xs, ys))
        self.add(f'<polyline class="manifold" points="{pts}" fill="none" stroke="#000000" stroke-width="2"/>')

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def raster_svg(raster: BasinRaster, opts: PlotOptions | None = None) -> str:
    """Colored cells (horizontal runs of equal label merged) plus optional overlay."""
    opts = opts or PlotOptions()
    if not raster.labels or not raster.labels[0]:
        raise DomainError("empty raster")
    labels = raster.label_set()
    cmap = color_map(labels, opts.colors)
    nx, ny = len(raster.labels[0]), len(raster.labels)
    legend_h = 16 * len(labels) + 8 if opts.legend else 0
    cv = _Canvas(opts, legend_h)
    cw, ch = opts.size / nx, opts.size / ny
    for j, row in enumerate(raster.labels):
        y0 = opts.margin + (ny - 1 - j) * ch
        i = 0
        while i < nx:
            k = i
            while k + 1 < nx and row[k + 1] == row[i]:
                k += 1
            cv.add(
                f'<rect x="{_f(opts.margin + i * cw)}" y="{_f(y0)}" width="{_f((k - i + 1) * cw)}" '
                f'height="{_f(ch)}" fill="{cmap[row[i]]}"/>'
            )
            i = k + 1
    cv.frame()
    if opts.manifold:
        cv.manifold()
    if opts.legend:
        y = opts.size + 2 * opts.margin
        for lab in labels:
            cv.add(f'<rect x="{opts.margin}" y="{y}" width="12" height="12" fill="{cmap[lab]}" stroke="#000000"/>')
            cv.add(f'<text x="{opts.margin + 18}" y="{y + 10}" font-size="11" font-family="sans-serif">{escape(lab)}</text>')
            y += 16
    return cv.render()


def vector_field_arrows(game: Game, density: int = 20, points: np.ndarray | None = None) -> np.ndarray:
    """Rows (x, y, dx, dy, norm) of the projected field at grid cell centers.

    The projection is the one used by basin rasters: x is the first-strategy
    probability shared by every player but the last, y that of the last.
    """
    if points is None:
        if density < 1:
            raise DomainError("density must be positive")
        c = (np.arange(density) + 0.5) / density
        X, Y = np.meshgrid(c, c)
        points = np.column_stack([X.ravel(), Y.ravel()])
    points = np.atleast_2d(points)
    P = np.vstack([projection_profiles(game, [x], [y]) for x, y in points])
    F = field_array(game, P)
    d = np.column_stack([F[:, 0], F[:, -2]])
    return np.column_stack([points, d, np.hypot(d[:, 0], d[:, 1])])


def vector_field_svg(game: Game, density: int = 20, opts: PlotOptions | None = None) -> str:
    """Arrows whose length is proportional to the local field norm."""
    opts = opts or PlotOptions(legend=False)
    arrows = vector_field_arrows(game, density)
    cv = _Canvas(opts)
    cv.frame()
    peak = float(arrows[:, 4].max())
    cell = opts.size / density
    for x, y, dx, dy, nrm in arrows:
        if peak == 0 or nrm == 0:
            continue
        L = 0.9 * cell * nrm / peak
        ux, uy = dx / nrm, dy / nrm
        x0, y0 = cv.px(x), cv.py(y)
        x1, y1 = x0 + L * ux, y0 - L * uy
        cv.add(f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="#333333" stroke-width="1"/>')
        hx, hy = -ux * 0.3 * L, uy * 0.3 * L
        nx_, ny_ = -hy * 0.5, hx * 0.5
        pts = f"{_f(x1)},{_f(y1)} {_f(x1 + hx + nx_)},{_f(y1 + hy + ny_)} {_f(x1 + hx - nx_)},{_f(y1 + hy - ny_)}"
        cv.add(f'<polygon points="{pts}" fill="#333333"/>')
    if opts.manifold:
        cv.manifold()
    return cv.render()
