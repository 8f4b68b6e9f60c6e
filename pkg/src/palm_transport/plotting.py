"""Static SVG renderings of densities and territories (no plotting library needed)."""
from __future__ import annotations

import colorsys

import numpy as np

from .density import ConstrainedDensity
from .measures import AtomicMeasure

SIZE = 480


def _color(k: int) -> str:
    # golden-angle hues keep neighbouring indices apart
    r, g, b = colorsys.hsv_to_rgb((k * 0.61803398875) % 1.0, 0.55, 0.95)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def _frame(lo, hi):
    span = np.maximum(np.asarray(hi, float) - np.asarray(lo, float), 1e-12)
    scale = SIZE / span.max()
    return np.asarray(lo, float), scale


def _svg(body: list, title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE + 20}" height="{SIZE + 40}" '
            f'viewBox="-10 -30 {SIZE + 20} {SIZE + 40}">')
    return "\n".join([head, f'<text x="0" y="-12" font-size="12" font-family="sans-serif">{title}</text>',
                      *body, "</svg>"]) + "\n"


def density_svg(f: ConstrainedDensity, max_pixels: int = 240) -> str:
    """Support picture of ``f``.

    In one dimension: the (site, center) plane shaded by ``f``.  In two:
    every site drawn in the color of the center it sends most mass to
    (white when it sends nothing), i.e. the territories of the centers.
    """
    d = f.geometry.dimension
    if d == 1:
        x = f.phi.positions[f.sites, 0]
        y = f.psi.positions[f.centers, 0]
        lo = min(f.phi.positions.min(), f.psi.positions.min())
        hi = max(f.phi.positions.max(), f.psi.positions.max())
        span = max(hi - lo, 1e-12)
        bx = np.minimum((x - lo) / span * max_pixels, max_pixels - 1).astype(int)
        by = np.minimum((y - lo) / span * max_pixels, max_pixels - 1).astype(int)
        img = np.zeros((max_pixels, max_pixels))
        np.maximum.at(img, (bx, by), f.values)
        px = SIZE / max_pixels
        body = []
        for i, j in zip(*np.nonzero(img > 1e-12)):
            shade = int(255 * (1 - img[i, j]))
            body.append(f'<rect x="{i * px:.2f}" y="{SIZE - (j + 1) * px:.2f}" width="{px:.2f}" '
                        f'height="{px:.2f}" fill="rgb({shade},{shade},{shade})"/>')
        return _svg(body, "density support (horizontal: site, vertical: center)")
    if d != 2:
        raise ValueError("plots are produced for dimension 1 or 2")
    pos = f.phi.positions
    best = np.full(f.n_sites, -1)
    if f.nnz:
        mass = f.values * f.psi.weights[f.centers]
        order = np.lexsort((-mass, f.sites))
        first = np.ones(len(order), dtype=bool)
        first[1:] = f.sites[order][1:] != f.sites[order][:-1]
        best[f.sites[order][first]] = f.centers[order][first]
    lo, scale = _frame(pos.min(axis=0), pos.max(axis=0))
    step = max(1, int(np.ceil(np.sqrt(len(pos) / max_pixels ** 2))))
    px = max(2.0, SIZE / max_pixels * step)
    body = []
    for k in range(0, len(pos), step):
        x, y = (pos[k] - lo) * scale
        fill = _color(best[k]) if best[k] >= 0 else "#ffffff"
        body.append(f'<rect x="{x:.2f}" y="{SIZE - y:.2f}" width="{px:.2f}" height="{px:.2f}" fill="{fill}"/>')
    c = (f.psi.positions - lo) * scale
    for x, y in c[:2000]:
        body.append(f'<circle cx="{x:.2f}" cy="{SIZE - y:.2f}" r="1.5" fill="black"/>')
    return _svg(body, "territories of the centers")


def territories_svg(psi: AtomicMeasure, cells) -> str:
    """Territory outlines (``VoronoiCell`` objects) and the atoms of ``psi``."""
    pts = [psi.positions]
    pts += [c.polyline for c in cells if c.polyline is not None and len(c.polyline)]
    allp = np.vstack(pts)
    lo, scale = _frame(allp.min(axis=0), allp.max(axis=0))
    body = []
    for c in cells:
        if c.polyline is None or len(c.polyline) == 0:
            continue
        q = (c.polyline - lo) * scale
        path = " L ".join(f"{x:.2f},{SIZE - y:.2f}" for x, y in q)
        body.append(f'<path d="M {path} Z" fill="{_color(c.center)}" fill-opacity="0.35" stroke="black" '
                    f'stroke-width="0.6"/>')
    for x, y in (psi.positions - lo) * scale:
        body.append(f'<circle cx="{x:.2f}" cy="{SIZE - y:.2f}" r="2" fill="black"/>')
    return _svg(body, "Voronoi territories")
