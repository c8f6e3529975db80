"""Static SVG rendering of point clouds and embedded graphs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .fitter import PointCloud, principal_axes

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
SIZE = 600.0
MARGIN = 20.0


def _g(v: float) -> str:
    return f"{v:.6g}"


def projector(cloud: PointCloud, projection=(0, 1)):
    """Map R^m to the plane.

    ``projection`` is a pair of coordinate indices, or ``("pc", i, j)`` for
    principal components ``i`` and ``j`` (1-based) of the cloud.
    """
    if cloud.dim < 2:
        raise DataError("rendering needs at least two dimensions")
    if len(projection) == 3 and projection[0] == "pc":
        i, j = int(projection[1]), int(projection[2])
        if not (1 <= i <= cloud.dim and 1 <= j <= cloud.dim):
            raise DataError(f"principal components ({i}, {j}) out of range")
        mean, axes, _ = principal_axes(cloud, max(i, j))
        basis = axes[[i - 1, j - 1]].T
        return lambda p: (np.asarray(p, dtype=float) - mean) @ basis
    i, j = (int(v) for v in projection)
    if not (0 <= i < cloud.dim and 0 <= j < cloud.dim):
        raise DataError(f"coordinates ({i}, {j}) out of range")
    return lambda p: np.asarray(p, dtype=float)[:, [i, j]]


def render_svg(cloud: PointCloud, graphs, path=None, projection=(0, 1), labels=None,
               reference=None) -> str:
    """Scatter plot of the points with graphs drawn on top.

    ``graphs`` is a sequence of ``(graph, embedding)`` pairs drawn thin (e.g.
    ensemble members); ``reference`` is an optional pair drawn thick. Points
    are colored by ``labels`` when given. Returns the SVG text and writes it to
    ``path`` if provided.
    """
    proj = projector(cloud, projection)
    pts = proj(cloud.x)
    layers = [(g, proj(phi), False) for g, phi in graphs]
    if reference is not None:
        layers.append((reference[0], proj(reference[1]), True))
    allp = np.vstack([pts] + [p for _, p, _ in layers])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1])) or 1.0
    scale = (SIZE - 2 * MARGIN) / span

    def xy(p):
        return MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_g(SIZE)}" height="{_g(SIZE)}" '
           f'viewBox="0 0 {_g(SIZE)} {_g(SIZE)}">',
           f'<rect width="{_g(SIZE)}" height="{_g(SIZE)}" fill="white"/>', '<g class="points">']
    for k, p in enumerate(pts):
        color = "#999999" if labels is None or labels[k] < 0 else PALETTE[int(labels[k]) % len(PALETTE)]
        x, y = xy(p)
        out.append(f'<circle class="point" cx="{_g(x)}" cy="{_g(y)}" r="1.5" fill="{color}"/>')
    out.append("</g>")
    for graph, phi, thick in layers:
        width, r, cls = ("3", "4", "reference") if thick else ("0.8", "1.5", "member")
        out.append(f'<g class="graph {cls}">')
        for a, b in graph.edges:
            (x1, y1), (x2, y2) = xy(phi[a]), xy(phi[b])
            out.append(f'<line class="edge" x1="{_g(x1)}" y1="{_g(y1)}" x2="{_g(x2)}" '
                       f'y2="{_g(y2)}" stroke="black" stroke-width="{width}"/>')
        for p in phi:
            x, y = xy(p)
            out.append(f'<circle class="node" cx="{_g(x)}" cy="{_g(y)}" r="{r}" fill="#d62728"/>')
        out.append("</g>")
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
