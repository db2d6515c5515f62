"""Static SVG renderings: boundary curve, sample overlay, density heat map.

Figures use a fixed size and no timestamp metadata so that identical inputs
give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["curve_svg", "overlay_svg", "density_svg"]

_SIZE = (5.0, 5.0)


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": "nmat", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _closed(curve):
    c = np.asarray(curve, dtype=complex)
    return np.r_[c, c[:1]]


def _frame(ax, title):
    ax.set_aspect("equal")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    ax.grid(alpha=0.3)


def curve_svg(curve, path, title="droplet boundary"):
    fig, ax = plt.subplots(figsize=_SIZE)
    c = _closed(curve)
    ax.plot(c.real, c.imag, "-", lw=1.2, color="C0")
    _frame(ax, title)
    _save(fig, path)


def overlay_svg(curve, samples, path, title="samples vs predicted support", max_points=20000):
    fig, ax = plt.subplots(figsize=_SIZE)
    z = np.asarray(samples, dtype=complex).ravel()
    if z.size > max_points:
        # deterministic thinning
        z = z[:: int(np.ceil(z.size / max_points))]
    ax.plot(z.real, z.imag, ".", ms=0.8, color="0.4", alpha=0.5)
    c = _closed(curve)
    ax.plot(c.real, c.imag, "-", lw=1.4, color="C3")
    _frame(ax, title)
    _save(fig, path)


def density_svg(grid, path, curve=None, title="eigenvalue density"):
    fig, ax = plt.subplots(figsize=_SIZE)
    ex, ey = grid.grid.edges()
    im = ax.pcolormesh(ex, ey, grid.density().T, cmap="viridis", shading="flat", rasterized=False)
    fig.colorbar(im, ax=ax, shrink=0.8)
    if curve is not None:
        c = _closed(curve)
        ax.plot(c.real, c.imag, "-", lw=1.0, color="w")
    _frame(ax, title)
    _save(fig, path)
