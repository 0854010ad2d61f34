"""Figure helpers for scenario reports.

All figures go straight to files through the Agg backend.  PNG metadata
is stripped so that reruns write identical bytes where matplotlib allows.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .planar import BrokenRay, ConeDomain, RectTube  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "image.cmap": "viridis",
    "svg.hashsalt": "brokenray",
}

# golden-ratio panels, about one column wide
FIG_WIDTH = 4.5
FIG_HEIGHT = FIG_WIDTH * (math.sqrt(5.0) - 1.0) / 2.0


def _new(ncols=1, width=FIG_WIDTH, height=FIG_HEIGHT):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(1, ncols, figsize=(width * ncols, height))
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def sinogram_figure(sino, path, title="sinogram"):
    """Image of the sinogram in (angle, offset), excluded cells left blank."""
    fig, ax = _new()
    vals = np.ma.masked_invalid(sino.values)
    extent = (sino.angles[0], sino.angles[-1], sino.offsets[0], sino.offsets[-1])
    im = ax.imshow(vals.T, origin="lower", aspect="auto", extent=extent)
    ax.set_xlabel(r"$\varphi$")
    ax.set_ylabel("$s$")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def _image(ax, field, mask=None, title="", vmin=None, vmax=None):
    img = np.array(field.values, dtype=float)
    if mask is not None:
        img = np.ma.masked_where(~mask, img)
    x0, y0 = field.origin
    h = field.spacing
    ny, nx = img.shape
    extent = (x0 - h / 2, x0 + (nx - 0.5) * h, y0 - h / 2, y0 + (ny - 0.5) * h)
    im = ax.imshow(img, origin="lower", extent=extent, vmin=vmin, vmax=vmax)
    ax.set_aspect("equal")
    ax.set_title(title)
    return im


def field_figure(field, path, mask=None, title=""):
    fig, ax = _new(height=FIG_WIDTH)
    im = _image(ax, field, mask, title)
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def comparison_figure(truth, recon, path, mask=None):
    """Phantom, reconstruction and their difference side by side."""
    fig, axes = _new(3, width=3.2, height=3.0)
    lo = float(np.nanmin(truth.values))
    hi = float(np.nanmax(truth.values))
    _image(axes[0], truth, mask, "phantom", lo, hi)
    im = _image(axes[1], recon, mask, "reconstruction", lo, hi)
    fig.colorbar(im, ax=axes[1], fraction=0.046)
    diff = recon.__class__.from_grid(recon.values - truth.values, recon.origin, recon.spacing)
    im = _image(axes[2], diff, mask, "difference")
    fig.colorbar(im, ax=axes[2], fraction=0.046)
    return _save(fig, path)


def _domain_outline(ax, domain):
    if isinstance(domain, ConeDomain):
        th = np.linspace(0.0, domain.alpha, 400)
        r = domain.h(th)
        xs = np.concatenate(([0.0], r * np.cos(th), [0.0]))
        ys = np.concatenate(([0.0], r * np.sin(th), [0.0]))
        ax.plot(xs, ys, color="0.3", lw=0.8)
    elif isinstance(domain, RectTube):
        w, L = domain.width, domain.length
        ax.plot([0, w, w, 0, 0], [0, 0, L, L, 0], color="0.3", lw=0.8)
    else:
        t = np.linspace(0.0, 2.0 * math.pi, 400)
        ax.plot(np.cos(t), np.sin(t), color="0.3", lw=0.8)


def rays_figure(rays, path, domain=None, title="broken rays"):
    """Broken rays drawn over the outline of their domain."""
    fig, ax = _new(height=FIG_WIDTH)
    if isinstance(rays, BrokenRay):
        rays = [rays]
    if domain is not None:
        _domain_outline(ax, domain)
    for ray in rays:
        v = np.asarray(ray.vertices)
        ax.plot(v[:, 0], v[:, 1], lw=0.8, marker=".", ms=3)
    ax.set_aspect("equal")
    ax.set_title(title)
    return _save(fig, path)


def residuals_figure(residuals, path, title="CGLS residual", ylabel=r"$\|b - Ax\|$"):
    fig, ax = _new()
    ax.semilogy(np.arange(len(residuals)), residuals, lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    return _save(fig, path)


def bars_figure(labels, values, path, title="", ylabel="", log=True):
    """One bar per label; used for per-degree errors and singular values."""
    fig, ax = _new()
    vals = np.abs(np.asarray(values, dtype=float))
    if log:
        vals = np.maximum(vals, 1e-300)
    ax.bar(np.arange(len(vals)), vals, color="C0")
    ax.set_xticks(np.arange(len(vals)))
    ax.set_xticklabels([str(s) for s in labels], rotation=90 if len(vals) > 12 else 0)
    if log:
        ax.set_yscale("log")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)


def scatter_figure(x, y, path, xlabel="", ylabel="", title="", logy=True):
    fig, ax = _new()
    y = np.abs(np.asarray(y, dtype=float)) if logy else np.asarray(y, dtype=float)
    if logy:
        y = np.maximum(y, 1e-300)
        ax.set_yscale("log")
    ax.plot(x, y, ".", ms=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)
