"""Heatmap rendering: portable pixmaps for goldens and PNG figures for reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .skydome import SkyDome  # noqa: E402
from .weather import direction_from_angles  # noqa: E402

COLORMAP = "viridis"
OUTSIDE = (255, 255, 255)
# no version string or timestamp in the file, so reruns are byte-identical
_PNG_META = {"Software": None}


def colorize(values: np.ndarray, vmax: float | None = None, cmap: str = COLORMAP) -> np.ndarray:
    """Map a 2-D array to uint8 RGB, scaled to [0, vmax]. NaN pixels are white."""
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    top = float(np.max(v[finite])) if vmax is None and finite.any() else (vmax or 0.0)
    scaled = np.zeros_like(v) if top <= 0 else np.clip(np.where(finite, v, 0.0) / top, 0.0, 1.0)
    rgb = (matplotlib.colormaps[cmap](scaled)[..., :3] * 255.0 + 0.5).astype(np.uint8)
    rgb[~finite] = OUTSIDE
    return rgb


def write_ppm(values: np.ndarray, path: str | Path, vmax: float | None = None) -> None:
    """Binary (P6) pixmap; row 0 of ``values`` is the top of the image."""
    Image.fromarray(colorize(values, vmax)).save(path, format="PPM")


def sky_raster(dome: SkyDome, size: int = 181, kind: int | None = None) -> np.ndarray:
    """Azimuthal-equidistant view of the dome from below, north up and east right.

    Each pixel takes the value of the nearest node; pixels outside the horizon
    circle are NaN. ``kind`` restricts the map to one node kind.
    """
    values = dome.values.copy()
    if kind is not None:
        values = np.where(dome.kinds == kind, values, 0.0)
    c = (size - 1) / 2.0
    v, u = np.mgrid[0:size, 0:size]
    x = (u - c) / c
    y = (c - v) / c
    r = np.hypot(x, y)
    out = np.full((size, size), np.nan)
    inside = r <= 1.0
    if len(dome) == 0:
        out[inside] = 0.0
        return out
    zen = r[inside] * 90.0
    az = np.degrees(np.arctan2(x[inside], y[inside])) % 360.0
    d = direction_from_angles(az, 90.0 - zen)
    nearest = np.argmax(d @ dome.directions.T, axis=1)
    out[inside] = values[nearest]
    return out


def shadow_raster(horizontal: np.ndarray) -> np.ndarray:
    """Ground field with north at the top (ground rows increase northward)."""
    return np.asarray(horizontal)[::-1]


def _save(fig, path) -> None:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def sky_figure(dome: SkyDome, path: str | Path, title: str = "") -> None:
    img = sky_raster(dome)
    fig, ax = plt.subplots(figsize=(5, 4.4))
    im = ax.imshow(img, cmap=COLORMAP, extent=(-90, 90, -90, 90))
    ax.set_xlabel("east  (zenith angle, deg)")
    ax.set_ylabel("north  (zenith angle, deg)")
    ax.set_title(title or f"sky dome, {len(dome)} nodes")
    fig.colorbar(im, ax=ax, label="W/m2" if dome.mode == "instantaneous" else "J/m2")
    _save(fig, path)


def shadow_figure(horizontal: np.ndarray, ground, path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 4.4))
    extent = (ground.x0, ground.x0 + ground.nx * ground.cell, ground.y0, ground.y0 + ground.ny * ground.cell)
    im = ax.imshow(shadow_raster(horizontal), cmap=COLORMAP, extent=extent)
    ax.set_xlabel("x (m, east)")
    ax.set_ylabel("y (m, north)")
    ax.set_title(title or "light reaching the ground")
    fig.colorbar(im, ax=ax, label="horizontal irradiance")
    _save(fig, path)


def scatter_figure(measured, modelled, report, path: str | Path, title: str = "") -> None:
    x = np.asarray(measured, dtype=float)
    y = np.asarray(modelled, dtype=float)
    fig, ax = plt.subplots(figsize=(4.6, 4.6))
    ax.scatter(x, y, s=8, alpha=0.6)
    top = float(max(x.max(initial=0.0), y.max(initial=0.0))) * 1.05 or 1.0
    line = np.array([0.0, top])
    ax.plot(line, line, color="0.6", lw=0.8, ls="--")
    ax.plot(line, report.slope * line + report.intercept, color="C3", lw=1.2)
    ax.set_xlim(0, top)
    ax.set_ylim(0, top)
    ax.set_xlabel("measured PAR (umol/s/m2)")
    ax.set_ylabel("modelled PAR (umol/s/m2)")
    ax.set_title(title or f"R2={report.r_squared:.3f} RMSE={report.rmse:.1f} n={report.n}")
    _save(fig, path)


def offset_figure(heatmap, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4.4))
    step = heatmap.dx[1] - heatmap.dx[0] if len(heatmap.dx) > 1 else 1.0
    extent = (
        heatmap.dx[0] - step / 2, heatmap.dx[-1] + step / 2,
        heatmap.dy[0] - step / 2, heatmap.dy[-1] + step / 2,
    )
    im = ax.imshow(heatmap.rmse, cmap=COLORMAP, origin="lower", extent=extent)
    bx, by = heatmap.best
    ax.plot([bx], [by], marker="x", color="w")
    ax.set_xlabel("offset x (m)")
    ax.set_ylabel("offset y (m)")
    ax.set_title(f"RMSE by ceptometer offset, best ({bx:g}, {by:g})")
    fig.colorbar(im, ax=ax, label="RMSE")
    _save(fig, path)
