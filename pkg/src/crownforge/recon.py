"""Spectral Poisson surface reconstruction on a periodic grid.

Oriented points are trilinearly splatted into a normal field V, the
Poisson equation lap(chi) = div(V) is solved in the Fourier domain with
a Gaussian low-pass, and the indicator is contoured at the mean of chi
sampled back at the input points. Padding keeps the shape away from the
periodic wrap; the output is watertight even when the input surface was
open, which is exactly the overextension the trim stage removes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from skimage.measure import marching_cubes as _mc

from .errors import IsoOutOfRangeError, MissingNormalsError
from .mesh import TriMesh, collapse_tiny_faces


@dataclass
class VectorGrid:
    """Cubic R^3 -> R^3 field (splatted normals) with its placement."""

    values: np.ndarray
    origin: np.ndarray
    extent: np.ndarray

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def cell_size(self) -> float:
        return float(self.extent[0]) / self.resolution


@dataclass
class ScalarGrid:
    """Cubic R^3 -> R field (indicator chi) with its placement."""

    values: np.ndarray
    origin: np.ndarray
    extent: np.ndarray
    iso_value: Optional[float] = None

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def cell_size(self) -> float:
        return float(self.extent[0]) / self.resolution


def _grid_frame(points, resolution, padding):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    size = max(float((hi - lo).max()), 1e-6)
    if 2 * padding >= resolution:
        raise ValueError(f"padding {padding} too large for resolution {resolution}")
    extent = size * resolution / (resolution - 2 * padding)
    center = (lo + hi) / 2.0
    origin = center - extent / 2.0
    return origin, np.full(3, extent), extent / resolution


def _trilinear_scatter(points, values, origin, cell, resolution):
    """Scatter per-point vectors into the 8 cells around each point."""
    g = (points - origin) / cell - 0.5
    i0 = np.floor(g).astype(np.int64)
    f = g - i0
    out = np.zeros((resolution, resolution, resolution, values.shape[1]))
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                w = (np.where(dx, f[:, 0], 1 - f[:, 0])
                     * np.where(dy, f[:, 1], 1 - f[:, 1])
                     * np.where(dz, f[:, 2], 1 - f[:, 2]))
                idx = (i0 + [dx, dy, dz]) % resolution
                np.add.at(out, (idx[:, 0], idx[:, 1], idx[:, 2]), w[:, None] * values)
    return out


def _trilinear_gather(grid, points, origin, cell, resolution):
    g = (points - origin) / cell - 0.5
    i0 = np.floor(g).astype(np.int64)
    f = g - i0
    acc = np.zeros(len(points))
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                w = (np.where(dx, f[:, 0], 1 - f[:, 0])
                     * np.where(dy, f[:, 1], 1 - f[:, 1])
                     * np.where(dz, f[:, 2], 1 - f[:, 2]))
                idx = (i0 + [dx, dy, dz]) % resolution
                acc += w * grid[idx[:, 0], idx[:, 1], idx[:, 2]]
    return acc


def rasterize_oriented_points(points, normals, resolution=128, padding=2) -> VectorGrid:
    """Trilinearly splat unit normals into a cubic grid around the points.

    The grid frame is the bounding-box center with a cubic extent sized so
    at least `padding` cells separate the points from the domain boundary
    on the longest axis.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if normals is None:
        raise MissingNormalsError("rasterization requires per-point normals")
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if len(normals) != len(points):
        raise MissingNormalsError(
            f"{len(normals)} normals for {len(points)} points")
    norms = np.linalg.norm(normals, axis=1)
    if len(normals) and np.abs(norms - 1.0).max() > 1e-6:
        raise ValueError("normals must be unit length within 1e-6")
    origin, extent, cell = _grid_frame(points, resolution, padding)
    values = _trilinear_scatter(points, normals, origin, cell, resolution)
    return VectorGrid(values=values, origin=origin, extent=extent)


def poisson_solve(vgrid: VectorGrid, gaussian_sigma=2.0, points=None) -> ScalarGrid:
    """Solve lap(chi) = div(V) spectrally with Gaussian smoothing.

    chi_hat(k) = i k . V_hat(k) * g_sigma(k) / |k|^2 with chi_hat(0) = 0.
    The iso value is the mean of chi sampled trilinearly at `points`;
    without points it falls back to weighting cells by |V|, which agrees
    when local normals do not cancel.
    """
    r = vgrid.resolution
    cell = vgrid.cell_size
    k = np.fft.fftfreq(r, d=cell)
    kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
    vhat = np.fft.fftn(vgrid.values, axes=(0, 1, 2))
    div = 2j * np.pi * (kx * vhat[..., 0] + ky * vhat[..., 1] + kz * vhat[..., 2])
    k2 = (2 * np.pi) ** 2 * (kx ** 2 + ky ** 2 + kz ** 2)
    lowpass = np.exp(-2 * (np.pi * gaussian_sigma * cell) ** 2 * (kx ** 2 + ky ** 2 + kz ** 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        chihat = np.where(k2 > 0, div * lowpass / k2, 0.0)
    chi = np.real(np.fft.ifftn(chihat, axes=(0, 1, 2)))
    if points is not None:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        iso = float(_trilinear_gather(chi, points, vgrid.origin, cell, r).mean())
    else:
        w = np.linalg.norm(vgrid.values, axis=3)
        total = w.sum()
        iso = float((w * chi).sum() / total) if total > 0 else 0.0
    return ScalarGrid(values=chi, origin=vgrid.origin.copy(),
                      extent=vgrid.extent.copy(), iso_value=iso)


def marching_cubes(grid: ScalarGrid) -> TriMesh:
    """Contour a scalar grid at its iso value.

    Cell values are treated as samples at cell centers, so output
    vertices carry the half-cell offset back into world coordinates.
    """
    if grid.iso_value is None:
        raise IsoOutOfRangeError("grid has no iso value")
    vmin = float(grid.values.min())
    vmax = float(grid.values.max())
    if not vmin < grid.iso_value < vmax:
        raise IsoOutOfRangeError(
            f"iso {grid.iso_value} outside open range ({vmin}, {vmax})")
    cell = grid.cell_size
    verts, faces, _, _ = _mc(grid.values, level=grid.iso_value, spacing=(cell, cell, cell))
    verts = verts + grid.origin + cell / 2.0
    return TriMesh(verts.astype(np.float64), np.ascontiguousarray(faces.astype(np.int64)))


def reconstruct(points, normals, resolution=128, sigma=2.0, padding=2) -> TriMesh:
    """Watertight mesh from oriented points: splat, solve, contour.

    Marching cubes occasionally emits slivers thinner than float
    roundoff; those are edge-collapsed away so downstream trimming never
    sees exactly degenerate faces.
    """
    vgrid = rasterize_oriented_points(points, normals, resolution=resolution, padding=padding)
    sgrid = poisson_solve(vgrid, gaussian_sigma=sigma, points=points)
    mesh = marching_cubes(sgrid)
    return collapse_tiny_faces(mesh)
