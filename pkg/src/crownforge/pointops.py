"""Point-cloud primitives: nearest neighbors, FPS, voxelization, downsampling.

All tie-breaking resolves to the lowest index so results are identical
across platforms and worker counts. Nearest-neighbor queries run on a
KD-tree but recompute distances from the returned indices and re-resolve
near-ties by exhaustive scan, so output matches a brute-force O(NM)
scan bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptySetError, EmptyTargetError, KTooLargeError, LengthMismatchError


@dataclass
class LabeledPointCloud:
    """Points with optional per-point label, normal, curvature, margin flag.

    Parameters
    ----------
    points : (N, 3) float array, mm.
    labels : optional (N,) int array in {0, 1}.
    normals : optional (N, 3) unit vectors.
    curvature : optional (N,) floats in [0, 1].
    margin_flags : optional (N,) int array in {0, 1}.
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    curvature: Optional[np.ndarray] = None
    margin_flags: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise LengthMismatchError(f"points must be (N, 3), got {self.points.shape}")
        n = len(self.points)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (n,):
                raise LengthMismatchError(f"labels shape {self.labels.shape} != ({n},)")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != (n, 3):
                raise LengthMismatchError(f"normals shape {self.normals.shape} != ({n}, 3)")
            norms = np.linalg.norm(self.normals, axis=1)
            if n and np.abs(norms - 1.0).max() > 1e-6:
                raise ValueError("normals must be unit length within 1e-6")
        if self.curvature is not None:
            self.curvature = np.asarray(self.curvature, dtype=np.float64)
            if self.curvature.shape != (n,):
                raise LengthMismatchError(f"curvature shape {self.curvature.shape} != ({n},)")
            if n and (self.curvature.min() < 0.0 or self.curvature.max() > 1.0):
                raise ValueError("curvature must lie in [0, 1]")
        if self.margin_flags is not None:
            self.margin_flags = np.asarray(self.margin_flags, dtype=np.int32)
            if self.margin_flags.shape != (n,):
                raise LengthMismatchError(
                    f"margin_flags shape {self.margin_flags.shape} != ({n},)")

    @property
    def n_points(self) -> int:
        return len(self.points)

    def gather(self, indices) -> "LabeledPointCloud":
        """New cloud containing the given point indices, attributes carried."""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledPointCloud(
            points=self.points[idx],
            labels=None if self.labels is None else self.labels[idx],
            normals=None if self.normals is None else self.normals[idx],
            curvature=None if self.curvature is None else self.curvature[idx],
            margin_flags=None if self.margin_flags is None else self.margin_flags[idx],
        )


@dataclass
class VoxelMap:
    """Mapping from integer cell index to the point indices inside the cell."""

    cell_size: float
    origin: np.ndarray
    cells: dict = field(default_factory=dict)


def nearest_neighbor(query, target):
    """Closest target point for each query point.

    Returns ``(indices, distances)``. Ties resolve to the lowest target
    index; distances are recomputed from the winning index in float64 so
    the result is bitwise identical to an exhaustive scan.
    """
    query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(target) == 0:
        raise EmptyTargetError("nearest_neighbor: empty target set")
    if len(query) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
    tree = cKDTree(target)
    if len(target) == 1:
        idx = np.zeros(len(query), dtype=np.int64)
    else:
        d2, idx2 = tree.query(query, k=2)
        idx = idx2[:, 0].astype(np.int64)
        # The tree's internal tie order is arbitrary; rows where the two
        # best candidates are within roundoff get an exhaustive rescan.
        close = d2[:, 1] - d2[:, 0] <= 1e-9 * np.maximum(1.0, d2[:, 0])
        if close.any():
            sub = query[close]
            dist2 = ((sub[:, None, :] - target[None, :, :]) ** 2).sum(axis=2)
            idx[close] = dist2.argmin(axis=1)
    # norm of the winning difference, not the tree's own distance, so the
    # value is bitwise reproducible regardless of tree layout
    dist = np.linalg.norm(query - target[idx], axis=1)
    return idx, dist


def farthest_point_sample(points, k, start=0):
    """Greedy max-min subset of `k` indices beginning at `start`.

    Each step picks the point farthest from the selected set; distance
    ties resolve to the lowest index.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n == 0:
        raise EmptySetError("farthest_point_sample: empty input")
    if not 1 <= k <= n:
        raise KTooLargeError(f"k={k} outside [1, {n}]")
    if not 0 <= start < n:
        raise KTooLargeError(f"start={start} outside [0, {n})")
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    diff = points - points[start]
    mind2 = np.einsum("ij,ij->i", diff, diff)
    for i in range(1, k):
        nxt = int(np.argmax(mind2))
        chosen[i] = nxt
        diff = points - points[nxt]
        d2 = np.einsum("ij,ij->i", diff, diff)
        np.minimum(mind2, d2, out=mind2)
    return chosen


def voxelize(cloud, cell_size):
    """Bin points into cubic cells of `cell_size` anchored at the min corner.

    Cell index is ``floor((p - origin) / cell_size)``; a point exactly on
    a boundary lands in the higher-index cell. Cells iterate in
    lexicographic index order.
    """
    if cell_size <= 0:
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    points = cloud.points if isinstance(cloud, LabeledPointCloud) else np.asarray(cloud, np.float64)
    if len(points) == 0:
        raise EmptySetError("voxelize: empty cloud")
    origin = points.min(axis=0)
    idx = np.floor((points - origin) / cell_size).astype(np.int64)
    uniq, inverse = np.unique(idx, axis=0, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(uniq))
    splits = np.cumsum(counts)[:-1]
    groups = np.split(order, splits)
    cells = {tuple(int(c) for c in key): grp for key, grp in zip(uniq, groups)}
    return VoxelMap(cell_size=float(cell_size), origin=origin, cells=cells)


def downsample_fraction(cloud, fraction, start=0):
    """FPS downsample a cloud to 1/2 or 1/4 of its points, attributes carried."""
    if not np.isclose(fraction, 0.5) and not np.isclose(fraction, 0.25):
        raise ValueError(f"fraction must be 1/2 or 1/4, got {fraction}")
    k = int(round(cloud.n_points * fraction))
    idx = farthest_point_sample(cloud.points, k, start=start)
    return cloud.gather(idx)


def estimate_normals_pca(points, k=16, orient_origin=None):
    """Per-point unit normals from the smallest PCA axis of k neighborhoods.

    Signs are flipped so each normal points away from `orient_origin`
    (cloud centroid by default), which suits convex-ish crowns.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n == 0:
        raise EmptySetError("estimate_normals_pca: empty input")
    k = min(k, n)
    tree = cKDTree(points)
    _, nbr = tree.query(points, k=k)
    nbr = nbr.reshape(n, k)
    patches = points[nbr]
    patches = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", patches, patches)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    if orient_origin is None:
        orient_origin = points.mean(axis=0)
    outward = points - np.asarray(orient_origin, dtype=np.float64)
    flip = np.einsum("ij,ij->i", normals, outward) < 0.0
    normals[flip] *= -1.0
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-300)
    return normals
