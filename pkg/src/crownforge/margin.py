"""Cervical margin extraction from a labeled intraoral scan.

The pipeline: keep faces whose three vertices carry the abutment label,
reduce to the largest connected component, walk its longest boundary
loop, fit a periodic cubic B-spline, and resample 1,000 points uniform
in arc length. The smoothing budget is scaled by a noise estimate from
third differences of the loop so the same `smoothing` value behaves
consistently across loop densities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import eigh

from .errors import (
    DegenerateLoopError,
    LengthMismatchError,
    MultipleLoopsWarning,
    NoAbutmentFacesError,
)
from .mesh import TriMesh, boundary_loops, connected_components

RESAMPLE_COUNT = 1000


@dataclass
class MarginCurve:
    """Closed margin curve with a fixed-cardinality uniform resampling.

    Attributes
    ----------
    control_polyline : (M, 3) ordered closed loop the fit consumed.
    resampled : (1000, 3) points uniform in arc length along the fit.
    centroid : mean of the resampled points.
    growth_dir : unit normal of the best-fit margin plane, pointing
        toward the crown side.
    """

    control_polyline: np.ndarray
    resampled: np.ndarray
    centroid: np.ndarray
    growth_dir: np.ndarray

    def __post_init__(self):
        self.control_polyline = np.asarray(self.control_polyline, dtype=np.float64).reshape(-1, 3)
        self.resampled = np.asarray(self.resampled, dtype=np.float64)
        if self.resampled.shape != (RESAMPLE_COUNT, 3):
            raise LengthMismatchError(
                f"resampled must be ({RESAMPLE_COUNT}, 3), got {self.resampled.shape}")
        self.centroid = np.asarray(self.centroid, dtype=np.float64).reshape(3)
        self.growth_dir = np.asarray(self.growth_dir, dtype=np.float64).reshape(3)
        n = np.linalg.norm(self.growth_dir)
        if not 1.0 - 1e-6 <= n <= 1.0 + 1e-6:
            raise ValueError(f"growth_dir must be unit length, |g| = {n}")


def _loop_length(points):
    closed = np.vstack([points, points[:1]])
    return float(np.linalg.norm(np.diff(closed, axis=0), axis=1).sum())


def extract_abutment_submesh(mesh: TriMesh) -> TriMesh:
    """Faces whose three vertices are all labeled 1, largest component only."""
    if mesh.labels is None:
        raise NoAbutmentFacesError("extract_abutment_submesh: mesh carries no label array")
    mask = mesh.labels[mesh.faces].all(axis=1)
    if not mask.any():
        raise NoAbutmentFacesError(
            "extract_abutment_submesh: no face has all three vertices labeled 1")
    sub = mesh.submesh(np.flatnonzero(mask))
    comps = connected_components(sub)
    if len(comps) > 1:
        sub = sub.submesh(comps[0])
    return sub


def _periodic_fit(pts, budget):
    """Penalized periodic cubic B-spline through `pts`, residual == `budget`.

    One basis function per input point, knots at the chord-length
    parameters, coefficient roughness penalized by periodic second
    differences. The penalty weight is solved so the squared residual
    meets the budget; because every eigen-mode shrinks monotonically
    with the weight, raising the budget can only lower the curve's
    bending energy, never raise it.

    Returns a callable mapping parameters in [0, 1] to curve points.
    """
    m = len(pts)
    seg = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
    if np.any(seg <= 0.0):
        raise DegenerateLoopError("loop repeats consecutive points")
    u = np.concatenate([[0.0], np.cumsum(seg[:-1])]) / seg.sum()
    knots = np.concatenate([u[-3:] - 1.0, u, u[:4] + 1.0])
    design = BSpline.design_matrix(u, knots, 3).toarray()
    basis = design[:, :m].copy()
    basis[:, :3] += design[:, m:m + 3]
    if budget <= 1e-30:
        try:
            coef = np.linalg.solve(basis, pts)
        except np.linalg.LinAlgError as exc:
            raise DegenerateLoopError(f"interpolation system singular: {exc}") from exc
    else:
        idx = np.arange(m)
        d2 = np.zeros((m, m))
        d2[idx, idx] = -2.0
        d2[idx, (idx + 1) % m] = 1.0
        d2[idx, (idx - 1) % m] = 1.0
        penalty = d2.T @ d2
        gram = basis.T @ basis
        rhs = basis.T @ pts
        try:
            lam, modes = eigh(penalty, gram)
        except np.linalg.LinAlgError as exc:
            raise DegenerateLoopError(f"periodic spline fit failed: {exc}") from exc
        lam = np.maximum(lam, 0.0)
        w2 = ((modes.T @ rhs) ** 2).sum(axis=1)

        def residual(mu):
            shrink = mu * lam / (1.0 + mu * lam)
            return float((w2 * shrink ** 2).sum())

        if residual(1e18) <= budget:
            mu = 1e18
        else:
            lo, hi = -18.0, 18.0
            for _ in range(120):
                mid = 0.5 * (lo + hi)
                if residual(10.0 ** mid) < budget:
                    lo = mid
                else:
                    hi = mid
            mu = 10.0 ** (0.5 * (lo + hi))
        coef = modes @ ((modes.T @ rhs) / (1.0 + mu * lam)[:, None])
    return BSpline(knots, np.vstack([coef, coef[:3]]), 3)


def fit_closed_bspline(points, smoothing=1.0, orient_point=None) -> MarginCurve:
    """Periodic cubic B-spline fit resampled at 1,000 arc-length stations.

    Parameters
    ----------
    points : (M, 3) ordered closed polyline, M >= 8. A repeated closing
        point is tolerated and dropped.
    smoothing : non-negative residual budget multiplier. The fit is a
        least-squares spline whose total squared residual equals
        ``smoothing * M * sigma^2``, where sigma^2 is a per-point noise
        variance estimated from periodic third differences; 1.0 absorbs
        roughly the input's own noise and 0.0 interpolates.
    orient_point : optional 3D point; growth_dir is signed so this point
        lies on its positive side. Without it the sign is canonicalized
        so the largest-magnitude component is positive.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    m = len(pts)
    if m < 8:
        raise DegenerateLoopError(f"closed fit needs >= 8 points, got {m}")
    if smoothing < 0:
        raise ValueError(f"smoothing must be non-negative, got {smoothing}")
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-8 * max(sv[0], 1e-30):
        raise DegenerateLoopError("input points are nearly collinear")
    # Third differences annihilate locally cubic structure; for iid noise
    # of variance s^2 their squared norm sums to 20*m*s^2.
    d3 = np.diff(np.vstack([pts, pts[:3]]), n=3, axis=0)
    sigma2 = float((d3 ** 2).sum()) / (20.0 * m)
    spline = _periodic_fit(pts, smoothing * m * sigma2)
    dense_u = np.linspace(0.0, 1.0, 20 * RESAMPLE_COUNT, endpoint=False)
    dense = spline(dense_u)
    seg = np.linalg.norm(np.diff(np.vstack([dense, dense[:1]]), axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise DegenerateLoopError("fitted curve has zero length")
    stations = total * np.arange(RESAMPLE_COUNT) / RESAMPLE_COUNT
    uu = np.interp(stations, cum[:-1], dense_u)
    resampled = spline(uu)
    centroid = resampled.mean(axis=0)
    _, _, vt = np.linalg.svd(resampled - centroid)
    gdir = vt[2]
    if orient_point is not None:
        if np.dot(np.asarray(orient_point, np.float64) - centroid, gdir) < 0:
            gdir = -gdir
    elif gdir[np.argmax(np.abs(gdir))] < 0:
        gdir = -gdir
    gdir = gdir / np.linalg.norm(gdir)
    return MarginCurve(control_polyline=pts, resampled=resampled,
                       centroid=centroid, growth_dir=gdir)


def extract_margin(mesh: TriMesh, smoothing=1.0) -> MarginCurve:
    """Margin curve of a labeled scan: label boundary, smoothed, resampled.

    When the abutment submesh has several boundary loops the geometrically
    longest one is fitted and the others are reported in a
    MultipleLoopsWarning. growth_dir points from the margin plane toward
    the abutment side.
    """
    sub = extract_abutment_submesh(mesh)
    loops = boundary_loops(sub)
    if not loops:
        raise DegenerateLoopError("abutment submesh has no boundary loop")
    if len(loops) > 1:
        lengths = sorted((_loop_length(sub.vertices[lp]) for lp in loops), reverse=True)
        warnings.warn(
            f"abutment submesh has {len(loops)} boundary loops "
            f"(lengths {', '.join(f'{v:.3f}' for v in lengths)} mm); keeping the longest",
            MultipleLoopsWarning)
    loop = max(loops, key=lambda lp: _loop_length(sub.vertices[lp]))
    return fit_closed_bspline(sub.vertices[loop], smoothing=smoothing,
                              orient_point=sub.vertices.mean(axis=0))


def seal_disk_points(curve: MarginCurve, count, offset=0.6, seed=0):
    """Oriented samples of a disk closing the margin ring from below.

    The disk is the margin fan translated by ``-offset * growth_dir``;
    normals face away from the crown. Feeding these together with crown
    samples into reconstruction pins the otherwise free membrane under
    the rim so the output stays a clean closed surface, and the seal is
    later removed by trimming.

    Returns ``(points, normals)``, both (count, 3).
    """
    gdir = curve.growth_dir
    v0 = curve.resampled - gdir * offset
    v1 = np.roll(v0, -1, axis=0)
    c = curve.centroid - gdir * offset
    v2 = np.broadcast_to(c, v0.shape)
    fn = np.cross(v1 - v0, v2 - v0)
    flip = (fn @ gdir) > 0
    fn[flip] = -fn[flip]
    areas = 0.5 * np.linalg.norm(fn, axis=1)
    nrm = fn / np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-30)
    rng = np.random.default_rng(seed)
    fidx = rng.choice(len(v0), size=count, p=areas / areas.sum())
    r1, r2 = rng.random(count), rng.random(count)
    su = np.sqrt(r1)
    bary = np.stack([1 - su, su * (1 - r2), su * r2], axis=1)
    pts = bary[:, 0:1] * v0[fidx] + bary[:, 1:2] * v1[fidx] + bary[:, 2:3] * v2[fidx]
    return pts, nrm[fidx]
