"""Trim a watertight reconstructed crown back to the cervical margin.

The margin's 1,000 resampled points and their centroid define a triangle
fan whose normals follow the tooth growth direction. Faces whose
centroid falls below that fan are removed, the largest remaining piece
is kept, and its boundary vertices are welded onto the margin polyline,
collapsing any face the projection flattens. The result is an open
genus-zero shell that terminates exactly on the margin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components
from scipy.spatial import cKDTree

from .errors import DegenerateFanError, DisconnectedWarning, NoIntersectionError
from .margin import MarginCurve
from .mesh import TriMesh, _boundary_edge_walk


@dataclass
class CutSurface:
    """Margin triangle fan with growth-aligned normals.

    fan_triangles holds one (v0, v1, apex) triangle per consecutive
    resampled pair, shape (N, 3, 3); oriented_normals are unit normals
    with positive dot product against growth_dir.
    """

    fan_triangles: np.ndarray
    oriented_normals: np.ndarray
    growth_dir: np.ndarray


def build_cut_surface(margin: MarginCurve) -> CutSurface:
    """Fan the resampled margin points to their centroid."""
    pts = margin.resampled
    gdir = margin.growth_dir
    if np.linalg.norm(pts - margin.centroid, axis=1).min() < 1e-9:
        raise DegenerateFanError("margin centroid coincides with a margin point")
    v0 = pts
    v1 = np.roll(pts, -1, axis=0)
    v2 = np.broadcast_to(margin.centroid, v0.shape)
    fn = np.cross(v1 - v0, v2 - v0)
    nrm = fn / np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-30)
    dots = nrm @ gdir
    if np.any(dots == 0.0):
        raise DegenerateFanError("fan triangle exactly parallel to growth_dir")
    flip = dots < 0
    nrm[flip] = -nrm[flip]
    tris = np.stack([v0, v1, np.ascontiguousarray(v2)], axis=1)
    return CutSurface(fan_triangles=tris, oriented_normals=nrm, growth_dir=gdir)


def _closest_pt_kernel(q, a, ab, ac):
    """Closest point on triangles (a, a+ab, a+ac) for queries q, broadcast."""
    bc = ac - ab
    ap = q - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = ap - ab
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = ap - ac
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    denom = np.where(denom == 0, 1.0, denom)
    v = (vb / denom)[..., None]
    w = (vc / denom)[..., None]
    p = a + v * ab + w * ac
    sbc = (d4 - d3) + (d5 - d6)
    t_bc = np.clip((d4 - d3) / np.where(sbc == 0, 1.0, sbc), 0, 1)[..., None]
    m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    p = np.where(m[..., None], a + ab + t_bc * bc, p)
    t_ac = np.clip(d2 / np.where(d2 - d6 == 0, 1.0, d2 - d6), 0, 1)[..., None]
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    p = np.where(m[..., None], a + t_ac * ac, p)
    t_ab = np.clip(d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0, 1)[..., None]
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    p = np.where(m[..., None], a + t_ab * ab, p)
    p = np.where(((d1 <= 0) & (d2 <= 0))[..., None], a + 0 * p, p)
    p = np.where(((d3 >= 0) & (d4 <= d3))[..., None], a + ab + 0 * p, p)
    p = np.where(((d6 >= 0) & (d5 <= d6))[..., None], a + ac + 0 * p, p)
    return p


def signed_height(points, surface: CutSurface, chunk=256):
    """Height of points above the cut surface, exhaustive over all triangles.

    For each point the fan triangle with the nearest closest-point wins
    (lowest index on ties) and the height is the displacement from that
    closest point projected on the triangle's oriented normal. Positive
    means the crown side.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    tris = surface.fan_triangles
    a = tris[:, 0]
    ab = tris[:, 1] - tris[:, 0]
    ac = tris[:, 2] - tris[:, 0]
    nrm = surface.oriented_normals
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        q = pts[s:s + chunk]
        p = _closest_pt_kernel(q[:, None, :], a[None], ab[None], ac[None])
        d2 = ((q[:, None, :] - p) ** 2).sum(-1)
        j = d2.argmin(axis=1)
        rows = np.arange(len(q))
        out[s:s + chunk] = ((q - p[rows, j]) * nrm[j]).sum(-1)
    return float(out[0]) if single else out


def _signed_height_fast(points, surface: CutSurface, k=8):
    """signed_height restricted to fan triangles adjacent to the k nearest
    rim points. Signs match the exhaustive scan; far from the surface the
    magnitude can differ where sectors tie through the shared apex."""
    rim = surface.fan_triangles[:, 0]
    apex = surface.fan_triangles[0, 2]
    nrm = surface.oriented_normals
    n = len(rim)
    k = min(k, n)
    tree = cKDTree(rim)
    _, nidx = tree.query(points, k=k)
    nidx = nidx.reshape(len(points), k)
    cand = np.concatenate([(nidx - 1) % n, nidx], axis=1)
    b = np.roll(rim, -1, axis=0)
    tri_a = rim[cand]
    ab = (b - rim)[cand]
    ac = (apex[None] - rim)[cand]
    p = _closest_pt_kernel(points[:, None, :], tri_a, ab, ac)
    dd = ((points[:, None, :] - p) ** 2).sum(-1)
    j = dd.argmin(axis=1)
    rows = np.arange(len(points))
    return ((points - p[rows, j]) * nrm[cand[rows, j]]).sum(-1)


def project_to_polyline(points, polyline):
    """Closest point on the closed polyline's segments for each query."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    a = np.asarray(polyline, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-30)
    out = np.empty_like(pts)
    for s in range(0, len(pts), 1024):
        q = pts[s:s + 1024]
        t = ((q[:, None, :] - a[None]) * ab[None]).sum(-1) / denom[None]
        t = np.clip(t, 0.0, 1.0)
        cp = a[None] + t[..., None] * ab[None]
        d2 = ((q[:, None, :] - cp) ** 2).sum(-1)
        j = d2.argmin(axis=1)
        out[s:s + 1024] = cp[np.arange(len(q)), j]
    return out


def _project_and_collapse(v, f, polyline, area_eps):
    """Weld boundary vertices onto the polyline, collapsing flattened faces."""
    for _ in range(8):
        loops = _boundary_edge_walk(f)
        if loops:
            bverts = np.unique(np.concatenate(loops))
            v[bverts] = project_to_polyline(v[bverts], polyline)
        fv = v[f]
        areas = 0.5 * np.linalg.norm(np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0]), axis=1)
        bad = np.where(areas < area_eps)[0]
        if len(bad) == 0:
            break
        remap = np.arange(len(v))
        for bi in bad:
            tri = f[bi]
            p = v[tri]
            cand = (
                (np.linalg.norm(p[0] - p[1]), tri[0], tri[1]),
                (np.linalg.norm(p[1] - p[2]), tri[1], tri[2]),
                (np.linalg.norm(p[2] - p[0]), tri[2], tri[0]),
            )
            _, ea, eb = min(cand)
            ra, rb = remap[ea], remap[eb]
            lo, hi = (ra, rb) if ra < rb else (rb, ra)
            remap[remap == hi] = lo
        f = remap[f]
        f = f[(f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 2] != f[:, 0])]
    return f


def postprocess_crown(watertight: TriMesh, margin: MarginCurve,
                      area_eps=1e-8, fast=True) -> TriMesh:
    """Open the watertight crown along the margin.

    Alternates three steps to a fixed point: remove faces whose centroid
    lies below the cut surface, keep the largest remaining component
    (warning on splits), and weld boundary vertices onto the margin
    polyline, collapsing faces the projection flattens. Welding can dip
    a rim-adjacent centroid below a non-planar fan, so classification
    reruns until nothing is below; that makes a second application a
    no-op. `fast` selects the pruned height kernel; set False to
    classify with the exhaustive scan.
    """
    surface = build_cut_surface(margin)
    v = watertight.vertices.copy()
    f = watertight.faces
    nv = watertight.n_vertices
    for iteration in range(32):
        cents = v[f].mean(axis=1)
        h = _signed_height_fast(cents, surface) if fast else signed_height(cents, surface)
        keep = h >= 0
        n_removed = int((~keep).sum())
        if n_removed == 0:
            if iteration > 0:
                break
            hv = _signed_height_fast(v, surface) if fast else signed_height(v, surface)
            if np.abs(hv).min() > 1e-6:
                # nothing below and no vertex touching: the surface misses
                # the mesh. An already-trimmed crown re-trims as a no-op.
                raise NoIntersectionError("cut surface removed no face; it misses the mesh")
        if n_removed == len(f):
            raise NoIntersectionError("cut surface removed every face; mesh lies below it")
        f = f[keep]
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nv, nv))
        _, lab = _csgraph_components(g + g.T, directed=False)
        flab = lab[f[:, 0]]
        vals, cnts = np.unique(flab, return_counts=True)
        if len(vals) > 1:
            warnings.warn(f"cut split the crown side into {len(vals)} islands; keeping the largest",
                          DisconnectedWarning)
            f = f[flab == vals[cnts.argmax()]]
        f = _project_and_collapse(v, f, margin.resampled, area_eps)
        if len(f) == 0:
            raise NoIntersectionError("trimming consumed every face")
    used = np.unique(f)
    remap = np.full(len(v), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(
        v[used],
        remap[f],
        None if watertight.labels is None else watertight.labels[used],
        None if watertight.normals is None else watertight.normals[used],
        None if watertight.curvature is None else watertight.curvature[used],
    )
