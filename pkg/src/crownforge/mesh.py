"""Triangle mesh container and topology/curvature operations.

Meshes are vertex/face index arrays with optional per-vertex attributes
(labels, normals, curvature). All coordinates are float64 millimeters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components
from scipy.spatial import cKDTree

from .errors import DegenerateStarWarning, NonManifoldEdgeError, ShapeMismatchError


class TriMesh:
    """Indexed triangle mesh with optional per-vertex attributes.

    Parameters
    ----------
    vertices : (V, 3) float array
        Vertex coordinates in mm.
    faces : (F, 3) int array
        Vertex indices, counterclockwise when viewed from outside.
    labels : (V,) int array, optional
        Per-vertex segmentation labels (abutment = 1).
    normals : (V, 3) float array, optional
        Unit vertex normals.
    curvature : (V,) float array, optional
        Normalized curvature in [0, 1].

    Faces with a repeated vertex index are dropped at construction.
    """

    def __init__(self, vertices, faces, labels=None, normals=None, curvature=None):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ShapeMismatchError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.size and (faces.ndim != 2 or faces.shape[1] != 3):
            raise ShapeMismatchError(f"faces must be (F, 3), got {faces.shape}")
        faces = faces.reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ShapeMismatchError("face indices out of vertex range")
        ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 2] != faces[:, 0])
        self.vertices = vertices
        self.faces = np.ascontiguousarray(faces[ok])
        self.labels = self._check_attr(labels, np.int32, (len(vertices),), "labels")
        self.normals = self._check_attr(normals, np.float64, (len(vertices), 3), "normals")
        self.curvature = self._check_attr(curvature, np.float64, (len(vertices),), "curvature")

    def _check_attr(self, arr, dtype, shape, name):
        if arr is None:
            return None
        arr = np.asarray(arr, dtype=dtype)
        if arr.shape != shape:
            raise ShapeMismatchError(f"{name} must have shape {shape}, got {arr.shape}")
        return arr

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def copy(self):
        return TriMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.labels is None else self.labels.copy(),
            None if self.normals is None else self.normals.copy(),
            None if self.curvature is None else self.curvature.copy(),
        )

    def face_corner_vertices(self):
        """Return (F, 3, 3) vertex coordinates per face corner."""
        return self.vertices[self.faces]

    def face_normals(self, normalize=True):
        fv = self.vertices[self.faces]
        n = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
        if normalize:
            ln = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.maximum(ln, 1e-300)
        return n

    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals(normalize=False), axis=1)

    def face_centroids(self):
        return self.vertices[self.faces].mean(axis=1)

    def edges_unique(self):
        """Sorted unique undirected edges and their face-use counts."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def mean_edge_length(self):
        edges, _ = self.edges_unique()
        if len(edges) == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]], axis=1).mean())

    def submesh(self, face_indices):
        """Extract faces by index, compacting vertices and gathering attributes."""
        sub_f = self.faces[np.asarray(face_indices)]
        used = np.unique(sub_f)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriMesh(
            self.vertices[used],
            remap[sub_f],
            None if self.labels is None else self.labels[used],
            None if self.normals is None else self.normals[used],
            None if self.curvature is None else self.curvature[used],
        )

    def signed_volume(self):
        """Signed volume of the enclosed region (positive for outward orientation)."""
        fv = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", fv[:, 0], np.cross(fv[:, 1], fv[:, 2])).sum() / 6.0)


@dataclass
class TopologyReport:
    """Summary counts used by validity checks and the pipeline report."""

    vertex_count: int
    edge_count: int
    face_count: int
    euler_characteristic: int
    boundary_loop_count: int
    connected_component_count: int
    is_edge_manifold: bool
    is_watertight: bool


def _boundary_edge_walk(faces):
    """Walk undirected boundary edges (used by exactly one face) into loops.

    Works on non-manifold meshes by treating edges used three or more times
    as interior. At pinch vertices the lowest-index unused neighbor is taken,
    which makes the decomposition deterministic.
    """
    if len(faces) == 0:
        return []
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    bedges = uniq[counts == 1]
    if len(bedges) == 0:
        return []
    adj = {}
    for a, b in bedges:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    for v in adj:
        adj[v].sort()
    used = set()
    loops = []
    for a, b in bedges:
        a, b = int(a), int(b)
        if (a, b) in used:
            continue
        loop = [a]
        prev, cur = a, b
        used.add((a, b))
        used.add((b, a))
        while cur != a:
            loop.append(cur)
            nxt = None
            for cand in adj[cur]:
                if cand != prev and (cur, cand) not in used:
                    nxt = cand
                    break
            if nxt is None:
                break
            used.add((cur, nxt))
            used.add((nxt, cur))
            prev, cur = cur, nxt
        loops.append(np.asarray(loop, dtype=np.int64))
    return loops


def boundary_loops(mesh):
    """Return boundary loops as arrays of vertex indices in cyclic order.

    Raises
    ------
    NonManifoldEdgeError
        If any undirected edge is shared by more than two faces.
    """
    _, counts = mesh.edges_unique()
    if counts.size and counts.max() > 2:
        raise NonManifoldEdgeError(f"{int((counts > 2).sum())} edges used by more than two faces")
    return _boundary_edge_walk(mesh.faces)


def connected_components(mesh):
    """Partition vertices by face connectivity.

    Returns a list of vertex index arrays ordered by descending face count
    (isolated vertices form trailing singleton components). Ties break on
    the smallest vertex index for determinism.
    """
    v = mesh.n_vertices
    if mesh.n_faces:
        e = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]], mesh.faces[:, [2, 0]]])
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(v, v))
        g = g + g.T
    else:
        g = coo_matrix((v, v))
    n, labels = _csgraph_components(g, directed=False)
    face_counts = np.zeros(n, dtype=np.int64)
    if mesh.n_faces:
        np.add.at(face_counts, labels[mesh.faces[:, 0]], 1)
    first_vertex = np.full(n, v, dtype=np.int64)
    np.minimum.at(first_vertex, labels, np.arange(v))
    order = sorted(range(n), key=lambda c: (-face_counts[c], first_vertex[c]))
    return [np.where(labels == c)[0] for c in order]


def topology_report(mesh):
    """Compute counts, Euler characteristic, and validity flags."""
    edges, counts = mesh.edges_unique()
    manifold = bool(counts.max() <= 2) if counts.size else True
    n_boundary_edges = int((counts == 1).sum()) if counts.size else 0
    loops = _boundary_edge_walk(mesh.faces)
    comps = connected_components(mesh)
    chi = mesh.n_vertices - len(edges) + mesh.n_faces
    return TopologyReport(
        vertex_count=mesh.n_vertices,
        edge_count=len(edges),
        face_count=mesh.n_faces,
        euler_characteristic=int(chi),
        boundary_loop_count=len(loops),
        connected_component_count=len(comps),
        is_edge_manifold=manifold,
        is_watertight=manifold and n_boundary_edges == 0,
    )


def estimate_curvature(mesh, percentile=99.0, flat_eps=1e-8):
    """Normalized mean-curvature magnitude per vertex.

    Computes the cotangent-Laplacian mean-curvature normal over the mixed
    Voronoi area, takes half its magnitude (1/r on a sphere of radius r),
    then normalizes by the given percentile and clamps to [0, 1]. Surfaces
    whose raw percentile falls below ``flat_eps`` (1/mm) are reported as
    all-zero rather than amplifying roundoff. Boundary vertices copy the
    value of the nearest interior vertex; degenerate stars get zero with a
    DegenerateStarWarning.
    """
    v = mesh.vertices
    f = mesh.faces
    nv = len(v)
    if mesh.n_faces == 0:
        return np.zeros(nv)

    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    e0 = p2 - p1
    e1 = p0 - p2
    e2 = p1 - p0
    area2 = np.linalg.norm(np.cross(e2, -e1), axis=1)
    area2 = np.maximum(area2, 1e-300)
    # cot of the angle at each corner: dot of adjacent edges over twice the area
    cot0 = np.einsum("ij,ij->i", -e1, e2) / area2
    cot1 = np.einsum("ij,ij->i", -e2, e0) / area2
    cot2 = np.einsum("ij,ij->i", -e0, e1) / area2

    lap = np.zeros((nv, 3))
    # edge (1,2) is opposite corner 0 and weighted by cot0, and so on
    np.add.at(lap, f[:, 1], cot0[:, None] * (p2 - p1))
    np.add.at(lap, f[:, 2], cot0[:, None] * (p1 - p2))
    np.add.at(lap, f[:, 0], cot1[:, None] * (p2 - p0))
    np.add.at(lap, f[:, 2], cot1[:, None] * (p0 - p2))
    np.add.at(lap, f[:, 0], cot2[:, None] * (p1 - p0))
    np.add.at(lap, f[:, 1], cot2[:, None] * (p0 - p1))

    # Meyer mixed Voronoi area
    tri_area = 0.5 * area2
    sq0 = np.einsum("ij,ij->i", e0, e0)
    sq1 = np.einsum("ij,ij->i", e1, e1)
    sq2 = np.einsum("ij,ij->i", e2, e2)
    obtuse0 = cot0 < 0
    obtuse1 = cot1 < 0
    obtuse2 = cot2 < 0
    any_obt = obtuse0 | obtuse1 | obtuse2
    vor0 = np.where(any_obt, np.where(obtuse0, tri_area / 2, tri_area / 4),
                    (sq2 * cot2 + sq1 * cot1) / 8.0)
    vor1 = np.where(any_obt, np.where(obtuse1, tri_area / 2, tri_area / 4),
                    (sq0 * cot0 + sq2 * cot2) / 8.0)
    vor2 = np.where(any_obt, np.where(obtuse2, tri_area / 2, tri_area / 4),
                    (sq1 * cot1 + sq0 * cot0) / 8.0)
    mixed = np.zeros(nv)
    np.add.at(mixed, f[:, 0], vor0)
    np.add.at(mixed, f[:, 1], vor1)
    np.add.at(mixed, f[:, 2], vor2)

    raw = np.zeros(nv)
    degenerate = mixed <= 1e-300
    touched = np.zeros(nv, dtype=bool)
    touched[np.unique(f)] = True
    if np.any(degenerate & touched):
        warnings.warn("degenerate vertex star, curvature set to zero", DegenerateStarWarning)
    good = ~degenerate
    raw[good] = 0.5 * np.linalg.norm(lap[good], axis=1) / (2.0 * mixed[good])

    loops = _boundary_edge_walk(f)
    if loops:
        bverts = np.unique(np.concatenate(loops))
        interior = np.setdiff1d(np.where(touched)[0], bverts)
        if len(interior):
            _, near = cKDTree(v[interior]).query(v[bverts])
            raw[bverts] = raw[interior[near]]

    scale = float(np.percentile(raw[touched], percentile)) if touched.any() else 0.0
    if scale <= 0.0 or scale < flat_eps:
        return np.zeros(nv)
    return np.clip(raw / scale, 0.0, 1.0)


def sample_surface(mesh, count, seed):
    """Draw area-weighted surface samples.

    Returns
    -------
    points : (count, 3) array
    normals : (count, 3) array
        Face normal of the sampled face.
    face_indices : (count,) int array
    """
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise ShapeMismatchError("mesh has no positive-area faces to sample")
    fidx = rng.choice(mesh.n_faces, size=count, p=areas / total)
    r1 = rng.random(count)
    r2 = rng.random(count)
    su = np.sqrt(r1)
    b0 = 1.0 - su
    b1 = su * (1.0 - r2)
    b2 = su * r2
    fv = mesh.vertices[mesh.faces[fidx]]
    points = b0[:, None] * fv[:, 0] + b1[:, None] * fv[:, 1] + b2[:, None] * fv[:, 2]
    normals = mesh.face_normals()[fidx]
    return points, normals, fidx


def collapse_tiny_faces(mesh, area_eps=1e-8, max_passes=8):
    """Remove faces below an area threshold by shortest-edge collapse.

    Welding the shortest edge of each sub-threshold face keeps the Euler
    characteristic and boundary structure intact where a bare face drop
    would punch pinholes. Runs until no face is below ``area_eps`` mm^2 or
    ``max_passes`` is hit, then compacts unused vertices.
    """
    v = mesh.vertices.copy()
    f = mesh.faces.copy()
    attrs = {
        "labels": None if mesh.labels is None else mesh.labels.copy(),
        "normals": None if mesh.normals is None else mesh.normals.copy(),
        "curvature": None if mesh.curvature is None else mesh.curvature.copy(),
    }
    for _ in range(max_passes):
        ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 2] != f[:, 0])
        f = f[ok]
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
            _, a, b = min(cand)
            ra, rb = remap[a], remap[b]
            lo, hi = (ra, rb) if ra < rb else (rb, ra)
            remap[remap == hi] = lo
        f = remap[f]
    ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 2] != f[:, 0])
    f = f[ok]
    used = np.unique(f) if len(f) else np.arange(0)
    remap = np.full(len(v), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(
        v[used],
        remap[f],
        None if attrs["labels"] is None else attrs["labels"][used],
        None if attrs["normals"] is None else attrs["normals"][used],
        None if attrs["curvature"] is None else attrs["curvature"][used],
    )
