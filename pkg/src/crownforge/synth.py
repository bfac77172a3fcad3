"""Procedural labeled dental scenes with analytic ground truth.

A scene is a gum-to-abutment scan mesh (abutment vertices labeled 1,
label boundary exactly on the analytic margin), an open ground-truth
crown whose rim is that same margin, two watertight neighbor teeth, and
a crown template. Margins follow a low-order Fourier radius profile
with a sinusoidal height wobble; crowns get a bulged wall and an
occlusal cap with sinusoidal cusp/groove displacement so curvature
varies over the surface. Everything is deterministic per seed and fits
in a 20 mm cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidSpecError, ParseError
from .margin import RESAMPLE_COUNT, MarginCurve
from .mesh import TriMesh
from .pointops import LabeledPointCloud

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass
class SceneSpec:
    """Generation knobs; defaults give a molar-ish scene.

    Lengths in mm. `groove_depth` and `occlusal_amplitude` shape the
    cusp/groove displacement of the crown cap; `neighbor_overlap` > 0
    pushes both neighbors into the crown by that depth (for intersection
    tests), otherwise `neighbor_gap` separates them.
    """

    seed: int = 0
    base_radius: float = 4.0
    taper_deg: float = 6.0
    abutment_height: float = 4.0
    cusp_count: int = 4
    groove_depth: float = 0.28
    occlusal_amplitude: float = 0.8
    neighbor_gap: float = 0.5
    neighbor_overlap: float = 0.0
    jitter: float = 0.0

    def __post_init__(self):
        if self.base_radius <= 0 or self.abutment_height <= 0:
            raise InvalidSpecError("radii and heights must be positive")
        if self.jitter < 0:
            raise InvalidSpecError(f"jitter must be non-negative, got {self.jitter}")
        if self.cusp_count < 1:
            raise InvalidSpecError(f"cusp_count must be >= 1, got {self.cusp_count}")
        if not 0 <= self.taper_deg < 45:
            raise InvalidSpecError(f"taper_deg outside [0, 45): {self.taper_deg}")
        if self.groove_depth < 0 or self.occlusal_amplitude < 0:
            raise InvalidSpecError("groove_depth and occlusal_amplitude must be >= 0")
        if self.neighbor_gap < 0 or self.neighbor_overlap < 0:
            raise InvalidSpecError("neighbor_gap and neighbor_overlap must be >= 0")


@dataclass
class SceneBundle:
    ios_mesh: TriMesh
    gt_crown: TriMesh
    gt_margin: MarginCurve
    medial_neighbor: TriMesh
    lateral_neighbor: TriMesh
    template: LabeledPointCloud


def _grid_mesh(rows):
    """Stitch closed theta rings (bottom to top) into a quad-split strip."""
    verts = np.concatenate(rows, axis=0)
    n = rows[0].shape[0]
    faces = []
    for r in range(len(rows) - 1):
        a = np.arange(n) + r * n
        b = (np.arange(n) + 1) % n + r * n
        c = a + n
        d = b + n
        faces.append(np.stack([a, b, d], axis=1))
        faces.append(np.stack([a, d, c], axis=1))
    return verts, np.concatenate(faces, axis=0)


def _add_apex(verts, faces, n, apex_point):
    apex = len(verts)
    verts = np.vstack([verts, np.asarray(apex_point, np.float64)[None]])
    last = np.arange(len(verts) - 1 - n, len(verts) - 1)
    fan = np.stack([last, np.roll(last, -1), np.full(n, apex)], axis=1)
    return verts, np.vstack([faces, fan])


def _add_base_apex(verts, faces, n, apex_point):
    """Fan the FIRST ring to a bottom apex, wound opposite the top fan."""
    apex = len(verts)
    verts = np.vstack([verts, np.asarray(apex_point, np.float64)[None]])
    first = np.arange(n)
    fan = np.stack([np.roll(first, -1), first, np.full(n, apex)], axis=1)
    return verts, np.vstack([faces, fan])


def _resample_polyline(points, count):
    """`count` points uniform in arc length along a closed polyline."""
    pts = np.asarray(points, dtype=np.float64)
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    stations = total * np.arange(count) / count
    j = np.clip(np.searchsorted(cum, stations, side="right") - 1, 0, len(pts) - 1)
    t = (stations - cum[j]) / np.maximum(seg[j], 1e-300)
    return closed[j] + t[:, None] * (closed[j + 1] - closed[j])


def cylinder(radius, height, segments=64, rings=4, capped=True) -> TriMesh:
    """Axis-aligned cylinder from z=0 to z=height; open tube when uncapped."""
    th = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    cs = np.stack([np.cos(th), np.sin(th)], axis=1)
    rows = [np.column_stack([radius * cs, np.full(segments, z)])
            for z in np.linspace(0.0, height, rings + 1)]
    v, f = _grid_mesh(rows)
    if capped:
        v, f = _add_apex(v, f, segments, [0.0, 0.0, height])
        v, f = _add_base_apex(v, f, segments, [0.0, 0.0, 0.0])
    return TriMesh(v, f)


def icosphere(radius=1.0, subdivisions=2) -> TriMesh:
    """Subdivided icosahedron projected onto a sphere."""
    t = _GOLDEN
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        verts_list = list(verts)
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts_list[i] + verts_list[j]
                m = m / np.linalg.norm(m)
                cache[key] = len(verts_list)
                verts_list.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return TriMesh(verts * radius, faces)


def superellipsoid(semi_axes, exponent=0.8, segments=32, rings=16) -> TriMesh:
    """Watertight superellipsoid; exponent < 1 gives boxier profiles."""
    ax, ay, az = (float(s) for s in semi_axes)
    e = float(exponent)

    def spow(v, p):
        return np.sign(v) * np.abs(v) ** p

    rows = []
    for i in range(1, rings):
        phi = -np.pi / 2 + np.pi * i / rings
        th = np.linspace(0, 2 * np.pi, segments, endpoint=False)
        cp, sp = spow(np.cos(phi), e), spow(np.sin(phi), e)
        rows.append(np.column_stack([
            ax * cp * spow(np.cos(th), e),
            ay * cp * spow(np.sin(th), e),
            np.full(segments, az * sp),
        ]))
    v, f = _grid_mesh(rows)
    v, f = _add_apex(v, f, segments, [0.0, 0.0, az])
    v, f = _add_base_apex(v, f, segments, [0.0, 0.0, -az])
    mesh = TriMesh(v, f)
    if mesh.signed_volume() < 0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, [0, 2, 1]])
    return mesh


def make_template(tooth_class) -> LabeledPointCloud:
    """Canonical 1024-point crown template centered at the origin.

    `hemisphere` is the exact 7.5 mm upper hemisphere; `premolar` and
    `molar` are low domes with 2 and 4 Gaussian cusps.
    """
    m = 1024
    i = np.arange(m)
    z01 = (i + 0.5) / m
    theta = 2 * np.pi * i / _GOLDEN ** 2
    if tooth_class == "hemisphere":
        r = 7.5
        z = z01 * r
        rho = np.sqrt(np.maximum(r ** 2 - z ** 2, 0.0))
        pts = np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])
        return LabeledPointCloud(points=pts)
    if tooth_class == "premolar":
        ax, ay, h = 3.3, 3.8, 2.2
        cusps = np.array([[1.2, 0.0], [-1.2, 0.0]])
        amp, width = 1.0, 1.1
    elif tooth_class == "molar":
        ax, ay, h = 4.2, 4.2, 1.8
        cusps = np.array([[1.6, 1.6], [-1.6, 1.6], [1.6, -1.6], [-1.6, -1.6]])
        amp, width = 1.2, 1.0
    else:
        raise InvalidSpecError(f"unknown tooth class: {tooth_class!r}")
    # Unit upper hemisphere stretched to the occlusal footprint; cusps sit
    # as Gaussian bumps on an otherwise flat-ish cap.
    zu = z01
    rho = np.sqrt(np.maximum(1.0 - zu ** 2, 0.0))
    x = ax * rho * np.cos(theta)
    y = ay * rho * np.sin(theta)
    z = h * zu
    for cx, cy in cusps:
        z = z + amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / width ** 2)
    return LabeledPointCloud(points=np.column_stack([x, y, z]))


def make_scene(spec: SceneSpec) -> SceneBundle:
    """Deterministic labeled scene; see the module docstring for anatomy."""
    rng = np.random.default_rng(spec.seed)
    n_seg = 64
    r_m = spec.base_radius * rng.uniform(0.9, 1.1)
    taper = np.deg2rad(spec.taper_deg)
    h_ab = spec.abutment_height * rng.uniform(0.9, 1.1)
    h_cr = h_ab + 1.6
    a = rng.uniform(0.5, 1.0, 3)
    ph = rng.uniform(0, 2 * np.pi, 4)
    zw = 0.25 * rng.uniform(0.5, 1.0)

    def rho(th):
        return r_m * (1 + 0.05 * a[0] * np.cos(th + ph[0])
                      + 0.04 * a[1] * np.cos(2 * th + ph[1])
                      + 0.02 * a[2] * np.cos(3 * th + ph[2]))

    def zm(th):
        return zw * np.sin(2 * th + ph[3])

    th = np.linspace(0, 2 * np.pi, n_seg, endpoint=False)
    rim_r = rho(th)
    rim_z = zm(th)
    cs = np.stack([np.cos(th), np.sin(th)], axis=1)

    rows = []
    labels = []
    n_gum, n_ab, n_cap = 9, 10, 6
    r_out = r_m + 4.0
    for i in range(n_gum):
        s = i / n_gum
        rr = r_out + s * (rim_r - r_out)
        zz = rim_z * s - 0.7 * (1 - s)
        rows.append(np.column_stack([rr[:, None] * cs, zz]))
        labels.append(np.zeros(n_seg, dtype=np.int32))
    rows.append(np.column_stack([rim_r[:, None] * cs, rim_z]))
    labels.append(np.ones(n_seg, dtype=np.int32))
    r_top = rim_r - h_ab * np.tan(taper)
    for i in range(1, n_ab + 1):
        t = i / n_ab
        rr = rim_r + t * (r_top - rim_r)
        zz = rim_z + t * h_ab
        rows.append(np.column_stack([rr[:, None] * cs, zz]))
        labels.append(np.ones(n_seg, dtype=np.int32))
    for i in range(1, n_cap + 1):
        q = i / (n_cap + 1)
        rr = r_top * (1 - q)
        zz = rim_z + h_ab + 0.5 * np.sin(np.pi * q / 2) * 0.8
        rows.append(np.column_stack([rr[:, None] * cs, zz]))
        labels.append(np.ones(n_seg, dtype=np.int32))
    ios_v, ios_f = _grid_mesh(rows)
    apex = np.array([0.0, 0.0, rim_z.mean() + h_ab + 0.5 * 0.8])
    ios_v, ios_f = _add_apex(ios_v, ios_f, n_seg, apex)
    ios_l = np.concatenate(labels + [np.ones(1, dtype=np.int32)])
    if spec.jitter > 0:
        ios_v = ios_v + rng.normal(0, spec.jitter, ios_v.shape)

    n_wall, n_capc = 12, 7
    crows = [np.column_stack([rim_r[:, None] * cs, rim_z])]
    for i in range(1, n_wall + 1):
        s = i / n_wall
        scale = 1 + 0.13 * np.sin(np.pi * min(s, 0.9)) * (1 - 0.45 * s)
        rr = rim_r * scale
        zz = rim_z * (1 - s) + s * h_cr
        crows.append(np.column_stack([rr[:, None] * cs, zz]))
    top_r = rim_r * (1 + 0.13 * np.sin(np.pi * 0.9) * 0.55)
    for i in range(1, n_capc + 1):
        q = i / (n_capc + 1)
        rr = top_r * (1 - q)
        occl = (spec.groove_depth * np.sin(np.pi * q) * np.cos(spec.cusp_count * th)
                + spec.occlusal_amplitude * 0.55 * q)
        crows.append(np.column_stack([rr[:, None] * cs, h_cr + occl]))
    crown_v, crown_f = _grid_mesh(crows)
    cap_apex = np.array([0.0, 0.0, h_cr + spec.occlusal_amplitude * 0.55])
    crown_v, crown_f = _add_apex(crown_v, crown_f, n_seg, cap_apex)

    thd = np.linspace(0, 2 * np.pi, 128 * n_seg, endpoint=False)
    dense = np.column_stack([rho(thd) * np.cos(thd), rho(thd) * np.sin(thd), zm(thd)])
    resampled = _resample_polyline(dense, RESAMPLE_COUNT)
    centroid = resampled.mean(axis=0)
    _, _, vt = np.linalg.svd(resampled - centroid)
    gdir = vt[2] if vt[2, 2] >= 0 else -vt[2]
    gdir = gdir / np.linalg.norm(gdir)
    gt_margin = MarginCurve(control_polyline=dense, resampled=resampled,
                            centroid=centroid, growth_dir=gdir)

    rng2 = np.random.default_rng([spec.seed, 1])
    semis = np.array([2.0, 3.4, 3.6]) * rng2.uniform(0.95, 1.05, 3)
    crown_z_mid = 0.5 * (crown_v[:, 2].min() + crown_v[:, 2].max())
    neighbors = []
    for side in (1.0, -1.0):
        x_extreme = crown_v[:, 0].max() if side > 0 else -crown_v[:, 0].min()
        if spec.neighbor_overlap > 0:
            cx = x_extreme + semis[0] - spec.neighbor_overlap
        else:
            cx = x_extreme + semis[0] + spec.neighbor_gap
        tooth = superellipsoid(semis, exponent=0.8)
        shift = np.array([side * cx, 0.0, crown_z_mid])
        neighbors.append(TriMesh(tooth.vertices + shift, tooth.faces))

    template = make_template("molar" if spec.cusp_count >= 4 else "premolar")
    return SceneBundle(
        ios_mesh=TriMesh(ios_v, ios_f, labels=ios_l),
        gt_crown=TriMesh(crown_v, crown_f),
        gt_margin=gt_margin,
        medial_neighbor=neighbors[0],
        lateral_neighbor=neighbors[1],
        template=template,
    )


def save_bundle(bundle: SceneBundle, out_dir, spec=None):
    """Write a bundle directory (ios.ply, crown_gt.ply, margin_gt.ply,
    neighbor_medial.ply, neighbor_lateral.ply, template.ply, spec.txt)."""
    import os

    from . import meshio

    os.makedirs(out_dir, exist_ok=True)
    meshio.save_mesh(bundle.ios_mesh, os.path.join(out_dir, "ios.ply"))
    meshio.save_mesh(bundle.gt_crown, os.path.join(out_dir, "crown_gt.ply"))
    meshio.save_margin(bundle.gt_margin, os.path.join(out_dir, "margin_gt.ply"))
    meshio.save_mesh(bundle.medial_neighbor, os.path.join(out_dir, "neighbor_medial.ply"))
    meshio.save_mesh(bundle.lateral_neighbor, os.path.join(out_dir, "neighbor_lateral.ply"))
    meshio.save_pointcloud(bundle.template, os.path.join(out_dir, "template.ply"))
    with open(os.path.join(out_dir, "spec.txt"), "w") as fh:
        if spec is not None:
            for f in fields(spec):
                fh.write(f"{f.name}={getattr(spec, f.name)}\n")


def load_bundle(case_dir) -> SceneBundle:
    """Read a bundle directory written by :func:`save_bundle`."""
    import os

    from . import meshio

    return SceneBundle(
        ios_mesh=meshio.load_mesh(os.path.join(case_dir, "ios.ply")),
        gt_crown=meshio.load_mesh(os.path.join(case_dir, "crown_gt.ply")),
        gt_margin=meshio.load_margin(os.path.join(case_dir, "margin_gt.ply")),
        medial_neighbor=meshio.load_mesh(os.path.join(case_dir, "neighbor_medial.ply")),
        lateral_neighbor=meshio.load_mesh(os.path.join(case_dir, "neighbor_lateral.ply")),
        template=meshio.load_pointcloud(os.path.join(case_dir, "template.ply")),
    )


def load_spec(path) -> SceneSpec:
    """Read spec.txt key=value lines back into a SceneSpec."""
    kwargs = {}
    types = {f.name: f.type for f in fields(SceneSpec)}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"bad spec line: {line}")
            key, val = line.split("=", 1)
            key = key.strip()
            if key not in types:
                raise InvalidSpecError(f"unknown spec field: {key}")
            caster = int if types[key] in ("int", int) else float
            kwargs[key] = caster(val.strip())
    return SceneSpec(**kwargs)
