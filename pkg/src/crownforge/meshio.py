"""Mesh, point cloud, margin curve, and grid file I/O.

Supported mesh formats: PLY (ASCII and binary little-endian), OBJ and STL
(geometry only). PLY carries the optional per-vertex schema used across
the package: ``label`` (int32), ``nx ny nz`` (float32), ``curvature``
(float32), and for point clouds additionally ``margin_flag`` (int32).
Coordinates are written as float64 so binary round trips stay within
1e-6 mm at scene scale.

Grid files use a 16-byte header (magic ``CGRD``, uint32 resolution,
uint32 component count, uint32 reserved) followed by float32
little-endian cell values streamed x-fastest (components innermost for
vector grids) and six float64 values: origin xyz then extent xyz.
Parameter archives reuse the container with component count 0; the
resolution field holds the tensor count and each tensor is stored as
uint32 name length, UTF-8 name, uint32 ndim, uint32 dims, float32 data.
"""

from __future__ import annotations

import struct
import warnings

import numpy as np

from .errors import IoError, ParseError, UnsupportedPropertyWarning
from .mesh import TriMesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_KNOWN_VERTEX_PROPS = {"x", "y", "z", "nx", "ny", "nz", "label", "curvature", "margin_flag"}


def _open_read(path):
    try:
        return open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _open_write(path):
    try:
        return open(path, "wb")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# PLY


def _parse_ply_header(fh):
    line = fh.readline().strip()
    if line != b"ply":
        raise ParseError("missing ply magic")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype, is_list, count_dtype)])
    comments = []
    while True:
        raw = fh.readline()
        if not raw:
            raise ParseError("unterminated ply header")
        line = raw.decode("ascii", "replace").strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "comment":
            comments.append(line[len("comment "):] if len(line) > 8 else "")
        elif parts[0] == "format":
            if parts[1] == "ascii":
                fmt = "ascii"
            elif parts[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise ParseError(f"unsupported ply format {parts[1]}")
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before element")
            if parts[1] == "list":
                if parts[2] not in _PLY_TYPES or parts[3] not in _PLY_TYPES:
                    raise ParseError(f"unknown ply list types {parts[2]} {parts[3]}")
                elements[-1][2].append((parts[4], _PLY_TYPES[parts[3]], True, _PLY_TYPES[parts[2]]))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise ParseError(f"unknown ply type {parts[1]}")
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]], False, None))
        elif parts[0] == "end_header":
            break
        else:
            raise ParseError(f"unexpected header line: {line}")
    if fmt is None:
        raise ParseError("ply header missing format line")
    return fmt, elements, comments


def _read_ply_element_ascii(fh, count, props):
    scalars = {name: [] for name, _, is_list, _ in props if not is_list}
    lists = {name: [] for name, _, is_list, _ in props if is_list}
    for _ in range(count):
        line = fh.readline()
        if not line:
            raise ParseError("truncated ply payload")
        tokens = line.split()
        pos = 0
        for name, dtype, is_list, _ in props:
            if is_list:
                if pos >= len(tokens):
                    raise ParseError("short ply row")
                n = int(tokens[pos]); pos += 1
                vals = [float(t) for t in tokens[pos:pos + n]]
                if len(vals) != n:
                    raise ParseError("short ply list row")
                pos += n
                lists[name].append(vals)
            else:
                if pos >= len(tokens):
                    raise ParseError("short ply row")
                scalars[name].append(float(tokens[pos])); pos += 1
    out = {}
    for name, dtype, is_list, _ in props:
        if is_list:
            out[name] = [np.asarray(v, dtype=dtype) for v in lists[name]]
        else:
            out[name] = np.asarray(scalars[name], dtype=dtype)
    return out


def _read_ply_element_binary(fh, count, props):
    if all(not is_list for _, _, is_list, _ in props):
        dt = np.dtype([(name, "<" + dtype) for name, dtype, _, _ in props])
        buf = fh.read(dt.itemsize * count)
        if len(buf) != dt.itemsize * count:
            raise ParseError("truncated ply payload")
        rec = np.frombuffer(buf, dtype=dt)
        return {name: rec[name].copy() for name, _, _, _ in props}
    out = {name: [] for name, _, _, _ in props}
    for _ in range(count):
        for name, dtype, is_list, count_dtype in props:
            if is_list:
                cbuf = fh.read(np.dtype(count_dtype).itemsize)
                if not cbuf:
                    raise ParseError("truncated ply payload")
                n = int(np.frombuffer(cbuf, dtype="<" + count_dtype)[0])
                ibuf = fh.read(np.dtype(dtype).itemsize * n)
                if len(ibuf) != np.dtype(dtype).itemsize * n:
                    raise ParseError("truncated ply list")
                out[name].append(np.frombuffer(ibuf, dtype="<" + dtype).copy())
            else:
                buf = fh.read(np.dtype(dtype).itemsize)
                if len(buf) != np.dtype(dtype).itemsize:
                    raise ParseError("truncated ply payload")
                out[name].append(np.frombuffer(buf, dtype="<" + dtype)[0])
    for name, dtype, is_list, _ in props:
        if not is_list:
            out[name] = np.asarray(out[name], dtype=dtype)
    return out


def _load_ply(path):
    with _open_read(path) as fh:
        fmt, elements, comments = _parse_ply_header(fh)
        data = {}
        for name, count, props in elements:
            if fmt == "ascii":
                data[name] = _read_ply_element_ascii(fh, count, props)
            else:
                data[name] = _read_ply_element_binary(fh, count, props)
        prop_names = {name: [p[0] for p in props] for name, count, props in elements}
    return data, prop_names, comments


def _vertex_attrs(vdata, vprops, where):
    for name in vprops:
        if name not in _KNOWN_VERTEX_PROPS:
            warnings.warn(f"{where}: skipping unsupported vertex property '{name}'",
                          UnsupportedPropertyWarning)
    for c in ("x", "y", "z"):
        if c not in vdata:
            raise ParseError(f"{where}: vertex element lacks {c}")
    pts = np.stack([np.asarray(vdata["x"], np.float64),
                    np.asarray(vdata["y"], np.float64),
                    np.asarray(vdata["z"], np.float64)], axis=1)
    labels = np.asarray(vdata["label"], np.int32) if "label" in vdata else None
    normals = None
    if all(k in vdata for k in ("nx", "ny", "nz")):
        normals = np.stack([np.asarray(vdata["nx"], np.float64),
                            np.asarray(vdata["ny"], np.float64),
                            np.asarray(vdata["nz"], np.float64)], axis=1)
    curvature = np.asarray(vdata["curvature"], np.float64) if "curvature" in vdata else None
    margin_flag = np.asarray(vdata["margin_flag"], np.int32) if "margin_flag" in vdata else None
    return pts, labels, normals, curvature, margin_flag


def load_mesh(path):
    """Load a triangle mesh from .ply, .obj, or .stl.

    Zero-area faces are dropped with a warning so downstream topology
    operations never see exact degeneracies.
    """
    p = str(path)
    low = p.lower()
    if low.endswith(".ply"):
        data, prop_names, _ = _load_ply(p)
        if "vertex" not in data:
            raise ParseError(f"{p}: no vertex element")
        pts, labels, normals, curvature, _ = _vertex_attrs(data["vertex"], prop_names["vertex"], p)
        faces = []
        if "face" in data:
            key = "vertex_indices" if "vertex_indices" in data["face"] else "vertex_index"
            if key not in data["face"]:
                raise ParseError(f"{p}: face element lacks vertex indices")
            for row in data["face"][key]:
                if len(row) == 3:
                    faces.append(row)
                elif len(row) > 3:
                    for i in range(1, len(row) - 1):
                        faces.append([row[0], row[i], row[i + 1]])
                else:
                    raise ParseError(f"{p}: face with {len(row)} vertices")
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        mesh = TriMesh(pts, faces, labels=labels, normals=normals, curvature=curvature)
    elif low.endswith(".obj"):
        mesh = _load_obj(p)
    elif low.endswith(".stl"):
        mesh = _load_stl(p)
    else:
        raise ParseError(f"unrecognized mesh extension: {p}")
    return _drop_zero_area(mesh, p)


def _drop_zero_area(mesh, where):
    if mesh.n_faces == 0:
        return mesh
    areas = mesh.face_areas()
    bad = areas <= 0.0
    if bad.any():
        warnings.warn(f"{where}: dropped {int(bad.sum())} zero-area faces")
        mesh = TriMesh(mesh.vertices, mesh.faces[~bad], labels=mesh.labels,
                       normals=mesh.normals, curvature=mesh.curvature)
    return mesh


def save_mesh(mesh, path, binary=True, comments=()):
    """Save a mesh; format chosen by extension (.ply, .obj, .stl)."""
    p = str(path)
    low = p.lower()
    if low.endswith(".ply"):
        _save_ply_mesh(mesh, p, binary, comments)
    elif low.endswith(".obj"):
        _save_obj(mesh, p)
    elif low.endswith(".stl"):
        _save_stl(mesh, p)
    else:
        raise ParseError(f"unrecognized mesh extension: {p}")


def _ply_vertex_header_and_rows(points, labels, normals, curvature, margin_flag):
    names = [("x", "double"), ("y", "double"), ("z", "double")]
    cols = [points[:, 0], points[:, 1], points[:, 2]]
    dtypes = ["<f8", "<f8", "<f8"]
    if labels is not None:
        names.append(("label", "int"))
        cols.append(np.asarray(labels, np.int32))
        dtypes.append("<i4")
    if normals is not None:
        for i, c in enumerate("xyz"):
            names.append((f"n{c}", "float"))
            cols.append(np.asarray(normals[:, i], np.float32))
            dtypes.append("<f4")
    if curvature is not None:
        names.append(("curvature", "float"))
        cols.append(np.asarray(curvature, np.float32))
        dtypes.append("<f4")
    if margin_flag is not None:
        names.append(("margin_flag", "int"))
        cols.append(np.asarray(margin_flag, np.int32))
        dtypes.append("<i4")
    return names, cols, dtypes


def _write_ply(path, comments, elements, binary):
    """elements: list of (name, count, prop_header_lines, row_writer)."""
    with _open_write(path) as fh:
        fh.write(b"ply\n")
        fmt = "binary_little_endian" if binary else "ascii"
        fh.write(f"format {fmt} 1.0\n".encode())
        for c in comments:
            fh.write(f"comment {c}\n".encode())
        for name, count, prop_lines, _ in elements:
            fh.write(f"element {name} {count}\n".encode())
            for line in prop_lines:
                fh.write(line.encode() + b"\n")
        fh.write(b"end_header\n")
        for _, _, _, writer in elements:
            writer(fh)


def _scalar_rows_writer(cols, dtypes, binary):
    def write(fh):
        if binary:
            rec = np.zeros(len(cols[0]), dtype=np.dtype([(f"c{i}", dt) for i, dt in enumerate(dtypes)]))
            for i, col in enumerate(cols):
                rec[f"c{i}"] = col
            fh.write(rec.tobytes())
        else:
            mats = [np.asarray(c) for c in cols]
            for r in range(len(mats[0])):
                parts = []
                for col, dt in zip(mats, dtypes):
                    v = col[r]
                    if dt.startswith("<i"):
                        parts.append(str(int(v)))
                    else:
                        parts.append(format(float(v), ".17g"))
                fh.write((" ".join(parts) + "\n").encode())
    return write


def _face_rows_writer(faces, binary):
    def write(fh):
        if binary:
            rec = np.zeros(len(faces), dtype=np.dtype([("n", "u1"), ("v", "<i4", (3,))]))
            rec["n"] = 3
            rec["v"] = faces
            fh.write(rec.tobytes())
        else:
            for f in faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode())
    return write


def _save_ply_mesh(mesh, path, binary, comments):
    names, cols, dtypes = _ply_vertex_header_and_rows(
        mesh.vertices, mesh.labels, mesh.normals, mesh.curvature, None)
    vprops = [f"property {t} {n}" for n, t in names]
    fprops = ["property list uchar int vertex_indices"]
    _write_ply(path, comments, [
        ("vertex", mesh.n_vertices, vprops, _scalar_rows_writer(cols, dtypes, binary)),
        ("face", mesh.n_faces, fprops, _face_rows_writer(mesh.faces, binary)),
    ], binary)


def _load_obj(path):
    verts = []
    faces = []
    with _open_read(path) as fh:
        for raw in fh:
            line = raw.decode("utf-8", "replace").strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}: short v line")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    i = int(head)
                    if i < 0:
                        i = len(verts) + 1 + i
                    idx.append(i - 1)
                if len(idx) < 3:
                    raise ParseError(f"{path}: face with fewer than 3 vertices")
                for i in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[i], idx[i + 1]])
    return TriMesh(np.asarray(verts, np.float64).reshape(-1, 3),
                   np.asarray(faces, np.int64).reshape(-1, 3))


def _save_obj(mesh, path):
    with _open_write(path) as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n".encode())
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n".encode())


def _load_stl(path):
    with _open_read(path) as fh:
        head = fh.read(80)
        if len(head) < 80:
            raise ParseError(f"{path}: truncated stl header")
        cbuf = fh.read(4)
        if len(cbuf) < 4:
            raise ParseError(f"{path}: truncated stl count")
        (count,) = struct.unpack("<I", cbuf)
        body = fh.read(50 * count)
        if len(body) != 50 * count:
            if head.lstrip().startswith(b"solid"):
                raise ParseError(f"{path}: ASCII stl is not supported")
            raise ParseError(f"{path}: truncated stl payload")
    rec = np.frombuffer(body, dtype=np.dtype([("n", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    tris = rec["v"].reshape(-1, 3).astype(np.float64)
    uniq, inverse = np.unique(tris, axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3)
    return TriMesh(uniq, faces)


def _save_stl(mesh, path):
    rec = np.zeros(mesh.n_faces, dtype=np.dtype([("n", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    rec["n"] = mesh.face_normals().astype(np.float32)
    rec["v"] = mesh.vertices[mesh.faces].astype(np.float32)
    with _open_write(path) as fh:
        fh.write(b"\x00" * 80)
        fh.write(struct.pack("<I", mesh.n_faces))
        fh.write(rec.tobytes())


# ---------------------------------------------------------------------------
# Point clouds


def save_pointcloud(cloud, path, binary=True, comments=()):
    """Save a LabeledPointCloud as a vertex-only PLY."""
    names, cols, dtypes = _ply_vertex_header_and_rows(
        cloud.points, cloud.labels, cloud.normals, cloud.curvature, cloud.margin_flags)
    vprops = [f"property {t} {n}" for n, t in names]
    _write_ply(str(path), comments, [
        ("vertex", len(cloud.points), vprops, _scalar_rows_writer(cols, dtypes, binary)),
    ], binary)


def load_pointcloud(path):
    from .pointops import LabeledPointCloud

    p = str(path)
    data, prop_names, _ = _load_ply(p)
    if "vertex" not in data:
        raise ParseError(f"{p}: no vertex element")
    pts, labels, normals, curvature, margin_flag = _vertex_attrs(
        data["vertex"], prop_names["vertex"], p)
    if normals is not None:
        ln = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.maximum(ln, 1e-300)
    return LabeledPointCloud(points=pts, labels=labels, normals=normals,
                             curvature=curvature, margin_flags=margin_flag)


# ---------------------------------------------------------------------------
# Margin curves


def save_margin(curve, path, binary=True, comments=()):
    """Save a MarginCurve as a PLY polyline (.ply) or a text record (.txt)."""
    p = str(path)
    n = len(curve.resampled)
    if p.lower().endswith(".txt"):
        try:
            with open(p, "w") as fh:
                fh.write(f"margin {n}\n")
                for q in curve.resampled:
                    fh.write(f"p {q[0]:.17g} {q[1]:.17g} {q[2]:.17g}\n")
                c = curve.centroid
                g = curve.growth_dir
                fh.write(f"centroid {c[0]:.17g} {c[1]:.17g} {c[2]:.17g}\n")
                fh.write(f"growth_dir {g[0]:.17g} {g[1]:.17g} {g[2]:.17g}\n")
        except OSError as exc:
            raise IoError(f"cannot write {p}: {exc}") from exc
        return
    c = curve.centroid
    g = curve.growth_dir
    meta = [f"centroid {c[0]:.17g} {c[1]:.17g} {c[2]:.17g}",
            f"growth_dir {g[0]:.17g} {g[1]:.17g} {g[2]:.17g}"]
    pts = curve.resampled
    cols = [pts[:, 0], pts[:, 1], pts[:, 2]]
    dtypes = ["<f8", "<f8", "<f8"]
    vprops = ["property double x", "property double y", "property double z"]
    edges = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1).astype(np.int32)
    eprops = ["property int vertex1", "property int vertex2"]
    _write_ply(p, list(comments) + meta, [
        ("vertex", n, vprops, _scalar_rows_writer(cols, dtypes, binary)),
        ("edge", n, eprops, _scalar_rows_writer([edges[:, 0], edges[:, 1]], ["<i4", "<i4"], binary)),
    ], binary)


def load_margin(path):
    from .margin import MarginCurve

    p = str(path)
    if p.lower().endswith(".txt"):
        try:
            with open(p) as fh:
                lines = [ln.strip() for ln in fh if ln.strip()]
        except OSError as exc:
            raise IoError(f"cannot read {p}: {exc}") from exc
        if not lines or not lines[0].startswith("margin "):
            raise ParseError(f"{p}: missing margin header")
        n = int(lines[0].split()[1])
        if len(lines) != n + 3:
            raise ParseError(f"{p}: expected {n + 3} lines, found {len(lines)}")
        pts = []
        for ln in lines[1:n + 1]:
            parts = ln.split()
            if parts[0] != "p" or len(parts) != 4:
                raise ParseError(f"{p}: bad point line: {ln}")
            pts.append([float(parts[1]), float(parts[2]), float(parts[3])])
        cparts = lines[n + 1].split()
        gparts = lines[n + 2].split()
        if cparts[0] != "centroid" or gparts[0] != "growth_dir":
            raise ParseError(f"{p}: missing centroid/growth_dir lines")
        centroid = np.asarray([float(v) for v in cparts[1:4]])
        growth = np.asarray([float(v) for v in gparts[1:4]])
        return MarginCurve(control_polyline=np.asarray(pts), resampled=np.asarray(pts),
                           centroid=centroid, growth_dir=growth)
    data, prop_names, comments = _load_ply(p)
    if "vertex" not in data:
        raise ParseError(f"{p}: no vertex element")
    v = data["vertex"]
    pts = np.stack([np.asarray(v["x"], np.float64), np.asarray(v["y"], np.float64),
                    np.asarray(v["z"], np.float64)], axis=1)
    centroid = growth = None
    for c in comments:
        parts = c.split()
        if len(parts) == 4 and parts[0] == "centroid":
            centroid = np.asarray([float(x) for x in parts[1:]])
        elif len(parts) == 4 and parts[0] == "growth_dir":
            growth = np.asarray([float(x) for x in parts[1:]])
    if centroid is None or growth is None:
        raise ParseError(f"{p}: margin ply lacks centroid/growth_dir comments")
    return MarginCurve(control_polyline=pts, resampled=pts, centroid=centroid, growth_dir=growth)


# ---------------------------------------------------------------------------
# Grids and parameter archives

_GRID_MAGIC = b"CGRD"


def save_grid(grid, path):
    """Write a ScalarGrid or VectorGrid in the binary grid container."""
    values = grid.values
    if values.ndim == 3:
        comps = 1
        stream = values.transpose(2, 1, 0).astype("<f4")
    elif values.ndim == 4 and values.shape[3] in (1, 3):
        comps = values.shape[3]
        stream = values.transpose(2, 1, 0, 3).astype("<f4")
    else:
        raise ParseError(f"unsupported grid value shape {values.shape}")
    r = values.shape[0]
    if values.shape[:3] != (r, r, r):
        raise ParseError(f"grid must be cubic, got {values.shape}")
    with _open_write(path) as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack("<III", r, comps, 0))
        fh.write(stream.tobytes())
        fh.write(np.asarray(grid.origin, "<f8").tobytes())
        fh.write(np.asarray(grid.extent, "<f8").tobytes())


def load_grid(path):
    from .recon import ScalarGrid, VectorGrid

    with _open_read(path) as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != _GRID_MAGIC:
            raise ParseError(f"{path}: bad grid header")
        r, comps, _ = struct.unpack("<III", head[4:])
        if comps not in (1, 3):
            raise ParseError(f"{path}: component count {comps} is not a grid")
        n = r * r * r * comps
        buf = fh.read(4 * n)
        if len(buf) != 4 * n:
            raise ParseError(f"{path}: truncated grid payload")
        vals = np.frombuffer(buf, dtype="<f4").astype(np.float64)
        tail = fh.read(48)
        if len(tail) != 48:
            raise ParseError(f"{path}: missing origin/extent")
        origin = np.frombuffer(tail[:24], dtype="<f8").copy()
        extent = np.frombuffer(tail[24:], dtype="<f8").copy()
    if comps == 1:
        values = vals.reshape(r, r, r).transpose(2, 1, 0).copy()
        return ScalarGrid(values=values, origin=origin, extent=extent)
    values = vals.reshape(r, r, r, 3).transpose(2, 1, 0, 3).copy()
    return VectorGrid(values=values, origin=origin, extent=extent)


def save_params(tensors, path):
    """Write named float tensors ordered by key."""
    items = sorted(tensors.items())
    with _open_write(path) as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack("<III", len(items), 0, 0))
        for name, arr in items:
            arr = np.asarray(arr, dtype="<f4")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path):
    with _open_read(path) as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != _GRID_MAGIC:
            raise ParseError(f"{path}: bad archive header")
        count, comps, _ = struct.unpack("<III", head[4:])
        if comps != 0:
            raise ParseError(f"{path}: not a parameter archive")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            buf = fh.read(4 * n)
            if len(buf) != 4 * n:
                raise ParseError(f"{path}: truncated tensor {name}")
            out[name] = np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(shape)
    return out
