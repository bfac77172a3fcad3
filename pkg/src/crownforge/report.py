"""Figure-style artifacts: signed-distance dumps, lambda sweeps, batch rows.

No plotting here; everything is a CSV or a PLY attribute dump meant for
external viewers.
"""

from __future__ import annotations

import csv

import numpy as np

from . import meshio
from .losses import LossConfig, chamfer_l2, cmpl
from .mesh import TriMesh, topology_report
from .metrics import crown_metrics, hausdorff, margin_hausdorff, pia, winding_number
from .pointops import LabeledPointCloud
from .postprocess import _closest_pt_kernel

EVAL_COLUMNS = [
    "case",
    "class",
    "CD-L2 (mm^2)",
    "Fidelity Distance (mm^2)",
    "Hausdorff Distance (mm)",
    "F-score",
    "Margin Hausdorff Distance (mm)",
    "Medial Area Difference (mm^2)",
    "Lateral Area Difference (mm^2)",
    "threshold_used",
    "sample_seed",
]


def mesh_distance(points, mesh: TriMesh, chunk=256):
    """Exact unsigned distance from each point to the mesh surface."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    a = tri[:, 0]
    ab = tri[:, 1] - tri[:, 0]
    ac = tri[:, 2] - tri[:, 0]
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        q = pts[s:s + chunk]
        p = _closest_pt_kernel(q[:, None, :], a[None], ab[None], ac[None])
        d2 = ((q[:, None, :] - p) ** 2).sum(-1)
        out[s:s + chunk] = np.sqrt(d2.min(axis=1))
    return out


def signed_distance_dump(crown: TriMesh, reference: TriMesh, path=None, comments=()):
    """Per-vertex nearest distance to the reference, signed when possible.

    Sign convention: positive outside the reference, negative inside,
    decided by the reference's winding number. A non-watertight reference
    yields unsigned distances and ``signed=False``.

    Returns ``(values, signed)``; writes a PLY with a float32
    ``signed_dist`` vertex property when `path` is given.
    """
    dist = mesh_distance(crown.vertices, reference)
    signed = topology_report(reference).is_watertight
    if signed:
        inside = winding_number(crown.vertices, reference) > 0.5
        values = np.where(inside, -dist, dist)
    else:
        values = dist
    if path is not None:
        notes = list(comments)
        if not signed:
            notes.append("unsigned distances: reference is not watertight")
        cols = [crown.vertices[:, 0], crown.vertices[:, 1], crown.vertices[:, 2],
                values.astype(np.float32)]
        dtypes = ["<f8", "<f8", "<f8", "<f4"]
        vprops = ["property double x", "property double y", "property double z",
                  "property float signed_dist"]
        fprops = ["property list uchar int vertex_indices"]
        meshio._write_ply(str(path), notes, [
            ("vertex", crown.n_vertices, vprops,
             meshio._scalar_rows_writer(cols, dtypes, True)),
            ("face", crown.n_faces, fprops,
             meshio._face_rows_writer(crown.faces, True)),
        ], True)
    return values, signed


SWEEP_NOTE = ("fixed predictions; lambda varies the loss evaluation only, "
              "margin indicator disabled")


def lambda_sweep(cases, lambdas=(0.0, 0.5, 1.0, 2.0, 4.0), path=None):
    """Mean CMPL/CD-L2/Hausdorff of fixed predictions under each lambda.

    `cases` is a sequence of ``(pred_points, gt_cloud, pred_curvature)``.
    The margin indicator stays off so the rows isolate the curvature
    response; at lambda 0 the CMPL column equals the unsquared symmetric
    Chamfer mean.
    """
    if len(cases) == 0:
        raise ValueError("lambda_sweep needs at least one case")
    prepared = []
    for pred, gt, pred_curv in cases:
        if not isinstance(gt, LabeledPointCloud):
            gt = LabeledPointCloud(points=np.asarray(gt, np.float64).reshape(-1, 3))
        prepared.append((np.asarray(pred, np.float64).reshape(-1, 3), gt, pred_curv))
    rows = []
    for lam in lambdas:
        cfg = LossConfig(lambda_=float(lam), margin_weight_enabled=False)
        vals = [cmpl(p, g, c, config=cfg).value for p, g, c in prepared]
        cds = [chamfer_l2(p, g.points).value for p, g, _ in prepared]
        hds = [hausdorff(p, g.points) for p, g, _ in prepared]
        rows.append({
            "lambda": float(lam),
            "CMPL (mm)": float(np.mean(vals)),
            "CD-L2 (mm^2)": float(np.mean(cds)),
            "Hausdorff Distance (mm)": float(np.mean(hds)),
        })
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {SWEEP_NOTE}\n")
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
    return rows


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".9g")
    return v


def case_row(case_name, tooth_class, pred_crown, pred_margin, bundle, config):
    """One evaluation CSV row for a predicted crown against its bundle."""
    m = crown_metrics(pred_crown, bundle.gt_crown, tau=config.f_score_tau,
                      n_samples=config.sample_count, seed=config.seeds)
    mh = margin_hausdorff(pred_margin, bundle.gt_margin)
    med = abs(pia(pred_crown, bundle.medial_neighbor)
              - pia(bundle.gt_crown, bundle.medial_neighbor))
    lat = abs(pia(pred_crown, bundle.lateral_neighbor)
              - pia(bundle.gt_crown, bundle.lateral_neighbor))
    return {
        "case": case_name,
        "class": tooth_class,
        "CD-L2 (mm^2)": m.cd_l2,
        "Fidelity Distance (mm^2)": m.fidelity,
        "Hausdorff Distance (mm)": m.hausdorff,
        "F-score": m.f_score,
        "Margin Hausdorff Distance (mm)": mh,
        "Medial Area Difference (mm^2)": med,
        "Lateral Area Difference (mm^2)": lat,
        "threshold_used": config.f_score_tau,
        "sample_seed": config.seeds,
    }


def write_eval_csv(rows, path, header_comments=()):
    """Write case rows plus Premolar/Molar/Overall mean footer rows."""
    numeric = [c for c in EVAL_COLUMNS if c not in ("case", "class")]
    with open(path, "w", newline="") as fh:
        for c in header_comments:
            fh.write(f"# {c}\n")
        writer = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in EVAL_COLUMNS})
        for group in ("Premolar", "Molar", "Overall"):
            members = [r for r in rows
                       if group == "Overall" or r["class"] == group]
            if not members:
                continue
            footer = {"case": group, "class": "mean"}
            for c in numeric:
                footer[c] = _fmt(float(np.mean([float(r[c]) for r in members])))
            writer.writerow(footer)
