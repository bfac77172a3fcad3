"""Command-line surface for the crown toolkit.

Subcommands cover the individual stages (``margin``, ``trim``, ``recon``,
``loss``, ``metrics``, ``forward``, ``synth``) plus the end-to-end
``pipeline`` (margin -> seeded point generation -> sealed reconstruction ->
trim) and batch ``eval`` emitting a CSV with per-case metric rows and
Premolar/Molar/Overall mean footers.

Exit codes: 0 on success, 2 on validation errors, 3 when a batch run
completed partially (some cases missing or failed).
"""

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import meshio, report, synth
from .config import load_config
from .errors import CrownForgeError, MissingCaseError, PipelineStageError
from .losses import LossConfig, ce_dice, chamfer_l2, cmpl, cpl, dpsr_mse, mpl
from .margin import extract_margin, seal_disk_points
from .mesh import boundary_loops, topology_report
from .metrics import crown_metrics, pia
from .nnblocks import (AttentionParams, FeatureMatrix, RefineParams,
                       TemplateDeformParams, VfeParams, affine_adapter,
                       cat_forward, gat_forward, global_feature,
                       refine_forward, sat_forward, seeded_linear,
                       template_deform_forward, vfe_forward)
from .pointops import (LabeledPointCloud, estimate_normals_pca,
                       farthest_point_sample, nearest_neighbor, voxelize)
from .postprocess import postprocess_crown, project_to_polyline
from .recon import reconstruct
from .synth import SceneSpec, make_scene, make_template, save_bundle


# ---------------------------------------------------------------------------
# config plumbing

def _add_config_flags(p):
    p.add_argument("--config", default=None, metavar="FILE",
                   help="key=value config file (default: $CROWNFORGE_CONFIG)")
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--f-score-tau", type=float, default=None)
    p.add_argument("--sample-count", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--smoothing", type=float, default=None)


def _config_from(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(
        resolution=args.resolution, sigma=args.sigma, lambda_=args.lambda_,
        f_score_tau=args.f_score_tau, sample_count=args.sample_count,
        seeds=args.seeds, smoothing=args.smoothing)


def _hash_comments(cfg):
    return [f"config_hash {cfg.config_hash()}"]


def _load_geometry(path):
    """Mesh if the PLY has faces, else the raw point array."""
    try:
        return meshio.load_mesh(path)
    except CrownForgeError:
        return meshio.load_pointcloud(path).points


# ---------------------------------------------------------------------------
# single-stage subcommands

def _cmd_margin(args):
    cfg = _config_from(args)
    mesh = meshio.load_mesh(args.mesh)
    curve = extract_margin(mesh, smoothing=cfg.smoothing)
    meshio.save_margin(curve, args.out, comments=_hash_comments(cfg))
    print(f"margin: {len(curve.resampled)} stations -> {args.out}")
    return 0


def _cmd_trim(args):
    cfg = _config_from(args)
    mesh = meshio.load_mesh(args.mesh)
    curve = meshio.load_margin(args.margin)
    crown = postprocess_crown(mesh, curve, fast=not args.exact)
    meshio.save_mesh(crown, args.out, comments=_hash_comments(cfg))
    rep = topology_report(crown)
    print(f"trim: euler={rep.euler_characteristic} "
          f"loops={rep.boundary_loop_count} -> {args.out}")
    return 0


def _cmd_recon(args):
    cfg = _config_from(args)
    cloud = meshio.load_pointcloud(args.cloud)
    mesh = reconstruct(cloud.points, cloud.normals,
                       resolution=cfg.resolution, sigma=cfg.sigma,
                       padding=args.padding)
    meshio.save_mesh(mesh, args.out, comments=_hash_comments(cfg))
    rep = topology_report(mesh)
    print(f"recon: {mesh.n_vertices} verts euler={rep.euler_characteristic} "
          f"-> {args.out}")
    return 0


def _write_grad_ply(path, points, gradient, comments):
    props = ["property double x", "property double y", "property double z",
             "property float gx", "property float gy", "property float gz"]
    cols = [points[:, 0], points[:, 1], points[:, 2],
            gradient[:, 0].astype(np.float32),
            gradient[:, 1].astype(np.float32),
            gradient[:, 2].astype(np.float32)]
    dtypes = ["<f8", "<f8", "<f8", "<f4", "<f4", "<f4"]
    meshio._write_ply(path, comments, [
        ("vertex", len(points), props,
         meshio._scalar_rows_writer(cols, dtypes, True)),
    ], binary=True)


def _cmd_loss(args):
    cfg = _config_from(args)
    want_grad = args.grad_out is not None
    if args.kind == "dpsr":
        value = dpsr_mse(meshio.load_grid(args.pred), meshio.load_grid(args.gt))
        print(f"dpsr = {value:.9g}")
        return 0

    pred = meshio.load_pointcloud(args.pred)
    gt = meshio.load_pointcloud(args.gt)
    if args.kind == "ce_dice":
        # probabilities travel in the pred cloud's curvature channel
        if pred.curvature is None:
            raise CrownForgeError("ce_dice needs a curvature property on the "
                                  "pred cloud to carry probabilities")
        value = ce_dice(pred.curvature, gt.labels)
        print(f"ce_dice = {value:.9g}")
        return 0

    lcfg = LossConfig(lambda_=cfg.lambda_, use_squared=args.squared,
                      margin_weight_enabled=not args.no_margin_weight)
    if args.kind == "chamfer":
        res = chamfer_l2(pred.points, gt.points, with_grad=want_grad)
    elif args.kind == "mpl":
        res = mpl(pred.points, gt, config=lcfg, with_grad=want_grad)
    else:
        curv = pred.curvature
        if curv is None:
            # fall back to the nearest GT point's curvature
            if gt.curvature is None:
                raise CrownForgeError(f"{args.kind} needs curvature on the "
                                      "pred or gt cloud")
            idx, _ = nearest_neighbor(pred.points, gt.points)
            curv = gt.curvature[idx]
        fn = cmpl if args.kind == "cmpl" else cpl
        res = fn(pred.points, gt, curv, config=lcfg, with_grad=want_grad)
    print(f"{args.kind} = {res.value:.9g}")
    if want_grad:
        _write_grad_ply(args.grad_out, pred.points, res.gradient,
                        _hash_comments(cfg))
        print(f"gradient -> {args.grad_out}")
    return 0


def _cmd_metrics(args):
    cfg = _config_from(args)
    pred = _load_geometry(args.pred)
    gt = _load_geometry(args.gt)
    m = crown_metrics(pred, gt, tau=cfg.f_score_tau,
                      n_samples=cfg.sample_count, seed=cfg.seeds)
    print(f"CD-L2 (mm^2) = {m.cd_l2:.9g}")
    print(f"Fidelity Distance (mm^2) = {m.fidelity:.9g}")
    print(f"Hausdorff Distance (mm) = {m.hausdorff:.9g}")
    print(f"F-score = {m.f_score:.9g}")
    if args.medial or args.lateral:
        for side, path in (("medial", args.medial), ("lateral", args.lateral)):
            if path:
                area = pia(pred, meshio.load_mesh(path))
                print(f"PIA {side} (mm^2) = {area:.9g}")
    return 0


def _cmd_forward(args):
    cfg = _config_from(args)
    seed, c = args.seed, args.channels
    cloud = meshio.load_pointcloud(args.cloud)
    w, b = seeded_linear(seed, 3, c)
    x = FeatureMatrix(tokens=cloud.points @ w + b, coords=cloud.points)

    if args.block in ("sat", "gat", "cat"):
        if args.block == "sat":
            out = sat_forward(x, AttentionParams.seeded(seed + 1, c))
        elif args.block == "gat":
            out = gat_forward(x, AttentionParams.seeded(seed + 1, c),
                              start=args.start)
        else:
            kv_cloud = meshio.load_pointcloud(args.kv)
            kw, kb = seeded_linear(seed + 2, 3, c)
            kv = FeatureMatrix(tokens=kv_cloud.points @ kw + kb,
                               coords=kv_cloud.points)
            out = cat_forward(x, kv, AttentionParams.seeded(seed + 1, c))
        tensors = {"tokens": out.tokens}
        if out.coords is not None:
            tensors["coords"] = out.coords
        meshio.save_params(tensors, args.out)
        print(f"{args.block}: tokens {out.tokens.shape} -> {args.out}")
    elif args.block == "vfe":
        vox = voxelize(cloud, args.cell_size)
        idx, feats = vfe_forward(cloud, vox, VfeParams.seeded(seed + 1))
        meshio.save_params({"voxel_indices": idx.astype(np.float32),
                            "features": feats}, args.out)
        print(f"vfe: {len(idx)} voxels -> {args.out}")
    elif args.block == "deform":
        kv_cloud = meshio.load_pointcloud(args.kv)
        gw, gb = seeded_linear(seed + 2, 3, 512)
        g = global_feature(FeatureMatrix(tokens=kv_cloud.points), gw, gb)
        moved = template_deform_forward(
            cloud.points, g, TemplateDeformParams.seeded(seed + 3))
        meshio.save_pointcloud(LabeledPointCloud(points=moved), args.out,
                               comments=_hash_comments(cfg))
        print(f"deform: {len(moved)} points -> {args.out}")
    else:  # refine
        kv_cloud = meshio.load_pointcloud(args.kv)
        kw, kb = seeded_linear(seed + 2, 3, c)
        kv = FeatureMatrix(tokens=kv_cloud.points @ kw + kb,
                           coords=kv_cloud.points)
        pts, _ = refine_forward(x, kv, RefineParams.seeded(seed + 3, c))
        meshio.save_pointcloud(LabeledPointCloud(points=pts), args.out,
                               comments=_hash_comments(cfg))
        print(f"refine: {len(pts)} points -> {args.out}")
    return 0


def _cmd_synth(args):
    for i in range(args.count):
        spec = SceneSpec(seed=args.seed + i, cusp_count=args.cusp_count,
                         neighbor_gap=args.neighbor_gap,
                         neighbor_overlap=args.neighbor_overlap,
                         jitter=args.jitter)
        bundle = make_scene(spec)
        case_dir = os.path.join(args.out, f"case_{spec.seed:04d}")
        save_bundle(bundle, case_dir, spec=spec)
        print(f"synth: case_{spec.seed:04d} -> {case_dir}")
    return 0


# ---------------------------------------------------------------------------
# pipeline

def _place_template(template_points, curve):
    """Scale the canonical template to the margin radius and move it into
    the margin frame (base circle on the margin plane, axis = growth_dir)."""
    g = curve.growth_dir
    e = np.array([1.0, 0.0, 0.0]) if abs(g[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(g, e)
    u /= np.linalg.norm(u)
    v = np.cross(g, u)
    planar = curve.resampled - curve.centroid
    planar -= (planar @ g)[:, None] * g
    r_margin = float(np.linalg.norm(planar, axis=1).mean())
    r_template = float(np.hypot(template_points[:, 0], template_points[:, 1]).max())
    s = r_margin / r_template
    t = template_points * s
    return (curve.centroid
            + t[:, 0:1] * u + t[:, 1:2] * v + t[:, 2:3] * g)


def _scan_features(ios, seed):
    """Seeded toy encoder over the scan: FPS 256 vertices -> SAT -> GAT,
    returning the pre-GAT tokens, post-GAT tokens (widened to 128 channels)
    and a 512-wide global feature."""
    pts = ios.vertices
    k = max(4, (min(256, len(pts)) // 4) * 4)
    coords = pts[farthest_point_sample(pts, k, start=0)]
    center = coords.mean(axis=0)
    w, b = seeded_linear(seed + 10, 3, 64)
    f0 = FeatureMatrix(tokens=(coords - center) @ w + b, coords=coords)
    f0 = sat_forward(f0, AttentionParams.seeded(seed + 11, 64))
    f1 = gat_forward(f0, AttentionParams.seeded(seed + 12, 64), start=0)
    aw, ab = seeded_linear(seed + 13, 64, 128)
    f1 = affine_adapter(f1, aw, ab)
    gw, gb = seeded_linear(seed + 14, 128, 512)
    return f0, f1, global_feature(f1, gw, gb)


def _generate_points(ios, curve, template_class, seed, damp):
    """Template deformation plus two point-doubling refinements.

    The blocks run with seeded random weights, so their raw residuals are
    noise; ``damp`` scales every residual toward its parent point to keep
    the generated cloud crown-shaped while still exercising each block.
    """
    template = make_template(template_class)
    placed = _place_template(template.points, curve)
    f0, f1, g = _scan_features(ios, seed)

    coarse_raw = template_deform_forward(
        placed, g, TemplateDeformParams.seeded(seed + 20))
    coarse = placed + damp * (coarse_raw - placed)

    ew, eb = seeded_linear(seed + 30, 3, 128)
    feats = FeatureMatrix(tokens=coarse @ ew + eb, coords=coarse)
    raw1, child1 = refine_forward(feats, f1, RefineParams.seeded(seed + 31, 128))
    parents1 = np.repeat(coarse, 2, axis=0)
    pts1 = parents1 + damp * (raw1 - parents1)

    feats1 = FeatureMatrix(tokens=child1.tokens, coords=pts1)
    raw2, _ = refine_forward(
        feats1, f0, RefineParams.seeded(seed + 32, 128, kv_channels=64))
    parents2 = np.repeat(pts1, 2, axis=0)
    return parents2 + damp * (raw2 - parents2)


def run_pipeline(ios_path, out_dir, template_class="molar", config=None,
                 deform_damp=0.05):
    """Run margin extraction, point generation, sealed reconstruction and
    trimming on one labeled scan.

    Parameters
    ----------
    ios_path : str
        Labeled scan mesh; abutment vertices carry label 1.
    out_dir : str
        Receives margin.ply, watertight.ply, crown.ply and report.txt.
        Artifacts are written as soon as their stage finishes, so a failed
        run keeps everything produced before the failing stage.
    template_class : str
        Crown template family passed to the generator.
    config : RunConfig, optional
        Defaults to :func:`load_config` resolution.
    deform_damp : float
        Residual damping applied to the seeded generator blocks.

    Returns
    -------
    dict
        Output paths keyed by artifact name.

    Raises
    ------
    PipelineStageError
        Naming the failing stage, chained to the cause.
    """
    cfg = config if config is not None else load_config()
    os.makedirs(out_dir, exist_ok=True)
    comments = _hash_comments(cfg)
    paths = {}
    timings = []

    def run(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            raise PipelineStageError(f"stage '{name}' failed: {exc}") from exc
        timings.append((name, time.perf_counter() - t0))
        return out

    ios = run("load", lambda: meshio.load_mesh(ios_path))

    curve = run("margin", lambda: extract_margin(ios, smoothing=cfg.smoothing))
    paths["margin"] = os.path.join(out_dir, "margin.ply")
    meshio.save_margin(curve, paths["margin"], comments=comments)

    points = run("generate", lambda: _generate_points(
        ios, curve, template_class, cfg.seeds, deform_damp))

    def recon_stage():
        normals = estimate_normals_pca(points, k=16)
        seal_p, seal_n = seal_disk_points(curve, max(len(points) // 3, 64),
                                          offset=0.6, seed=cfg.seeds + 777)
        # padding grows with resolution so the physical slack around the
        # seal rim stays ~constant; 4 cells at R=64 proved enough
        pad = max(4, cfg.resolution // 16)
        return reconstruct(np.vstack([points, seal_p]),
                           np.vstack([normals, seal_n]),
                           resolution=cfg.resolution, sigma=cfg.sigma,
                           padding=pad)

    watertight = run("reconstruct", recon_stage)
    paths["watertight"] = os.path.join(out_dir, "watertight.ply")
    meshio.save_mesh(watertight, paths["watertight"], comments=comments)

    crown = run("trim", lambda: postprocess_crown(watertight, curve))
    paths["crown"] = os.path.join(out_dir, "crown.ply")
    meshio.save_mesh(crown, paths["crown"], comments=comments)

    wrep = topology_report(watertight)
    crep = topology_report(crown)
    rim = np.concatenate(boundary_loops(crown)) if crep.boundary_loop_count else []
    rim_dist = 0.0
    if len(rim):
        proj = project_to_polyline(crown.vertices[rim], curve.resampled)
        rim_dist = float(np.linalg.norm(crown.vertices[rim] - proj, axis=1).max())

    paths["report"] = os.path.join(out_dir, "report.txt")
    with open(paths["report"], "w") as fh:
        fh.write("crownforge pipeline report\n")
        fh.write(f"config_hash {cfg.config_hash()}\n")
        fh.write(cfg.to_text())
        fh.write(f"template_class={template_class}\n")
        fh.write(f"deform_damp={deform_damp}\n")
        fh.write(f"points_generated={len(points)}\n")
        fh.write("[topology]\n")
        fh.write(f"watertight_euler={wrep.euler_characteristic}\n")
        fh.write(f"watertight_boundary_loops={wrep.boundary_loop_count}\n")
        fh.write(f"watertight_components={wrep.connected_component_count}\n")
        fh.write(f"crown_euler={crep.euler_characteristic}\n")
        fh.write(f"crown_boundary_loops={crep.boundary_loop_count}\n")
        fh.write(f"crown_rim_max_dist_mm={rim_dist:.9g}\n")
        # wall-clock seconds; the only non-deterministic lines in the report
        fh.write("[timings]\n")
        for name, dt in timings:
            fh.write(f"{name}={dt:.3f}\n")
    return paths


def _cmd_pipeline(args):
    cfg = _config_from(args)
    paths = run_pipeline(args.ios, args.out, template_class=args.template_class,
                         config=cfg, deform_damp=args.deform_damp)
    print(f"pipeline: crown -> {paths['crown']}")
    return 0


# ---------------------------------------------------------------------------
# batch evaluation

def _eval_case(task):
    """Worker: one metric row. Top-level so process pools can pickle it."""
    case_name, case_dir, pred_dir, cfg = task
    crown_path = os.path.join(pred_dir, case_name, "crown.ply")
    margin_path = os.path.join(pred_dir, case_name, "margin.ply")
    for p in (crown_path, margin_path):
        if not os.path.exists(p):
            raise MissingCaseError(f"{case_name}: missing {os.path.basename(p)}")
    bundle = synth.load_bundle(case_dir)
    tooth = "Unknown"
    spec_path = os.path.join(case_dir, "spec.txt")
    if os.path.exists(spec_path):
        sp = synth.load_spec(spec_path)
        tooth = "Molar" if sp.cusp_count >= 4 else "Premolar"
    pred_crown = meshio.load_mesh(crown_path)
    pred_margin = meshio.load_margin(margin_path)
    return report.case_row(case_name, tooth, pred_crown, pred_margin,
                           bundle, cfg)


def evaluate_batch(cases_dir, pred_dir, out_csv, config=None, workers=None):
    """Evaluate every case bundle against its prediction directory.

    Rows are written in case-name order regardless of worker completion
    order; missing or failing cases are reported and skipped.

    Returns
    -------
    (rows, failures) : (list of dict, list of (case, message))
    """
    cfg = config if config is not None else load_config()
    names = sorted(d for d in os.listdir(cases_dir)
                   if os.path.isdir(os.path.join(cases_dir, d)))
    if not names:
        raise MissingCaseError(f"no case directories under {cases_dir}")
    tasks = [(n, os.path.join(cases_dir, n), pred_dir, cfg) for n in names]

    results = {}
    failures = []
    if workers is not None and workers <= 1:
        for task in tasks:
            try:
                results[task[0]] = _eval_case(task)
            except (CrownForgeError, OSError) as exc:
                failures.append((task[0], str(exc)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {t[0]: pool.submit(_eval_case, t) for t in tasks}
            for name in names:
                try:
                    results[name] = futures[name].result()
                except (CrownForgeError, OSError) as exc:
                    failures.append((name, str(exc)))

    rows = [results[n] for n in names if n in results]
    header = [f"config_hash {cfg.config_hash()}"] + cfg.to_text().splitlines()
    report.write_eval_csv(rows, out_csv, header_comments=header)
    return rows, failures


def _cmd_eval(args):
    cfg = _config_from(args)
    rows, failures = evaluate_batch(args.cases, args.pred, args.out,
                                    config=cfg, workers=args.workers)
    print(f"eval: {len(rows)} cases -> {args.out}")
    for name, msg in failures:
        print(f"skipped {name}: {msg}", file=sys.stderr)
    return 3 if failures else 0


# ---------------------------------------------------------------------------
# parser

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="crownforge",
        description="Dental crown geometry pipeline: margin extraction, "
                    "trimming, reconstruction, losses, metrics and eval.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("margin", help="extract the cervical margin curve")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True, help=".ply polyline or .txt record")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_margin)

    p = sub.add_parser("trim", help="trim a watertight crown at the margin")
    p.add_argument("--mesh", required=True)
    p.add_argument("--margin", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exact", action="store_true",
                   help="use the exhaustive height kernel")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_trim)

    p = sub.add_parser("recon", help="Poisson reconstruction of an oriented cloud")
    p.add_argument("--cloud", required=True, help="PLY with nx/ny/nz")
    p.add_argument("--out", required=True)
    p.add_argument("--padding", type=int, default=2)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_recon)

    p = sub.add_parser("loss", help="evaluate a loss between two files")
    p.add_argument("--kind", required=True,
                   choices=["chamfer", "cmpl", "cpl", "mpl", "dpsr", "ce_dice"])
    p.add_argument("--pred", required=True, help="PLY cloud (or .cgrd for dpsr)")
    p.add_argument("--gt", required=True)
    p.add_argument("--squared", action="store_true")
    p.add_argument("--no-margin-weight", action="store_true")
    p.add_argument("--grad-out", default=None,
                   help="write d(loss)/d(pred) as a PLY with gx/gy/gz")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("metrics", help="crown metrics between two meshes/clouds")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--medial", default=None, help="adjacent mesh for PIA")
    p.add_argument("--lateral", default=None)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("forward", help="run one seeded attention block")
    p.add_argument("--block", required=True,
                   choices=["sat", "gat", "cat", "vfe", "deform", "refine"])
    p.add_argument("--cloud", required=True)
    p.add_argument("--kv", default=None, help="second cloud for cat/deform/refine")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--start", type=int, default=0, help="FPS seed index for gat")
    p.add_argument("--cell-size", type=float, default=1.0, help="vfe voxel size")
    p.add_argument("--out", required=True,
                   help=".cgrd tensor archive (sat/gat/cat/vfe) or .ply "
                        "(deform/refine)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_forward)

    p = sub.add_parser("synth", help="generate synthetic scene bundles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--cusp-count", type=int, default=4)
    p.add_argument("--neighbor-gap", type=float, default=0.5)
    p.add_argument("--neighbor-overlap", type=float, default=0.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="margin -> generate -> recon -> trim")
    p.add_argument("--ios", required=True, help="labeled scan mesh")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--template-class", default="molar",
                   choices=["hemisphere", "premolar", "molar"])
    p.add_argument("--deform-damp", type=float, default=0.05)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("eval", help="batch-evaluate predictions against bundles")
    p.add_argument("--cases", required=True, help="directory of case bundles")
    p.add_argument("--pred", required=True,
                   help="directory of per-case pipeline outputs")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: logical CPUs)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CrownForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
