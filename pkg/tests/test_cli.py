import csv
import os

import numpy as np
import pytest

from crownforge import meshio
from crownforge.cli import evaluate_batch, main, run_pipeline
from crownforge.config import RunConfig, load_config
from crownforge.mesh import topology_report
from crownforge.pointops import LabeledPointCloud
from crownforge.recon import rasterize_oriented_points, poisson_solve
from crownforge.synth import SceneSpec, make_scene, save_bundle


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def case_tree(workdir):
    """Two bundles (one molar, one premolar) plus perfect predictions."""
    cases = workdir / "cases"
    pred = workdir / "pred"
    for i, cusps in enumerate((4, 2)):
        spec = SceneSpec(seed=i, cusp_count=cusps)
        bundle = make_scene(spec)
        save_bundle(bundle, cases / f"case_{i:04d}", spec=spec)
        pdir = pred / f"case_{i:04d}"
        os.makedirs(pdir)
        meshio.save_mesh(bundle.gt_crown, pdir / "crown.ply")
        meshio.save_margin(bundle.gt_margin, pdir / "margin.ply")
    return cases, pred


@pytest.fixture(scope="module")
def pipeline_out(case_tree, workdir):
    cases, _ = case_tree
    out = workdir / "pipe_a"
    code = main(["pipeline", "--ios", str(cases / "case_0000" / "ios.ply"),
                 "--out", str(out), "--resolution", "64"])
    assert code == 0
    return out


def read_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_synth_writes_bundles(workdir):
    out = workdir / "synth_out"
    assert main(["synth", "--seed", "5", "--count", "2", "--out", str(out)]) == 0
    for seed in (5, 6):
        case = out / f"case_{seed:04d}"
        for name in ("ios.ply", "crown_gt.ply", "margin_gt.ply",
                     "neighbor_medial.ply", "neighbor_lateral.ply",
                     "template.ply", "spec.txt"):
            assert (case / name).exists()


def test_margin_subcommand(case_tree, workdir):
    cases, _ = case_tree
    out = workdir / "margin_cli.ply"
    code = main(["margin", "--mesh", str(cases / "case_0000" / "ios.ply"),
                 "--out", str(out)])
    assert code == 0
    curve = meshio.load_margin(out)
    assert curve.resampled.shape == (1000, 3)
    head = out.read_bytes().split(b"end_header")[0]
    assert b"config_hash " + RunConfig().config_hash().encode() in head


def test_margin_requires_labels(case_tree, workdir, capsys):
    cases, _ = case_tree
    code = main(["margin", "--mesh", str(cases / "case_0000" / "crown_gt.ply"),
                 "--out", str(workdir / "nope.ply")])
    assert code == 2
    err = capsys.readouterr().err
    assert "extract_abutment_submesh" in err
    assert not (workdir / "nope.ply").exists()


def test_pipeline_artifacts(pipeline_out):
    for name in ("margin.ply", "watertight.ply", "crown.ply", "report.txt"):
        assert (pipeline_out / name).exists()
    crown = meshio.load_mesh(pipeline_out / "crown.ply")
    rep = topology_report(crown)
    assert rep.euler_characteristic == 1
    assert rep.boundary_loop_count == 1
    wt = topology_report(meshio.load_mesh(pipeline_out / "watertight.ply"))
    assert wt.is_watertight
    report = (pipeline_out / "report.txt").read_text()
    assert "crown_boundary_loops=1" in report
    assert "watertight_boundary_loops=0" in report
    assert "[timings]" in report
    rim_line = [l for l in report.splitlines()
                if l.startswith("crown_rim_max_dist_mm=")][0]
    assert float(rim_line.split("=")[1]) < 1e-6


def test_pipeline_rerun_is_byte_identical(case_tree, workdir, pipeline_out):
    cases, _ = case_tree
    again = workdir / "pipe_b"
    code = main(["pipeline", "--ios", str(cases / "case_0000" / "ios.ply"),
                 "--out", str(again), "--resolution", "64"])
    assert code == 0
    for name in ("margin.ply", "watertight.ply", "crown.ply"):
        assert (again / name).read_bytes() == (pipeline_out / name).read_bytes()
    # everything above the timing block is deterministic too
    a = (pipeline_out / "report.txt").read_text().split("[timings]")[0]
    b = (again / "report.txt").read_text().split("[timings]")[0]
    assert a == b


def test_trim_subcommand_matches_pipeline(pipeline_out, workdir):
    out = workdir / "retrim.ply"
    code = main(["trim", "--mesh", str(pipeline_out / "watertight.ply"),
                 "--margin", str(pipeline_out / "margin.ply"),
                 "--out", str(out)])
    assert code == 0
    crown = meshio.load_mesh(out)
    ref = meshio.load_mesh(pipeline_out / "crown.ply")
    assert np.array_equal(crown.faces, ref.faces)
    assert np.allclose(crown.vertices, ref.vertices, atol=1e-12)


def test_eval_perfect_predictions(case_tree, workdir):
    cases, pred = case_tree
    out = workdir / "eval.csv"
    code = main(["eval", "--cases", str(cases), "--pred", str(pred),
                 "--out", str(out), "--workers", "1",
                 "--sample-count", "2048"])
    assert code == 0
    rows = read_rows(out)
    body = [r for r in rows if r["class"] not in ("mean",)]
    assert [r["case"] for r in body] == ["case_0000", "case_0001"]
    assert [r["class"] for r in body] == ["Molar", "Premolar"]
    for r in body:
        assert float(r["CD-L2 (mm^2)"]) == 0.0
        assert float(r["Hausdorff Distance (mm)"]) == 0.0
        assert float(r["F-score"]) == 1.0
        assert float(r["Margin Hausdorff Distance (mm)"]) <= 1e-9
        assert float(r["Medial Area Difference (mm^2)"]) == 0.0
        assert float(r["Lateral Area Difference (mm^2)"]) == 0.0
    footers = {r["case"]: r for r in rows if r["class"] == "mean"}
    assert set(footers) == {"Premolar", "Molar", "Overall"}
    # footer means recompute from the body rows
    for col in ("CD-L2 (mm^2)", "F-score"):
        want = np.mean([float(r[col]) for r in body])
        assert float(footers["Overall"][col]) == pytest.approx(want, rel=5e-8)
    first = out.read_text().splitlines()[0]
    assert first.startswith("# config_hash ")


def test_eval_worker_count_does_not_change_bytes(case_tree, workdir):
    cases, pred = case_tree
    a = workdir / "eval_w1.csv"
    b = workdir / "eval_w2.csv"
    cfg = RunConfig(sample_count=1024)
    evaluate_batch(cases, pred, a, config=cfg, workers=1)
    evaluate_batch(cases, pred, b, config=cfg, workers=2)
    assert a.read_bytes() == b.read_bytes()


def test_eval_partial_batch(case_tree, workdir, capsys):
    cases, pred = case_tree
    sparse = workdir / "pred_sparse"
    os.makedirs(sparse / "case_0000", exist_ok=True)
    for name in ("crown.ply", "margin.ply"):
        (sparse / "case_0000" / name).write_bytes(
            (pred / "case_0000" / name).read_bytes())
    out = workdir / "eval_partial.csv"
    code = main(["eval", "--cases", str(cases), "--pred", str(sparse),
                 "--out", str(out), "--workers", "1",
                 "--sample-count", "1024"])
    assert code == 3
    assert "skipped case_0001" in capsys.readouterr().err
    body = [r for r in read_rows(out) if r["class"] != "mean"]
    assert [r["case"] for r in body] == ["case_0000"]


def test_eval_no_cases(workdir, capsys):
    empty = workdir / "no_cases"
    os.makedirs(empty, exist_ok=True)
    code = main(["eval", "--cases", str(empty), "--pred", str(empty),
                 "--out", str(workdir / "x.csv")])
    assert code == 2


def test_config_file_env_and_flags(case_tree, workdir, monkeypatch, capsys):
    cases, _ = case_tree
    cfg_file = workdir / "run.cfg"
    cfg_file.write_text("smoothing=2.0\nresolution=48\n")

    out = workdir / "m_env.ply"
    monkeypatch.setenv("CROWNFORGE_CONFIG", str(cfg_file))
    assert main(["margin", "--mesh", str(cases / "case_0000" / "ios.ply"),
                 "--out", str(out)]) == 0
    want = load_config(cfg_file).config_hash()
    assert b"config_hash " + want.encode() in out.read_bytes().split(b"end_header")[0]
    monkeypatch.delenv("CROWNFORGE_CONFIG")

    out2 = workdir / "m_flags.ply"
    assert main(["margin", "--mesh", str(cases / "case_0000" / "ios.ply"),
                 "--out", str(out2), "--config", str(cfg_file),
                 "--smoothing", "3.0"]) == 0
    overridden = load_config(cfg_file).with_overrides(smoothing=3.0).config_hash()
    assert b"config_hash " + overridden.encode() in out2.read_bytes().split(b"end_header")[0]
    assert overridden != want

    bad = workdir / "bad.cfg"
    bad.write_text("volume=7\n")
    code = main(["margin", "--mesh", str(cases / "case_0000" / "ios.ply"),
                 "--out", str(workdir / "m_bad.ply"), "--config", str(bad)])
    assert code == 2
    assert "unknown config key" in capsys.readouterr().err


def save_sphere_cloud(path, n=2048):
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    th = np.pi * (1 + 5 ** 0.5) * i
    d = np.column_stack([np.sin(phi) * np.cos(th),
                         np.sin(phi) * np.sin(th), np.cos(phi)])
    meshio.save_pointcloud(LabeledPointCloud(points=d * 3.0, normals=d), path)
    return d * 3.0


def test_recon_subcommand(workdir, capsys):
    cloud = workdir / "sphere.ply"
    save_sphere_cloud(cloud)
    out = workdir / "sphere_mesh.ply"
    code = main(["recon", "--cloud", str(cloud), "--out", str(out),
                 "--resolution", "32", "--padding", "4"])
    assert code == 0
    rep = topology_report(meshio.load_mesh(out))
    assert rep.is_watertight
    assert "euler=2" in capsys.readouterr().out


def test_loss_subcommand(workdir, capsys):
    rng = np.random.default_rng(0)
    a = workdir / "pred_cloud.ply"
    b = workdir / "gt_cloud.ply"
    pa = rng.normal(size=(64, 3))
    pb = rng.normal(size=(64, 3))
    meshio.save_pointcloud(LabeledPointCloud(points=pa), a)
    meshio.save_pointcloud(
        LabeledPointCloud(points=pb, curvature=rng.uniform(0, 1, 64),
                          margin_flags=(rng.uniform(size=64) < 0.5).astype(np.int32)),
        b)
    grad = workdir / "grad.ply"
    assert main(["loss", "--kind", "chamfer", "--pred", str(a), "--gt", str(b),
                 "--grad-out", str(grad)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("chamfer = ")
    assert grad.exists()
    assert main(["loss", "--kind", "cmpl", "--pred", str(a), "--gt", str(b)]) == 0
    assert "cmpl = " in capsys.readouterr().out


def test_loss_dpsr_subcommand(workdir, capsys):
    pts = np.random.default_rng(1).uniform(-1, 1, size=(100, 3))
    nrm = np.tile([0.0, 0.0, 1.0], (100, 1))
    vg = rasterize_oriented_points(pts, nrm, resolution=16, padding=2)
    sg = poisson_solve(vg, points=pts)
    ga = workdir / "a.cgrd"
    gb = workdir / "b.cgrd"
    meshio.save_grid(sg, ga)
    meshio.save_grid(sg, gb)
    assert main(["loss", "--kind", "dpsr", "--pred", str(ga), "--gt", str(gb)]) == 0
    assert capsys.readouterr().out.strip() == "dpsr = 0"


def test_loss_ce_dice_subcommand(workdir, capsys):
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(50, 3))
    labels = (rng.uniform(size=50) < 0.5).astype(np.int32)
    pred = workdir / "prob_cloud.ply"
    gt = workdir / "label_cloud.ply"
    meshio.save_pointcloud(
        LabeledPointCloud(points=pts, curvature=np.clip(labels * 0.9 + 0.05, 0, 1)),
        pred)
    meshio.save_pointcloud(LabeledPointCloud(points=pts, labels=labels), gt)
    assert main(["loss", "--kind", "ce_dice", "--pred", str(pred),
                 "--gt", str(gt)]) == 0
    printed = capsys.readouterr().out
    value = float(printed.split("=")[1])
    assert 0.0 < value < 0.5


def test_metrics_subcommand(case_tree, capsys):
    cases, pred = case_tree
    code = main(["metrics",
                 "--pred", str(pred / "case_0000" / "crown.ply"),
                 "--gt", str(cases / "case_0000" / "crown_gt.ply"),
                 "--medial", str(cases / "case_0000" / "neighbor_medial.ply"),
                 "--sample-count", "1024"])
    assert code == 0
    out = capsys.readouterr().out
    assert "CD-L2 (mm^2) = 0" in out
    assert "F-score = 1" in out
    assert "PIA medial (mm^2) = " in out


def test_forward_subcommands(workdir, capsys):
    cloud = workdir / "fwd_cloud.ply"
    rng = np.random.default_rng(3)
    meshio.save_pointcloud(LabeledPointCloud(points=rng.normal(size=(64, 3))), cloud)
    kv = workdir / "fwd_kv.ply"
    meshio.save_pointcloud(LabeledPointCloud(points=rng.normal(size=(32, 3))), kv)

    out = workdir / "sat.cgrd"
    assert main(["forward", "--block", "sat", "--cloud", str(cloud),
                 "--out", str(out), "--channels", "16"]) == 0
    tensors = meshio.load_params(out)
    assert tensors["tokens"].shape == (64, 16)
    assert tensors["coords"].shape == (64, 3)

    out_g = workdir / "gat.cgrd"
    assert main(["forward", "--block", "gat", "--cloud", str(cloud),
                 "--out", str(out_g), "--channels", "16"]) == 0
    assert meshio.load_params(out_g)["tokens"].shape == (16, 16)

    out_r = workdir / "refined.ply"
    assert main(["forward", "--block", "refine", "--cloud", str(cloud),
                 "--kv", str(kv), "--out", str(out_r), "--channels", "16"]) == 0
    assert len(meshio.load_pointcloud(out_r).points) == 128

    out_v = workdir / "vfe.cgrd"
    assert main(["forward", "--block", "vfe", "--cloud", str(cloud),
                 "--out", str(out_v), "--cell-size", "1.5"]) == 0
    t = meshio.load_params(out_v)
    assert t["features"].shape[0] == t["voxel_indices"].shape[0]
    capsys.readouterr()


def test_missing_file_exits_2(workdir, capsys):
    code = main(["metrics", "--pred", str(workdir / "ghost.ply"),
                 "--gt", str(workdir / "ghost.ply")])
    assert code == 2
    assert "error:" in capsys.readouterr().err
