import numpy as np
import pytest

from crownforge.errors import (
    EmptySetError,
    EmptyTargetError,
    KTooLargeError,
    LengthMismatchError,
)
from crownforge.pointops import (
    LabeledPointCloud,
    downsample_fraction,
    estimate_normals_pca,
    farthest_point_sample,
    nearest_neighbor,
    voxelize,
)


def brute_nn(query, target):
    dist2 = ((query[:, None, :] - target[None, :, :]) ** 2).sum(axis=2)
    idx = dist2.argmin(axis=1)
    d = np.linalg.norm(query - target[idx], axis=1)
    return idx, d


def fps_reference(points, k, start=0):
    """Direct transcription of the greedy rule, one scan per step."""
    n = len(points)
    chosen = [start]
    mind = np.linalg.norm(points - points[start], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.linalg.norm(points - points[nxt], axis=1))
    return np.array(chosen)


def test_nn_matches_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(5):
        q = rng.normal(size=(512, 3))
        t = rng.normal(size=(512, 3))
        idx, dist = nearest_neighbor(q, t)
        bidx, bdist = brute_nn(q, t)
        assert np.array_equal(idx, bidx)
        assert np.array_equal(dist, bdist)


def test_nn_tie_breaks_to_lowest_index():
    # two targets equidistant from the origin query
    q = np.zeros((1, 3))
    t = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
    idx, dist = nearest_neighbor(q, t)
    assert idx[0] == 0
    assert dist[0] == 1.0
    # same with the coincident-duplicate case
    t2 = np.array([[0.5, 0, 0], [0.5, 0, 0], [2, 0, 0]])
    idx2, _ = nearest_neighbor(q, t2)
    assert idx2[0] == 0


def test_nn_empty_target_raises():
    with pytest.raises(EmptyTargetError):
        nearest_neighbor(np.zeros((2, 3)), np.zeros((0, 3)))


def test_nn_empty_query_ok():
    idx, dist = nearest_neighbor(np.zeros((0, 3)), np.zeros((3, 3)))
    assert idx.shape == (0,)
    assert dist.shape == (0,)


def test_fps_matches_reference():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(400, 3))
    for k in (1, 7, 64, 400):
        assert np.array_equal(farthest_point_sample(pts, k),
                              fps_reference(pts, k))
    assert np.array_equal(farthest_point_sample(pts, 32, start=17),
                          fps_reference(pts, 32, start=17))


def test_fps_cube_corners_first():
    # unit cube corners plus interior jitter: first 8 picks are the corners
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                       dtype=float)
    rng = np.random.default_rng(2)
    interior = rng.uniform(0.3, 0.7, size=(50, 3))
    pts = np.vstack([corners, interior])
    idx = farthest_point_sample(pts, 8, start=0)
    assert sorted(idx.tolist()) == list(range(8))


def test_fps_collinear_points():
    # on a line, FPS alternates between the far end and midpoints
    pts = np.column_stack([np.linspace(0, 10, 11), np.zeros(11), np.zeros(11)])
    idx = farthest_point_sample(pts, 3, start=0)
    assert idx.tolist() == [0, 10, 5]


def test_fps_k_out_of_range():
    pts = np.zeros((5, 3))
    with pytest.raises(KTooLargeError):
        farthest_point_sample(pts, 6)
    with pytest.raises(KTooLargeError):
        farthest_point_sample(pts, 0)
    with pytest.raises(EmptySetError):
        farthest_point_sample(np.zeros((0, 3)), 1)


def test_voxelize_floor_formula():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-5, 5, size=(10000, 3))
    cell = 0.37
    vm = voxelize(pts, cell)
    origin = pts.min(axis=0)
    assert np.array_equal(vm.origin, origin)
    seen = 0
    for key, members in vm.cells.items():
        expect = np.floor((pts[members] - origin) / cell).astype(np.int64)
        assert np.all(expect == np.asarray(key))
        seen += len(members)
    assert seen == len(pts)


def test_voxelize_cube_corners_separate_cells():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                       dtype=float)
    vm = voxelize(corners, 0.5)
    assert len(vm.cells) == 8
    # boundary points land in the higher-index cell: corner (1,1,1) is cell (2,2,2)
    assert (2, 2, 2) in vm.cells


def test_voxelize_iteration_order_lexicographic():
    rng = np.random.default_rng(4)
    vm = voxelize(rng.normal(size=(500, 3)), 0.8)
    keys = list(vm.cells)
    assert keys == sorted(keys)


def test_voxelize_rejects_bad_cell():
    with pytest.raises(ValueError):
        voxelize(np.zeros((3, 3)), 0.0)
    with pytest.raises(EmptySetError):
        voxelize(np.zeros((0, 3)), 1.0)


def test_downsample_carries_attributes():
    rng = np.random.default_rng(5)
    n = 64
    nrm = rng.normal(size=(n, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = LabeledPointCloud(
        points=rng.normal(size=(n, 3)),
        labels=rng.integers(0, 2, n),
        normals=nrm,
        curvature=rng.uniform(0, 1, n),
        margin_flags=rng.integers(0, 2, n),
    )
    half = downsample_fraction(cloud, 0.5)
    assert half.n_points == 32
    idx = farthest_point_sample(cloud.points, 32)
    assert np.array_equal(half.points, cloud.points[idx])
    assert np.array_equal(half.labels, cloud.labels[idx])
    assert np.array_equal(half.normals, cloud.normals[idx])
    assert np.array_equal(half.curvature, cloud.curvature[idx])
    assert np.array_equal(half.margin_flags, cloud.margin_flags[idx])
    quarter = downsample_fraction(cloud, 0.25)
    assert quarter.n_points == 16
    with pytest.raises(ValueError):
        downsample_fraction(cloud, 0.3)


def test_fps_translation_covariant():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(200, 3))
    shift = np.array([100.0, -40.0, 7.0])
    assert np.array_equal(farthest_point_sample(pts, 25),
                          farthest_point_sample(pts + shift, 25))


def test_cloud_validation():
    with pytest.raises(LengthMismatchError):
        LabeledPointCloud(points=np.zeros((4, 2)))
    with pytest.raises(LengthMismatchError):
        LabeledPointCloud(points=np.zeros((4, 3)), labels=np.zeros(3, dtype=int))
    with pytest.raises(ValueError):
        LabeledPointCloud(points=np.zeros((2, 3)),
                          normals=np.full((2, 3), 2.0))
    with pytest.raises(ValueError):
        LabeledPointCloud(points=np.zeros((2, 3)),
                          curvature=np.array([0.5, 1.5]))


def test_estimate_normals_plane():
    rng = np.random.default_rng(7)
    xy = rng.uniform(-1, 1, size=(300, 2))
    pts = np.column_stack([xy, np.zeros(300)])
    normals = estimate_normals_pca(pts, k=12, orient_origin=[0.0, 0.0, -1.0])
    assert np.allclose(np.abs(normals[:, 2]), 1.0, atol=1e-9)
    assert np.all(normals[:, 2] > 0)


def test_estimate_normals_sphere_outward():
    from crownforge.synth import icosphere
    from crownforge.mesh import sample_surface
    sph = icosphere(radius=3.0, subdivisions=3)
    pts, _, _ = sample_surface(sph, 2000, seed=8)
    normals = estimate_normals_pca(pts, k=16)
    radial = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    dots = np.einsum("ij,ij->i", normals, radial)
    assert np.mean(dots > 0.9) > 0.97
