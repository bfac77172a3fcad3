import numpy as np
import pytest

from crownforge.errors import (
    EmptySetError,
    MissingCurvatureError,
    MissingMarginFlagsError,
    ShapeMismatchError,
)
from crownforge.losses import LossConfig, ce_dice, chamfer_l2, cmpl, cpl, dpsr_mse, mpl
from crownforge.pointops import LabeledPointCloud, nearest_neighbor
from crownforge.recon import ScalarGrid


def random_instance(seed, n=48, m=64, spread=1.0):
    rng = np.random.default_rng(seed)
    pred = rng.normal(scale=spread, size=(n, 3))
    gt_pts = rng.normal(scale=spread, size=(m, 3))
    cloud = LabeledPointCloud(
        points=gt_pts,
        curvature=rng.uniform(0.0, 1.0, size=m),
        margin_flags=(rng.uniform(size=m) < 0.3).astype(np.int32),
    )
    pred_curv = rng.uniform(0.0, 1.0, size=n)
    return pred, cloud, pred_curv


def min_assignment_gap(pred, gt):
    """Smallest margin between each point's best and second-best neighbor."""
    gap = np.inf
    for a, b in ((pred, gt), (gt, pred)):
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        d.sort(axis=1)
        if d.shape[1] > 1:
            gap = min(gap, float((d[:, 1] - d[:, 0]).min()))
    return gap


def central_diff(fn, pred, h=1e-5):
    g = np.zeros_like(pred)
    for i in range(pred.shape[0]):
        for j in range(3):
            hi = pred.copy()
            hi[i, j] += h
            lo = pred.copy()
            lo[i, j] -= h
            g[i, j] = (fn(hi) - fn(lo)) / (2 * h)
    return g


def test_chamfer_single_pair_closed_form():
    pred = np.array([[0.0, 0.0, 0.0]])
    gt = np.array([[1.0, 0.0, 0.0]])
    res = chamfer_l2(pred, gt, with_grad=True)
    assert res.value == pytest.approx(2.0, abs=1e-15)
    assert np.allclose(res.gradient, [[-4.0, 0.0, 0.0]], atol=1e-15)


def test_chamfer_two_vs_one_closed_form():
    pred = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    gt = np.array([[0.0, 0.0, 0.0]])
    res = chamfer_l2(pred, gt, with_grad=True)
    # forward (0 + 9)/2, backward 0: the second pred point pulls toward gt
    # with weight 2*3/2, the first is the backward argmin at distance 0
    assert res.value == pytest.approx(4.5, abs=1e-15)
    assert np.allclose(res.gradient, [[0, 0, 0], [3.0, 0, 0]], atol=1e-15)


def test_chamfer_value_symmetric():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(20, 3))
    b = rng.normal(size=(30, 3))
    assert chamfer_l2(a, b).value == pytest.approx(chamfer_l2(b, a).value, rel=1e-15)


def test_chamfer_zero_on_identical_clouds():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(25, 3))
    res = chamfer_l2(a, a.copy(), with_grad=True)
    assert res.value == 0.0
    assert np.all(res.gradient == 0.0)


def test_cmpl_single_pair_closed_form():
    pred = np.array([[0.0, 0.0, 0.0]])
    cloud = LabeledPointCloud(points=np.array([[1.0, 0.0, 0.0]]),
                              curvature=np.array([1.0]),
                              margin_flags=np.array([1]))
    res = cmpl(pred, cloud, pred_curvature=np.array([0.0]),
               config=LossConfig(lambda_=1.0), with_grad=True)
    # forward weight e^0 + flag = 2, backward e^1 + 1; distance 1 each way
    assert res.value == pytest.approx(np.e + 3.0, abs=1e-12)
    want = -(2.0 + (np.e + 1.0)) * np.array([[1.0, 0.0, 0.0]])
    assert np.allclose(res.gradient, want, atol=1e-12)


def test_cmpl_reduces_to_plain_chamfer():
    rng = np.random.default_rng(5)
    pred = rng.normal(size=(40, 3))
    gt = rng.normal(size=(50, 3))
    cloud = LabeledPointCloud(points=gt, curvature=np.zeros(50),
                              margin_flags=np.zeros(50, dtype=np.int32))
    res = cmpl(pred, cloud, pred_curvature=np.zeros(40))
    _, d_pg = nearest_neighbor(pred, gt)
    _, d_gp = nearest_neighbor(gt, pred)
    plain = d_pg.mean() + d_gp.mean()
    assert abs(res.value - plain) < 1e-12


def test_cmpl_squared_reduces_to_chamfer_l2():
    rng = np.random.default_rng(6)
    pred = rng.normal(size=(30, 3))
    gt = rng.normal(size=(45, 3))
    cloud = LabeledPointCloud(points=gt, curvature=np.zeros(45),
                              margin_flags=np.zeros(45, dtype=np.int32))
    res = cmpl(pred, cloud, pred_curvature=np.zeros(30),
               config=LossConfig(use_squared=True), with_grad=True)
    ref = chamfer_l2(pred, gt, with_grad=True)
    assert abs(res.value - ref.value) < 1e-12
    assert np.allclose(res.gradient, ref.gradient, atol=1e-12)


def test_cmpl_is_cpl_plus_mpl():
    for seed in range(5):
        pred, cloud, pred_curv = random_instance(seed)
        cfg = LossConfig(lambda_=1.5)
        whole = cmpl(pred, cloud, pred_curv, config=cfg)
        parts = (cpl(pred, cloud, pred_curv, config=cfg).value
                 + mpl(pred, cloud, config=cfg).value)
        assert abs(whole.value - parts) < 1e-12


def test_cmpl_dominates_unweighted_distance():
    # every weight is e^{lam|k|} + flag >= 1
    for seed in range(5):
        pred, cloud, pred_curv = random_instance(seed + 10)
        _, d_pg = nearest_neighbor(pred, cloud.points)
        _, d_gp = nearest_neighbor(cloud.points, pred)
        plain = d_pg.mean() + d_gp.mean()
        assert cmpl(pred, cloud, pred_curv).value >= plain - 1e-12


def test_cmpl_monotone_in_lambda():
    pred, cloud, pred_curv = random_instance(42)
    values = [cmpl(pred, cloud, pred_curv, config=LossConfig(lambda_=lam)).value
              for lam in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert values[-1] > values[0]


@pytest.mark.parametrize("seed", range(6))
def test_chamfer_gradient_matches_finite_differences(seed):
    pred, cloud, _ = random_instance(seed + 100, n=24, m=32, spread=2.0)
    gt = cloud.points
    # a switch of nearest neighbor inside the stencil would invalidate the
    # finite-difference reference, so require a comfortable margin
    assert min_assignment_gap(pred, gt) > 1e-3
    res = chamfer_l2(pred, gt, with_grad=True)
    fd = central_diff(lambda p: chamfer_l2(p, gt).value, pred)
    denom = max(np.abs(fd).max(), 1e-12)
    assert np.abs(res.gradient - fd).max() / denom < 1e-6


@pytest.mark.parametrize("seed", range(6))
def test_cmpl_gradient_matches_finite_differences(seed):
    pred, cloud, pred_curv = random_instance(seed + 200, n=24, m=32, spread=2.0)
    assert min_assignment_gap(pred, cloud.points) > 1e-3
    cfg = LossConfig(lambda_=1.0)
    res = cmpl(pred, cloud, pred_curv, config=cfg, with_grad=True)
    fd = central_diff(lambda p: cmpl(p, cloud, pred_curv, config=cfg).value, pred)
    denom = max(np.abs(fd).max(), 1e-12)
    assert np.abs(res.gradient - fd).max() / denom < 1e-6


def test_gradient_step_descends():
    pred, cloud, pred_curv = random_instance(7)
    for fn in (lambda p, g=False: chamfer_l2(p, cloud.points, with_grad=g),
               lambda p, g=False: cmpl(p, cloud, pred_curv, with_grad=g)):
        res = fn(pred, True)
        stepped = fn(pred - 1e-3 * res.gradient)
        assert stepped.value < res.value


def test_losses_translation_invariant():
    pred, cloud, pred_curv = random_instance(8)
    t = np.array([5.0, -3.0, 11.0])
    moved = LabeledPointCloud(points=cloud.points + t,
                              curvature=cloud.curvature,
                              margin_flags=cloud.margin_flags)
    a = cmpl(pred, cloud, pred_curv, with_grad=True)
    b = cmpl(pred + t, moved, pred_curv, with_grad=True)
    assert abs(a.value - b.value) < 1e-9
    assert np.allclose(a.gradient, b.gradient, atol=1e-9)
    assert abs(chamfer_l2(pred, cloud.points).value
               - chamfer_l2(pred + t, moved.points).value) < 1e-9


def test_zero_distance_unsquared_gradient_is_zero():
    # coincident points leave the unsquared term flat rather than NaN
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    cloud = LabeledPointCloud(points=pts.copy(), curvature=np.zeros(2),
                              margin_flags=np.zeros(2, dtype=np.int32))
    res = cmpl(pts, cloud, np.zeros(2), with_grad=True)
    assert res.value == 0.0
    assert np.all(np.isfinite(res.gradient))
    assert np.all(res.gradient == 0.0)


def test_loss_error_types():
    pts = np.zeros((3, 3))
    bare = LabeledPointCloud(points=pts)
    flagged = LabeledPointCloud(points=pts, margin_flags=np.zeros(3, dtype=np.int32))
    curved = LabeledPointCloud(points=pts, curvature=np.zeros(3))
    with pytest.raises(EmptySetError):
        chamfer_l2(np.zeros((0, 3)), pts)
    with pytest.raises(EmptySetError):
        chamfer_l2(pts, np.zeros((0, 3)))
    with pytest.raises(MissingCurvatureError):
        cmpl(pts, flagged, pred_curvature=np.zeros(3))
    with pytest.raises(MissingCurvatureError):
        cpl(pts, curved, pred_curvature=None)
    with pytest.raises(MissingCurvatureError):
        cpl(pts, curved, pred_curvature=np.zeros(5))
    with pytest.raises(MissingMarginFlagsError):
        mpl(pts, curved)
    with pytest.raises(ValueError):
        LossConfig(lambda_=-0.1)


def test_margin_toggle_drops_indicator():
    pred, cloud, pred_curv = random_instance(9)
    on = cmpl(pred, cloud, pred_curv, config=LossConfig()).value
    off = cmpl(pred, cloud, pred_curv,
               config=LossConfig(margin_weight_enabled=False)).value
    only_curv = cpl(pred, cloud, pred_curv).value
    assert off == pytest.approx(only_curv, abs=1e-15)
    assert on > off


def grid_pair(seed, r=8):
    rng = np.random.default_rng(seed)
    mk = lambda: ScalarGrid(values=rng.normal(size=(r, r, r)),
                            origin=np.zeros(3), extent=np.ones(3), iso_value=0.0)
    return mk(), mk()


def test_dpsr_mse_oracle():
    a, b = grid_pair(11)
    want = np.mean((a.values - b.values) ** 2)
    assert dpsr_mse(a, b) == pytest.approx(want, rel=1e-12)
    assert dpsr_mse(a, a) == 0.0


def test_dpsr_mse_mismatch_errors():
    a, b = grid_pair(12)
    small = ScalarGrid(values=np.zeros((4, 4, 4)), origin=np.zeros(3),
                       extent=np.ones(3), iso_value=0.0)
    stretched = ScalarGrid(values=b.values, origin=np.zeros(3),
                           extent=np.full(3, 2.0), iso_value=0.0)
    with pytest.raises(ShapeMismatchError):
        dpsr_mse(a, small)
    with pytest.raises(ShapeMismatchError):
        dpsr_mse(a, stretched)


def test_ce_dice_uninformative_half():
    val = ce_dice([0.5, 0.5], [1.0, 0.0])
    want = np.log(2.0) + 1.0 - 1.0 / (2.0 + 1e-7)
    assert val == pytest.approx(want, abs=1e-12)


def test_ce_dice_random_oracle():
    rng = np.random.default_rng(13)
    p = rng.uniform(0.01, 0.99, size=200)
    y = (rng.uniform(size=200) < 0.4).astype(np.float64)
    ce = -(y * np.log(p) + (1 - y) * np.log(1 - p)).mean()
    dice = 2 * (p * y).sum() / (p.sum() + y.sum() + 1e-7)
    assert ce_dice(p, y) == pytest.approx(ce + 1.0 - dice, abs=1e-9)


def test_ce_dice_rewards_correct_labels():
    y = np.array([1.0, 1.0, 0.0, 0.0])
    good = ce_dice(np.array([0.99, 0.98, 0.01, 0.02]), y)
    bad = ce_dice(np.array([0.01, 0.02, 0.99, 0.98]), y)
    assert good < 0.1
    assert bad > 3.0
    with pytest.raises(ShapeMismatchError):
        ce_dice(np.array([0.5]), y)


def test_ce_dice_clamps_extremes():
    val = ce_dice(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert np.isfinite(val)
