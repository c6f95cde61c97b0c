import numpy as np
import pytest

import bruteforce as bf
from splatcurves.curves import (
    CurveNetwork,
    ExtractConfig,
    LineSegmentSet,
    TooFewGaussiansError,
    chamfer,
    chamfer_grad,
    curve_objective,
    dilate_samples,
    endpoint_loss,
    extract_curves,
    global_optimize,
    init_beziers,
    line_fitting,
    postprocess,
    select_subset,
    weighted_chamfer,
)
from splatcurves.geometry import RationalBezier
from splatcurves.render import SphericalGaussianSet


def on_segments(segs, spacing=0.005, opacity=1.0):
    pts = []
    for a, b in segs:
        a, b = np.asarray(a, float), np.asarray(b, float)
        n = int(np.ceil(np.linalg.norm(b - a) / spacing)) + 1
        pts.append(a + np.linspace(0, 1, n)[:, None] * (b - a))
    c = np.concatenate(pts)
    return SphericalGaussianSet(c, np.full(len(c), opacity), np.ones(len(c)))


def endpoint_error(found, truth):
    p, q = found
    a, b = np.asarray(truth[0], float), np.asarray(truth[1], float)
    return min(max(np.linalg.norm(p - a), np.linalg.norm(q - b)),
               max(np.linalg.norm(p - b), np.linalg.norm(q - a)))


# -- point-set primitives ------------------------------------------------------


def test_chamfer_identical_sets():
    A = np.random.default_rng(0).uniform(size=(50, 3))
    assert chamfer(A, A, 2.0) == 0.0


@pytest.mark.parametrize("d", [0.1, 0.37, 2.0])
def test_chamfer_two_points(d):
    assert chamfer([[0, 0, 0]], [[d, 0, 0]], 2.0) == pytest.approx(3 * d * d)


def test_chamfer_rejects_empty():
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 3)), np.zeros((2, 3)))


@pytest.mark.parametrize("seed", range(40))
def test_chamfer_matches_bruteforce(seed):
    r = np.random.default_rng(seed)
    A, B = r.uniform(size=(int(r.integers(1, 301)), 3)), r.uniform(size=(int(r.integers(1, 301)), 3))
    o = r.uniform(size=len(B))
    assert chamfer(A, B, 2.0) == bf.chamfer(A, B, 2.0)
    assert weighted_chamfer(A, SphericalGaussianSet(B, o, o), 2.0) == bf.weighted_chamfer(A, B, o, 2.0)
    for squared in (False, True):
        assert np.array_equal(select_subset(B, A, 0.03, squared), bf.subset(B, A, 0.03, squared))


def test_chamfer_gradient_fd():
    r = np.random.default_rng(1)
    A, B = r.uniform(size=(30, 3)), r.uniform(size=(40, 3))
    w = r.uniform(size=40)
    _, g = chamfer_grad(A, B, 2.0, w)
    h = 1e-7
    for i, k in [(0, 0), (7, 2), (29, 1)]:
        P, M = A.copy(), A.copy()
        P[i, k] += h
        M[i, k] -= h
        fd = (chamfer_grad(P, B, 2.0, w)[0] - chamfer_grad(M, B, 2.0, w)[0]) / (2 * h)
        assert g[i, k] == pytest.approx(fd, rel=1e-5)


def test_weighted_chamfer_reductions():
    r = np.random.default_rng(2)
    S, C = r.uniform(size=(20, 3)), r.uniform(size=(25, 3))
    assert weighted_chamfer(S, SphericalGaussianSet(C, np.zeros(25), np.zeros(25)), 2.0) == 0.0
    ones = SphericalGaussianSet(C, np.ones(25), np.ones(25))
    assert weighted_chamfer(S, ones, 2.0) == pytest.approx(chamfer(S, C, 2.0), rel=1e-14)


def test_weighted_chamfer_linear_in_opacity():
    r = np.random.default_rng(3)
    S, C, o = r.uniform(size=(20, 3)), r.uniform(size=(25, 3)), r.uniform(0.1, 0.5, 25)
    a = weighted_chamfer(S, SphericalGaussianSet(C, o, o), 2.0)
    b = weighted_chamfer(S, SphericalGaussianSet(C, 2 * o, o), 2.0)
    assert b == pytest.approx(2 * a, rel=1e-13)


def test_dilate_samples_statistics():
    pts = np.zeros((10000, 3))
    out = dilate_samples(pts, 0.01, seed=0)
    assert out.shape == (30000, 3)
    assert np.std(out) == pytest.approx(0.01, rel=0.02)


def test_dilate_samples_small_radius_limit():
    pts = np.random.default_rng(4).uniform(size=(10, 3))
    out = dilate_samples(pts, 1e-12, seed=1)
    assert np.abs(out - np.repeat(pts, 3, axis=0)).max() < 1e-10


def test_select_subset_examples():
    centers = np.array([[0.5, 0.5, 0.5], [0.9, 0.9, 0.9]])
    assert len(select_subset(centers, np.array([[0.0, 0.0, 0.0]]), 0.02)) == 0
    assert select_subset(centers, np.array([[0.5, 0.5, 0.5]]), 0.02).tolist() == [0]


def test_select_subset_readings_differ():
    centers = np.array([[0.1, 0, 0]])
    sample = np.zeros((1, 3))
    assert len(select_subset(centers, sample, 0.02, squared=True)) == 1
    assert len(select_subset(centers, sample, 0.02, squared=False)) == 0


# -- endpoint loss -------------------------------------------------------------


def _two_curves(gap):
    a = np.array([[0, 0, 0], [0.125, 0, 0], [0.25, 0, 0], [0.5, 0, 0]], float)
    b = a + [0.5 + gap, 0, 0]
    return CurveNetwork([RationalBezier(a), RationalBezier(b)])


def test_endpoint_loss_far_apart():
    assert endpoint_loss(_two_curves(0.5), 0.01)[0] == 0.0


def test_endpoint_loss_close_pair():
    val, grad = endpoint_loss(_two_curves(np.sqrt(0.005)), 0.01)
    assert val == pytest.approx(0.005)
    assert grad[0, 3, 0] < 0 < grad[1, 0, 0]


def test_endpoint_loss_threshold_is_strict():
    cp = _two_curves(0.25).control_points
    assert np.sum((cp[1, 0] - cp[0, 3]) ** 2) == 0.0625
    assert endpoint_loss(cp, 0.0625)[0] == 0.0
    assert endpoint_loss(cp, np.nextafter(0.0625, 1))[0] == 0.0625


def test_endpoint_loss_ignores_own_endpoints():
    short = np.array([[[0, 0, 0], [0.01, 0, 0], [0.02, 0, 0], [0.03, 0, 0]]], float)
    assert endpoint_loss(short, 0.01)[0] == 0.0


def test_endpoint_loss_gradient_fd():
    cp = _two_curves(0.04).control_points + np.random.default_rng(5).normal(0, 0.01, (2, 4, 3))
    _, g = endpoint_loss(cp, 0.01)
    h = 1e-7
    for idx in [(0, 3, 0), (1, 0, 1), (1, 0, 2), (0, 1, 0)]:
        P, M = cp.copy(), cp.copy()
        P[idx] += h
        M[idx] -= h
        fd = (endpoint_loss(P, 0.01)[0] - endpoint_loss(M, 0.01)[0]) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


# -- line fitting ---------------------------------------------------------------


def test_init_beziers_controls():
    net = init_beziers(LineSegmentSet(np.array([[[0, 0, 0], [1, 0, 0]]], float)))
    assert np.allclose(net.control_points[0, :, 0], [0, 0.25, 0.75, 1])
    assert np.array_equal(net.weights[0], np.ones(4))


def test_line_fitting_too_few_gaussians():
    g = on_segments([((0.1, 0.1, 0.1), (0.11, 0.1, 0.1))], spacing=0.005)
    assert len(g) <= 5
    lines, rest = line_fitting(g)
    assert len(lines) == 0 and len(rest) == len(g)
    with pytest.raises(TooFewGaussiansError):
        extract_curves(g)


def test_line_fitting_single_segment():
    seg = ((0.25, 0.5, 0.5), (0.75, 0.5, 0.5))
    g = on_segments([seg])
    lines, rest = line_fitting(g)
    assert len(lines) == 1
    assert endpoint_error(lines.endpoints[0], seg) < 2 * ExtractConfig().delta1
    assert len(rest) <= 0.05 * len(g)


@pytest.fixture(scope="module")
def two_segments():
    segs = [((0.1, 0.1, 0.1), (0.6, 0.1, 0.1)), ((0.1, 0.4, 0.2), (0.1, 0.4, 0.7))]
    g = on_segments(segs)
    return segs, g, line_fitting(g)


def test_line_fitting_two_orthogonal_segments(two_segments):
    segs, _, (lines, _) = two_segments
    assert len(lines) == 2
    for seg in segs:
        assert min(endpoint_error(f, seg) for f in lines.endpoints) < 2 * ExtractConfig().delta1


def test_line_fitting_worker_count_invariant(two_segments):
    _, g, (lines, rest) = two_segments
    lines3, rest3 = line_fitting(g, workers=3)
    assert np.array_equal(lines.endpoints, lines3.endpoints) and np.array_equal(rest, rest3)


# -- global stage ----------------------------------------------------------------


def test_straight_segment_is_fixed_point():
    seg = ((0.2, 0.3, 0.4), (0.7, 0.3, 0.4))
    g = on_segments([seg])
    net = init_beziers(LineSegmentSet(np.array([seg], float)))
    out, _ = global_optimize(net, g, ExtractConfig())
    # compare on common noise draws, averaged to suppress the dilation noise floor
    diff = [curve_objective(out, g, seed=s) - curve_objective(net, g, seed=s) for s in range(20)]
    assert abs(np.mean(diff)) < 1e-6
    pts = out.curves[0](np.linspace(0, 1, 500))
    assert np.abs(pts[:, 1:] - [0.3, 0.4]).max() < 1e-3


def test_global_objective_never_increases_on_fixed_noise():
    g = on_segments([((0.2, 0.3, 0.4), (0.7, 0.3, 0.4))])
    net = init_beziers(LineSegmentSet(np.array([[[0.25, 0.32, 0.4], [0.65, 0.28, 0.41]]])))
    _, trace = global_optimize(net, g, ExtractConfig(global_iters=150, resample_noise=False))
    assert np.all(np.diff(trace.objective) <= 0)
    assert trace.objective[-1] < trace.objective[0]


def test_curve_objective_rejects_no_curves():
    g = on_segments([((0.2, 0.3, 0.4), (0.7, 0.3, 0.4))])
    with pytest.raises(ValueError):
        global_optimize(CurveNetwork([]), g)


def test_curve_objective_is_deterministic():
    g = on_segments([((0.2, 0.3, 0.4), (0.7, 0.3, 0.4))])
    net = init_beziers(LineSegmentSet(np.array([[[0.2, 0.3, 0.4], [0.7, 0.3, 0.4]]])))
    assert curve_objective(net, g) == curve_objective(net, g)


def test_postprocess_drops_unsupported_and_duplicates():
    g = on_segments([((0.2, 0.3, 0.4), (0.7, 0.3, 0.4))])
    good = init_beziers(LineSegmentSet(np.array([[[0.2, 0.3, 0.4], [0.7, 0.3, 0.4]]]))).curves[0]
    far = init_beziers(LineSegmentSet(np.array([[[0.2, 0.8, 0.8], [0.7, 0.8, 0.8]]]))).curves[0]
    out = postprocess(CurveNetwork([good, far, good]), g, ExtractConfig())
    assert len(out) == 1


def test_extract_curves_two_segments(two_segments):
    segs, g, _ = two_segments
    res = extract_curves(g, ExtractConfig(global_iters=100))
    assert len(res.curves) == 2
    s = res.curves.sample(200)
    truth = np.concatenate([on_segments([seg]).centers for seg in segs])
    assert chamfer(s, truth) < 1e-4


def test_extract_config_rejects_unknown():
    with pytest.raises(ValueError):
        ExtractConfig.from_dict({"N1": 3})
