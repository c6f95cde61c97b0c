import numpy as np
import pytest

from splatcurves.geometry import Camera, WireframeModel, look_at, project_point
from splatcurves.scene import (
    GT_SPACING,
    Intrinsics,
    default_rig,
    make_model,
    make_scene,
    render_gt_edge_map,
    sample_camera_ring,
)


def test_cube_model():
    m = make_model("cube", center=(0.5, 0.5, 0.5), side=0.4)
    assert len(m.segments) == 12
    assert m.total_length == pytest.approx(4.8)


def test_cylinder_model():
    m = make_model("cylinder", radius=0.2)
    assert len(m.arcs) == 2
    for arc in m.arcs:
        assert arc.length == pytest.approx(2 * np.pi * 0.2)


def test_box_with_hole_model():
    m = make_model("box_with_hole")
    assert len(m.segments) == 12 and len(m.arcs) == 2


def test_two_boxes_has_occluders():
    m = make_model("two_boxes_occluding")
    assert len(m.segments) == 24 and len(m.occluder_solids) == 2


@pytest.mark.parametrize("kind,params", [
    ("cube", dict(side=1.2)),
    ("cube", dict(center=(0.9, 0.5, 0.5), side=0.4)),
    ("cylinder", dict(radius=0.6)),
    ("box_with_hole", dict(hole_radius=0.3)),
    ("sphere", {}),
])
def test_make_model_rejects(kind, params):
    with pytest.raises(ValueError):
        make_model(kind, **params)


def test_ring_four_cameras_azimuths():
    cams = sample_camera_ring(4, radius=2.0)
    az = [np.degrees(np.arctan2(*(c.center[:2] - 0.5)[::-1])) % 360 for c in cams]
    assert np.allclose(az, [0, 90, 180, 270], atol=1e-9)


def test_single_camera_looks_at_target():
    intr = Intrinsics(64, 64, 80, 80)
    (cam,) = sample_camera_ring(1, radius=2.5, elevation_angles=(np.radians(20.0),), intrinsics=intr)
    u, v, _ = project_point(cam, (0.5, 0.5, 0.5))
    assert abs(u - cam.cx) < 1e-9 and abs(v - cam.cy) < 1e-9


def test_ring_split_across_elevations():
    cams = sample_camera_ring(7, elevation_angles=tuple(np.radians([-20.0, 10.0, 40.0])))
    assert len(cams) == 7
    elev = [np.degrees(np.arcsin((c.center[2] - 0.5) / 2.5)) for c in cams]
    assert np.allclose(sorted(set(np.round(elev, 6))), [-20, 10, 40])


def test_ring_rejects_pole():
    with pytest.raises(ValueError):
        sample_camera_ring(3, elevation_angles=(np.pi / 2,))


def test_fifty_view_rig():
    assert len(default_rig(50, 64)) == 50


def _cam(eye, size=64, f=80.0):
    return Camera(f, f, (size - 1) / 2, (size - 1) / 2, size, size, look_at(eye, (0.5, 0.5, 0.5)))


def test_empty_model_gives_zero_map():
    em = render_gt_edge_map(WireframeModel(), _cam([2.5, 0.5, 0.8]), 1.5)
    assert em.shape == (64, 64) and not em.any()


def test_segment_centreline_is_one():
    cam = Camera(50.0, 50.0, 32.0, 32.0, 65, 65, look_at([0.5, -2.0, 0.5], [0.5, 0.5, 0.5]))
    m = WireframeModel(segments=[((0.2, 0.5, 0.5), (0.8, 0.5, 0.5))])
    em = render_gt_edge_map(m, cam, 1.0)
    assert em.max() == pytest.approx(1.0)
    # x in [0.2, 0.8] at depth 2.5 spans columns 26..38
    assert em[32, 26:39].min() == pytest.approx(1.0)
    assert em[32, 40:].max() == 0.0


def test_line_width_validation():
    with pytest.raises(ValueError):
        render_gt_edge_map(WireframeModel(), _cam([2.5, 0.5, 0.8]), 0.5)


def test_bright_pixels_near_projected_edges():
    m = make_model("cube", side=0.4)
    cam = _cam([2.2, -0.7, 1.4])
    em = render_gt_edge_map(m, cam, 1.5, hidden_line_removal=False)
    uv, _ = cam.project(m.sample(0.0005))
    ys, xs = np.nonzero(em > 0.5)
    for x, y in zip(xs, ys):
        assert np.min(np.hypot(uv[:, 0] - x, uv[:, 1] - y)) <= 1.5


def test_hidden_line_removal_drops_pixels():
    m = make_model("two_boxes_occluding")
    # looking along -x: the front box hides most of the back box
    cam = _cam([3.0, 0.5, 0.45], size=96, f=110.0)
    on = render_gt_edge_map(m, cam, 1.5, hidden_line_removal=True)
    off = render_gt_edge_map(m, cam, 1.5, hidden_line_removal=False)
    assert np.count_nonzero(on) < np.count_nonzero(off)
    assert np.all(off >= on)


def test_occlusion_agrees_with_ray_march():
    m = make_model("two_boxes_occluding")
    eye = np.array([3.0, 0.5, 0.45])
    pts = m.sample(0.05)
    idx = np.random.default_rng(0).choice(len(pts), 10, replace=False)
    hidden = m.occluded(pts[idx], eye)
    t = np.linspace(1e-4, 1 - 1e-4, 40001)
    for p, h in zip(pts[idx], hidden):
        ray = p + t[:, None] * (eye - p)
        inside = np.zeros(len(t), bool)
        for box in m.occluder_solids:
            inside |= np.all((ray > box.lo + 1e-6) & (ray < box.hi - 1e-6), axis=1)
        assert inside.any() == h


def test_default_rig_has_fully_hidden_edge():
    m = make_model("two_boxes_occluding")
    found = False
    for cam in default_rig(30, 64):
        for a, b in m.segments:
            pts = a + np.linspace(0.02, 0.98, 25)[:, None] * (b - a)
            if m.occluded(pts, cam.center).all():
                found = True
    assert found


def test_scene_bundle_invariants():
    sc = make_scene("cube", n_views=4, resolution=48)
    assert len(sc.cameras) == len(sc.edge_maps) == 4
    for em in sc.edge_maps:
        assert em.shape == (48, 48) and em.min() >= 0 and em.max() <= 1
    assert sc.gt_points.min() >= 0 and sc.gt_points.max() <= 1
    # arc-length spacing of the reference samples
    assert len(sc.gt_points) >= 4.8 / GT_SPACING


def test_scene_is_deterministic():
    a = make_scene("box_with_hole", n_views=3, resolution=40)
    b = make_scene("box_with_hole", n_views=3, resolution=40)
    for x, y in zip(a.edge_maps, b.edge_maps):
        assert np.array_equal(x, y)
