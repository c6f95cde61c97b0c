"""Synthetic wireframe scenes, camera rigs and analytic edge maps.

The edge maps stand in for a learned 2D edge detector: every model edge is
projected, optionally culled by hidden-line removal against the model's solid
occluders, and rasterised with a linear anti-aliasing falloff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import Arc, Box, Camera, Cylinder, WireframeModel, look_at

MODEL_KINDS = ("cube", "cylinder", "box_with_hole", "two_boxes_occluding")
GT_SPACING = 0.002
# projected spacing of edge samples used for rasterisation, in pixels
RASTER_STEP_PX = 0.25


@dataclass(frozen=True)
class Intrinsics:
    width: int = 256
    height: int = 256
    fx: float = 309.0
    fy: float = 309.0
    cx: float | None = None
    cy: float | None = None

    @classmethod
    def from_fov(cls, width: int, height: int, fov: float) -> "Intrinsics":
        """Square pixels with horizontal field of view ``fov`` (radians)."""
        f = 0.5 * width / np.tan(fov / 2)
        return cls(width, height, f, f)

    def camera(self, world_to_camera) -> Camera:
        cx = (self.width - 1) / 2 if self.cx is None else self.cx
        cy = (self.height - 1) / 2 if self.cy is None else self.cy
        return Camera(self.fx, self.fy, cx, cy, self.width, self.height, world_to_camera)


def _box_edges(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    edges = []
    for i in range(8):
        for j in range(i + 1, 8):
            if np.count_nonzero(corners[i] != corners[j]) == 1:
                edges.append((corners[i], corners[j]))
    return edges


def _inside_unit(*pts):
    for p in pts:
        p = np.asarray(p, float)
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("model parameters leave the unit cube")


def make_model(kind: str, **params) -> WireframeModel:
    """Build one of the analytic test shapes.

    ``cube``: ``center``, ``side``. ``cylinder``: ``center``, ``radius``,
    ``height``, ``solid``. ``box_with_hole``: ``center``, ``size``,
    ``hole_radius``. ``two_boxes_occluding``: ``front``/``back`` as
    ``(lo, hi)`` pairs. All shapes are axis-aligned with z up.
    """
    if kind == "cube":
        c = np.asarray(params.get("center", (0.5, 0.5, 0.5)), float)
        s = float(params.get("side", 0.4))
        lo, hi = c - s / 2, c + s / 2
        _inside_unit(lo, hi)
        return WireframeModel(segments=_box_edges(lo, hi))
    if kind == "cylinder":
        c = np.asarray(params.get("center", (0.5, 0.5, 0.5)), float)
        r = float(params.get("radius", 0.2))
        h = float(params.get("height", 0.4))
        _inside_unit(c - [r, r, h / 2], c + [r, r, h / 2])
        z = np.array([0.0, 0.0, 1.0])
        arcs = [Arc(c + z * dz, z, r, 0.0, 2 * np.pi) for dz in (-h / 2, h / 2)]
        solids = (Cylinder(c, z, r, h / 2),) if params.get("solid", False) else ()
        return WireframeModel(arcs=arcs, occluder_solids=solids)
    if kind == "box_with_hole":
        c = np.asarray(params.get("center", (0.5, 0.5, 0.5)), float)
        size = np.asarray(params.get("size", (0.5, 0.5, 0.3)), float)
        rh = float(params.get("hole_radius", 0.12))
        lo, hi = c - size / 2, c + size / 2
        _inside_unit(lo, hi)
        if rh <= 0 or rh >= min(size[:2]) / 2:
            raise ValueError("hole must fit inside the box footprint")
        z = np.array([0.0, 0.0, 1.0])
        arcs = [Arc([c[0], c[1], zz], z, rh, 0.0, 2 * np.pi) for zz in (lo[2], hi[2])]
        return WireframeModel(segments=_box_edges(lo, hi), arcs=arcs)
    if kind == "two_boxes_occluding":
        front = params.get("front", ((0.2, 0.25, 0.2), (0.5, 0.75, 0.7)))
        back = params.get("back", ((0.6, 0.35, 0.25), (0.8, 0.65, 0.55)))
        for lo, hi in (front, back):
            _inside_unit(lo, hi)
        boxes = [Box(*front), Box(*back)]
        segs = _box_edges(*front) + _box_edges(*back)
        return WireframeModel(segments=segs, occluder_solids=boxes)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def sample_camera_ring(n: int, radius: float = 2.5, elevation_angles=(0.0,),
                       target=(0.5, 0.5, 0.5), intrinsics: Intrinsics | None = None) -> list[Camera]:
    """``n`` cameras on azimuth rings around ``target``, one ring per elevation.

    Cameras are split as evenly as possible across rings (earlier rings take
    the remainder). Ring ``k`` is rotated by ``k / len(rings)`` of its azimuth
    step so rings do not line up. Angles are in radians; azimuth 0 lies on +x.
    """
    if n < 1:
        raise ValueError("need at least one camera")
    intrinsics = intrinsics or Intrinsics()
    target = np.asarray(target, float)
    rings = list(elevation_angles)
    counts = [n // len(rings) + (k < n % len(rings)) for k in range(len(rings))]
    cams = []
    for k, (elev, m) in enumerate(zip(rings, counts)):
        if m == 0:
            continue
        if abs(elev) >= np.radians(89.0):
            raise ValueError("elevation too close to the pole")
        step = 2 * np.pi / m
        for j in range(m):
            az = j * step + k * step / len(rings)
            el = elev
            eye = target + radius * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
            cams.append(intrinsics.camera(look_at(eye, target)))
    return cams


RIG_ELEVATIONS = tuple(np.radians([-25.0, 15.0, 50.0]))


def default_rig(n_views: int = 30, resolution: int = 256, radius: float = 2.0,
                fov: float = np.radians(30.0)) -> list[Camera]:
    """Three elevation rings framing the central part of the unit cube."""
    intr = Intrinsics.from_fov(resolution, resolution, fov)
    return sample_camera_ring(n_views, radius, RIG_ELEVATIONS, (0.5, 0.5, 0.5), intr)


def visible_edge_polylines(model: WireframeModel, camera: Camera, hidden_line_removal: bool):
    """Projected 2D segments (p0, p1) of visible edge pieces."""
    eye = camera.center
    starts, ends = [], []
    for pts, _ in model.sample_edges(0.05):
        # resample so consecutive samples are ~RASTER_STEP_PX apart on screen
        uv, z = camera.project(pts)
        if np.any(z <= 1e-6):
            raise ValueError("model edge behind the camera")
        px_len = np.linalg.norm(np.diff(uv, axis=0), axis=1)
        dense = []
        for (a, b, L) in zip(pts[:-1], pts[1:], px_len):
            m = max(int(np.ceil(L / RASTER_STEP_PX)), 1)
            t = np.arange(m)[:, None] / m
            dense.append(a + t * (b - a))
        dense.append(pts[-1:])
        dense = np.concatenate(dense)
        uv, _ = camera.project(dense)
        keep = np.ones(len(dense), bool)
        if hidden_line_removal:
            keep = ~model.occluded(dense, eye)
        seg_ok = keep[:-1] & keep[1:]
        starts.append(uv[:-1][seg_ok])
        ends.append(uv[1:][seg_ok])
        # isolated visible samples become zero-length segments
        lone = keep & ~np.r_[False, seg_ok] & ~np.r_[seg_ok, False]
        starts.append(uv[lone])
        ends.append(uv[lone])
    if not starts:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.concatenate(starts), np.concatenate(ends)


def render_gt_edge_map(model: WireframeModel, camera: Camera, line_width_px: float = 1.5,
                       hidden_line_removal: bool = True) -> np.ndarray:
    """Anti-aliased edge map: 1 on projected edges, falling to 0 at ``line_width_px``."""
    if line_width_px < 1:
        raise ValueError("line width must be at least one pixel")
    p0, p1 = visible_edge_polylines(model, camera, hidden_line_removal)
    dist = _kernels.segment_distance_field(
        np.ascontiguousarray(p0), np.ascontiguousarray(p1), np.ones(len(p0), bool),
        float(line_width_px), camera.height, camera.width)
    return np.clip(1.0 - dist / line_width_px, 0.0, 1.0)


@dataclass
class SceneBundle:
    model: WireframeModel
    cameras: list
    edge_maps: list
    gt_points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.cameras) != len(self.edge_maps):
            raise ValueError("one edge map per camera required")

    @property
    def views(self):
        return list(zip(self.cameras, self.edge_maps))


def make_scene(kind: str = "cube", n_views: int = 30, resolution: int = 256,
               line_width_px: float = 1.5, hidden_line_removal: bool = True,
               cameras: list | None = None, **params) -> SceneBundle:
    model = make_model(kind, **params)
    cams = cameras if cameras is not None else default_rig(n_views, resolution)
    maps = [render_gt_edge_map(model, c, line_width_px, hidden_line_removal) for c in cams]
    meta = dict(kind=kind, params={k: np.asarray(v).tolist() for k, v in params.items()},
                n_views=len(cams), resolution=resolution, line_width_px=line_width_px,
                hidden_line_removal=hidden_line_removal)
    return SceneBundle(model, cams, maps, model.sample(GT_SPACING), meta)
