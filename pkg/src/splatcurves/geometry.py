"""Shared geometric types: pinhole cameras, rational cubic Béziers, wireframes.

Coordinate conventions
----------------------
World and camera frames are right-handed. The camera looks down its +z axis,
x grows to the right of the image and y grows downwards (OpenCV style). Pixel
``(u, v)`` addresses column ``u`` and row ``v``; pixel centres sit on integer
coordinates. Scenes are expected to live inside the unit cube.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

BEHIND_EPS = 1e-6


class BehindCameraError(ValueError):
    """Raised when a point has camera-frame depth <= 1e-6."""


def _as_vec3(p) -> np.ndarray:
    v = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite point {v}")
    return v


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera with a rigid world-to-camera transform.

    Parameters
    ----------
    fx, fy : float
        Focal lengths in pixels.
    cx, cy : float
        Principal point in pixels.
    width, height : int
        Image size in pixels.
    world_to_camera : (4, 4) array
        Rigid transform; the rotation block must be orthonormal with det +1.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.array(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        m.setflags(write=False)
        object.__setattr__(self, "world_to_camera", m)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")
        r = m[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-9 or np.linalg.det(r) < 0:
            raise ValueError("world_to_camera rotation is not a proper rotation")
        if np.abs(m[3] - [0, 0, 0, 1]).max() > 1e-12:
            raise ValueError("world_to_camera last row must be (0, 0, 0, 1)")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """Map (..., 3) world points into the camera frame."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised projection: returns ``(uv, depth)`` without culling."""
        pc = self.to_camera(points)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[..., 0] / z + self.cx
            v = self.fy * pc[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1), z

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height)
            and np.array_equal(self.world_to_camera, other.world_to_camera)
        )

    def __hash__(self):
        return hash((self.fx, self.fy, self.cx, self.cy, self.width, self.height,
                     self.world_to_camera.tobytes()))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera matrix for a camera at ``eye`` looking at ``target``."""
    eye = _as_vec3(eye)
    forward = _as_vec3(target) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, _as_vec3(up))
    n = np.linalg.norm(right)
    if n < 1e-9:
        raise ValueError("up vector is parallel to the viewing direction")
    right /= n
    down = np.cross(forward, right)
    m = np.eye(4)
    m[:3, :3] = np.stack([right, down, forward])
    m[:3, 3] = -m[:3, :3] @ eye
    return m


def project_point(camera: Camera, p) -> tuple[float, float, float]:
    """Project one world point to ``(u, v, depth)``.

    Raises
    ------
    BehindCameraError
        If the camera-frame depth is at most 1e-6.
    """
    pc = camera.to_camera(_as_vec3(p))
    z = pc[2]
    if z <= BEHIND_EPS:
        raise BehindCameraError(f"point at depth {z:g} is behind the camera")
    return (camera.fx * pc[0] / z + camera.cx, camera.fy * pc[1] / z + camera.cy, float(z))


def unproject_point(camera: Camera, u: float, v: float, depth: float) -> np.ndarray:
    """Inverse of :func:`project_point` for a known depth."""
    pc = np.array([(u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth])
    return camera.rotation.T @ (pc - camera.translation)


@dataclass(frozen=True, eq=False)
class RationalBezier:
    """Cubic rational Bézier curve with 4 control points and positive weights."""

    control_points: np.ndarray
    weights: np.ndarray = field(default_factory=lambda: np.ones(4))

    def __post_init__(self):
        cp = np.array(self.control_points, dtype=np.float64).reshape(4, 3)
        w = np.array(self.weights, dtype=np.float64).reshape(4)
        if not np.all(np.isfinite(cp)):
            raise ValueError("control points must be finite")
        if not np.all((w > 0) & np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        cp.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "weights", w)

    @property
    def start(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def end(self) -> np.ndarray:
        return self.control_points[3]

    def __call__(self, u):
        return bezier_eval(self, u)

    def __eq__(self, other):
        if not isinstance(other, RationalBezier):
            return NotImplemented
        return (np.array_equal(self.control_points, other.control_points)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None


_BINOM3 = np.array([comb(3, i) for i in range(4)], dtype=np.float64)


def bernstein3(u) -> np.ndarray:
    """Cubic Bernstein basis, shape ``(..., 4)``."""
    u = np.asarray(u, dtype=np.float64)[..., None]
    i = np.arange(4)
    return _BINOM3 * u**i * (1.0 - u) ** (3 - i)


def rational_points(control_points: np.ndarray, weights: np.ndarray, u) -> np.ndarray:
    """Evaluate a rational cubic from raw arrays; broadcasts over ``u``."""
    b = bernstein3(u) * weights
    return (b @ control_points) / b.sum(axis=-1, keepdims=True)


def bezier_eval(curve: RationalBezier, u):
    """Point(s) on ``curve`` at parameter(s) ``u`` in [0, 1]."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(u_arr < 0) or np.any(u_arr > 1):
        raise ValueError("parameter must lie in [0, 1]")
    out = rational_points(curve.control_points, curve.weights, u_arr)
    # exact endpoint interpolation
    out = np.where((u_arr == 0)[..., None], curve.control_points[0], out)
    out = np.where((u_arr == 1)[..., None], curve.control_points[3], out)
    return out


def bezier_sample(curve: RationalBezier, n: int) -> np.ndarray:
    """``n`` points at uniform parameter spacing, endpoints included."""
    if n < 2:
        raise ValueError("need at least two samples")
    return bezier_eval(curve, np.linspace(0.0, 1.0, n))


def elevate_quadratic(points, weights) -> RationalBezier:
    """Exact cubic form of a rational quadratic Bézier (degree elevation)."""
    p = np.asarray(points, dtype=np.float64).reshape(3, 3)
    w = np.asarray(weights, dtype=np.float64).reshape(3)
    hw = np.hstack([p * w[:, None], w[:, None]])
    q = np.stack([hw[0], (hw[0] + 2 * hw[1]) / 3, (2 * hw[1] + hw[2]) / 3, hw[2]])
    return RationalBezier(q[:, :3] / q[:, 3:], q[:, 3])


def orthonormal_basis(axis) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``axis`` to a right-handed frame."""
    a = _as_vec3(axis)
    a = a / np.linalg.norm(a)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(a, e1)


@dataclass(frozen=True)
class Arc:
    center: np.ndarray
    axis: np.ndarray
    radius: float
    start_angle: float
    end_angle: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center))
        a = _as_vec3(self.axis)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ValueError("arc axis must be unit length")
        object.__setattr__(self, "axis", a)
        if self.radius <= 0:
            raise ValueError("arc radius must be positive")

    @property
    def length(self) -> float:
        return self.radius * abs(self.end_angle - self.start_angle)

    def points(self, theta) -> np.ndarray:
        e1, e2 = orthonormal_basis(self.axis)
        t = np.asarray(theta, dtype=np.float64)[..., None]
        return self.center + self.radius * (np.cos(t) * e1 + np.sin(t) * e2)


@dataclass(frozen=True)
class Box:
    """Axis-aligned solid box used for hidden-line tests."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vec3(self.lo))
        object.__setattr__(self, "hi", _as_vec3(self.hi))
        if np.any(self.hi <= self.lo):
            raise ValueError("box must have positive extent")

    def ray_hits(self, origins: np.ndarray, dirs: np.ndarray, t_max, shrink: float = 1e-6):
        """True where a ray enters the (slightly shrunk) box for 0 < t < t_max."""
        lo, hi = self.lo + shrink, self.hi - shrink
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t0 = (lo - origins) * inv
            t1 = (hi - origins) * inv
        tn = np.minimum(t0, t1)
        tf = np.maximum(t0, t1)
        # axis-parallel rays: inside the slab -> unconstrained, outside -> miss
        par = dirs == 0
        inside = (origins > lo) & (origins < hi)
        tn = np.where(par, np.where(inside, -np.inf, np.inf), tn)
        tf = np.where(par, np.where(inside, np.inf, -np.inf), tf)
        t_enter = np.maximum(tn.max(axis=-1), 0.0)
        t_exit = np.minimum(tf.min(axis=-1), t_max)
        return t_exit > t_enter


@dataclass(frozen=True)
class Cylinder:
    """Finite solid cylinder: ``center`` is the midpoint of its axis segment."""

    center: np.ndarray
    axis: np.ndarray
    radius: float
    half_height: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center))
        a = _as_vec3(self.axis)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ValueError("cylinder axis must be unit length")
        object.__setattr__(self, "axis", a)

    def ray_hits(self, origins: np.ndarray, dirs: np.ndarray, t_max, shrink: float = 1e-6):
        r = self.radius - shrink
        h = self.half_height - shrink
        o = origins - self.center
        oa = o @ self.axis
        da = dirs @ self.axis
        op = o - oa[..., None] * self.axis
        dp = dirs - da[..., None] * self.axis
        # radial slab: |op + t dp|^2 < r^2
        qa = np.einsum("...i,...i->...", dp, dp)
        qb = 2 * np.einsum("...i,...i->...", op, dp)
        qc = np.einsum("...i,...i->...", op, op) - r * r
        disc = qb * qb - 4 * qa * qc
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
            r0 = (-qb - sq) / (2 * qa)
            r1 = (-qb + sq) / (2 * qa)
            a0 = (-h - oa) / da
            a1 = (h - oa) / da
        radial_par = qa < 1e-300
        r0 = np.where(radial_par, np.where(qc < 0, -np.inf, np.inf), np.where(disc > 0, r0, np.inf))
        r1 = np.where(radial_par, np.where(qc < 0, np.inf, -np.inf), np.where(disc > 0, r1, -np.inf))
        axial_par = da == 0
        inside_ax = np.abs(oa) < h
        a_lo = np.where(axial_par, np.where(inside_ax, -np.inf, np.inf), np.minimum(a0, a1))
        a_hi = np.where(axial_par, np.where(inside_ax, np.inf, -np.inf), np.maximum(a0, a1))
        t_enter = np.maximum(np.maximum(r0, a_lo), 0.0)
        t_exit = np.minimum(np.minimum(r1, a_hi), t_max)
        return t_exit > t_enter


@dataclass(frozen=True)
class WireframeModel:
    """Analytic edge set: straight segments, circular arcs, occluding solids."""

    segments: tuple = ()
    arcs: tuple = ()
    occluder_solids: tuple = ()

    def __post_init__(self):
        segs = tuple((_as_vec3(a), _as_vec3(b)) for a, b in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "arcs", tuple(self.arcs))
        object.__setattr__(self, "occluder_solids", tuple(self.occluder_solids))
        for a, b in segs:
            if np.linalg.norm(b - a) == 0:
                raise ValueError("degenerate segment")
        tol = 1e-9
        pts = self.sample(0.01)
        if len(pts) and (pts.min() < -tol or pts.max() > 1 + tol):
            raise ValueError("wireframe leaves the unit cube")

    @property
    def total_length(self) -> float:
        return (sum(float(np.linalg.norm(b - a)) for a, b in self.segments)
                + sum(arc.length for arc in self.arcs))

    def sample(self, spacing: float) -> np.ndarray:
        """Points along every edge at (at most) ``spacing`` arc-length apart."""
        out = [pts for pts, _ in self.sample_edges(spacing)]
        return np.concatenate(out) if out else np.zeros((0, 3))

    def sample_edges(self, spacing: float):
        """Yield ``(points, closed)`` per edge, sampled at uniform arc length."""
        for a, b in self.segments:
            n = max(int(np.ceil(np.linalg.norm(b - a) / spacing)), 1) + 1
            t = np.linspace(0.0, 1.0, n)[:, None]
            yield a + t * (b - a), False
        for arc in self.arcs:
            closed = abs(abs(arc.end_angle - arc.start_angle) - 2 * np.pi) < 1e-12
            n = max(int(np.ceil(arc.length / spacing)), 2) + 1
            theta = np.linspace(arc.start_angle, arc.end_angle, n)
            yield arc.points(theta), closed

    def occluded(self, points: np.ndarray, eye: np.ndarray) -> np.ndarray:
        """Mask of points whose segment towards ``eye`` passes through a solid."""
        points = np.asarray(points, dtype=np.float64)
        mask = np.zeros(len(points), dtype=bool)
        if not self.occluder_solids or len(points) == 0:
            return mask
        dirs = eye - points
        for solid in self.occluder_solids:
            mask |= solid.ray_hits(points, dirs, 1.0)
        return mask
