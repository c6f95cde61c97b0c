"""Differentiable splatting of fixed-radius isotropic Gaussians into edge maps.

Every Gaussian shares one world-space radius ``r0``. Projected through a
pinhole camera its screen covariance is ``r0^2 (J W)(J W)^T + eps I``; since the
view rotation ``W`` is orthonormal this reduces to ``r0^2 J J^T + eps I`` with
``J`` the perspective Jacobian at the camera-frame centre.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import Camera

DILATION = 0.3  # px^2 added to the screen covariance diagonal
NEAR = 1e-2
CUTOFF_SIGMA = 3.0


@dataclass
class SphericalGaussianSet:
    """Gaussian centres, opacities and grey colours sharing one radius."""

    centers: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    radius: float = 0.005

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        n = len(self.centers)
        self.opacities = np.clip(np.asarray(self.opacities, dtype=np.float64).reshape(n), 0.0, 1.0)
        self.colors = np.clip(np.asarray(self.colors, dtype=np.float64).reshape(n), 0.0, 1.0)
        self.radius = float(self.radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("Gaussian centres must be finite")

    def __len__(self):
        return len(self.centers)

    def subset(self, idx) -> "SphericalGaussianSet":
        return SphericalGaussianSet(self.centers[idx].copy(), self.opacities[idx].copy(),
                                   self.colors[idx].copy(), self.radius)

    def copy(self) -> "SphericalGaussianSet":
        return self.subset(slice(None))

    def __getitem__(self, i) -> "SphericalGaussian":
        return SphericalGaussian(self.centers[i], self.opacities[i], self.colors[i])


@dataclass(frozen=True)
class SphericalGaussian:
    center: np.ndarray
    opacity: float
    color: float


@dataclass(frozen=True)
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    gaussian_index: int


@dataclass
class Projection:
    """Screen-space footprint of a whole set for one camera."""

    cam_points: np.ndarray  # (N, 3) camera-frame centres
    means: np.ndarray  # (N, 2)
    cov: np.ndarray  # (N, 3) entries (a, b, c) of [[a, b], [b, c]]
    conics: np.ndarray  # (N, 3) inverse covariance entries
    rects: np.ndarray  # (N, 4) int x0, x1, y0, y1 (half-open); empty when culled
    visible: np.ndarray  # (N,) bool

    @property
    def depth(self) -> np.ndarray:
        return self.cam_points[:, 2]


def _screen_cov(pc: np.ndarray, r0: float, camera: Camera) -> np.ndarray:
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    s = r0 * r0
    iz2 = 1.0 / (z * z)
    iz4 = iz2 * iz2
    a = s * camera.fx**2 * (iz2 + x * x * iz4) + DILATION
    b = s * camera.fx * camera.fy * x * y * iz4
    c = s * camera.fy**2 * (iz2 + y * y * iz4) + DILATION
    return np.stack([a, b, c], axis=1)


def project_gaussians(centers: np.ndarray, r0: float, camera: Camera,
                      cutoff_sigma: float = CUTOFF_SIGMA) -> Projection:
    """Project all centres and compute screen covariances and footprints."""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    n = len(centers)
    pc = camera.to_camera(centers)
    z = pc[:, 2]
    front = z > NEAR
    zs = np.where(front, z, 1.0)
    pcs = np.column_stack([pc[:, 0], pc[:, 1], zs])
    means = np.column_stack([camera.fx * pcs[:, 0] / zs + camera.cx,
                             camera.fy * pcs[:, 1] / zs + camera.cy])
    cov = _screen_cov(pcs, r0, camera)
    a, b, c = cov.T
    det = a * c - b * b
    conics = np.column_stack([c / det, -b / det, a / det])
    mid = 0.5 * (a + c)
    lam = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    extent = cutoff_sigma * np.sqrt(lam)
    rects = np.zeros((n, 4), dtype=np.int64)
    rects[:, 0] = np.clip(np.ceil(means[:, 0] - extent), 0, camera.width)
    rects[:, 1] = np.clip(np.floor(means[:, 0] + extent) + 1, 0, camera.width)
    rects[:, 2] = np.clip(np.ceil(means[:, 1] - extent), 0, camera.height)
    rects[:, 3] = np.clip(np.floor(means[:, 1] + extent) + 1, 0, camera.height)
    visible = front & (rects[:, 1] > rects[:, 0]) & (rects[:, 3] > rects[:, 2])
    rects[~visible] = 0
    return Projection(pc, means, cov, conics, rects, visible)


def project_gaussian(g: SphericalGaussian, r0: float, camera: Camera, index: int = 0):
    """Single-Gaussian projection; returns ``None`` when culled."""
    proj = project_gaussians(np.asarray(g.center)[None], r0, camera)
    if not proj.visible[0]:
        return None
    a, b, c = proj.cov[0]
    return Splat2D(proj.means[0].copy(), np.array([[a, b], [b, c]]), float(proj.depth[0]), index)


@dataclass
class RenderState:
    """Everything the backward pass needs from a forward pass."""

    projection: Projection
    order: np.ndarray
    image: np.ndarray
    transmittance: np.ndarray
    last: np.ndarray
    raw_image: np.ndarray = field(repr=False, default=None)


def depth_order(proj: Projection) -> np.ndarray:
    idx = np.flatnonzero(proj.visible)
    # ascending depth, ties by ascending index
    return idx[np.lexsort((idx, proj.depth[idx]))]


def render(gset: SphericalGaussianSet, camera: Camera, *, plan: RenderState | None = None,
           return_state: bool = False):
    """Composite ``gset`` into a single-channel image of the camera's size.

    ``plan`` (a previous :class:`RenderState`) freezes the discrete structure of
    the render: footprint rectangles, depth order and per-pixel termination.
    Only used by gradient checks, which need a smooth function around a point.
    """
    proj = project_gaussians(gset.centers, gset.radius, camera)
    if plan is not None:
        proj.rects = plan.projection.rects
        proj.visible = plan.projection.visible
        order = plan.order
    else:
        order = depth_order(proj)
    if plan is None:
        raw, trans, last = _kernels.composite_forward(
            order, proj.rects, proj.means, proj.conics, gset.opacities, gset.colors,
            camera.height, camera.width)
    else:
        raw, trans, last = _replay_with_termination(order, proj, gset, camera, plan.last)
    image = np.clip(raw, 0.0, 1.0)
    if return_state:
        return image, RenderState(proj, order, image, trans, last, raw)
    return image


def _replay_with_termination(order, proj, gset, camera, last):
    # same compositing, but each pixel stops exactly at the frozen rank
    img = np.zeros((camera.height, camera.width))
    trans = np.ones_like(img)
    for rank, i in enumerate(order):
        x0, x1, y0, y1 = proj.rects[i]
        if x1 <= x0 or y1 <= y0:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1]
        act = rank <= last[y0:y1, x0:x1]
        dx = xs - proj.means[i, 0]
        dy = ys - proj.means[i, 1]
        a, b, c = proj.conics[i]
        power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
        alpha = np.minimum(gset.opacities[i] * np.exp(power), _kernels.ALPHA_MAX)
        t = trans[y0:y1, x0:x1]
        img[y0:y1, x0:x1] += np.where(act, gset.colors[i] * alpha * t, 0.0)
        trans[y0:y1, x0:x1] = np.where(act, t * (1 - alpha), t)
    return img, trans, last


@dataclass
class Gradients:
    """Per-Gaussian gradients of a scalar loss."""

    centers: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    means2d: np.ndarray | None = None
    visible: np.ndarray | None = None

    @classmethod
    def zeros(cls, n: int) -> "Gradients":
        return cls(np.zeros((n, 3)), np.zeros(n), np.zeros(n), np.zeros((n, 2)), np.zeros(n, bool))

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(self.centers + other.centers, self.opacities + other.opacities,
                         self.colors + other.colors, self.means2d, self.visible)

    def scaled(self, k: float) -> "Gradients":
        m2 = None if self.means2d is None else self.means2d * k
        return Gradients(self.centers * k, self.opacities * k, self.colors * k, m2, self.visible)


def render_backward(gset: SphericalGaussianSet, camera: Camera, dl_dimage: np.ndarray,
                    state: RenderState | None = None) -> Gradients:
    """Exact gradients of ``sum(dl_dimage * render(gset, camera))``.

    ``means2d`` holds the screen-space positional gradient (pixels) that drives
    densification; Gaussians outside the view get exact zeros.
    """
    dl_dimage = np.asarray(dl_dimage, dtype=np.float64)
    if dl_dimage.shape != (camera.height, camera.width):
        raise ValueError("gradient image has the wrong shape")
    if state is None:
        _, state = render(gset, camera, return_state=True)
    proj = state.projection
    # output clamp: no gradient where the raw composite left [0, 1]
    g_img = np.where((state.raw_image >= 0) & (state.raw_image <= 1), dl_dimage, 0.0)
    g_mean, g_conic, g_opac, g_color = _kernels.composite_backward(
        state.order, proj.rects, proj.means, proj.conics, gset.opacities, gset.colors,
        state.transmittance, state.last, g_img)

    # conic -> covariance: dL/dSigma = -Sigma^-1 G Sigma^-1
    A, B, C = proj.conics.T
    gA, gB, gC = g_conic[:, 0], 0.5 * g_conic[:, 1], g_conic[:, 2]
    # M = K G K with K = [[A, B], [B, C]], G = [[gA, gB], [gB, gC]]
    m00 = A * A * gA + 2 * A * B * gB + B * B * gC
    m01 = A * B * gA + (A * C + B * B) * gB + B * C * gC
    m11 = B * B * gA + 2 * B * C * gB + C * C * gC
    ga, gb, gc = -m00, -2.0 * m01, -m11

    pc = proj.cam_points
    x, y, z = pc[:, 0], pc[:, 1], np.where(proj.visible, pc[:, 2], 1.0)
    fx, fy = camera.fx, camera.fy
    s = gset.radius**2
    iz = 1.0 / z
    iz2, iz3 = iz * iz, iz * iz * iz
    iz4, iz5 = iz2 * iz2, iz2 * iz3
    gmx, gmy = g_mean[:, 0], g_mean[:, 1]
    dx = gmx * fx * iz + ga * s * fx * fx * 2 * x * iz4 + gb * s * fx * fy * y * iz4
    dy = gmy * fy * iz + gb * s * fx * fy * x * iz4 + gc * s * fy * fy * 2 * y * iz4
    dz = (-gmx * fx * x * iz2 - gmy * fy * y * iz2
          + ga * s * fx * fx * (-2 * iz3 - 4 * x * x * iz5)
          + gb * s * fx * fy * (-4 * x * y * iz5)
          + gc * s * fy * fy * (-2 * iz3 - 4 * y * y * iz5))
    g_cam = np.column_stack([dx, dy, dz])
    g_cam[~proj.visible] = 0.0
    g_world = g_cam @ camera.rotation
    return Gradients(g_world, g_opac, g_color, g_mean, proj.visible.copy())
