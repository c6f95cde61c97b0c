"""Training objectives for edge-map supervision, each returning (value, gradient)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .geometry import Camera
from .render import Gradients, RenderState, SphericalGaussianSet, render, render_backward

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_shapes(a: np.ndarray, b: np.ndarray):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"image shapes differ: {np.shape(a)} vs {np.shape(b)}")


def edge_loss(rendered: np.ndarray, gt: np.ndarray, eta: float = 0.3):
    """Edge-balanced squared error.

    Pixels with ``gt > eta`` form the edge set E. Edge residuals are weighted by
    the non-edge fraction ``(N - |E|) / N`` and the rest by ``|E| / N``, so a
    sparse edge map still pulls as hard as its large background. With no edge
    pixel both weights vanish and the loss is exactly 0.
    """
    rendered = np.asarray(rendered, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_shapes(rendered, gt)
    edge = gt > eta
    n = gt.size
    n_edge = int(edge.sum())
    weight = np.where(edge, (n - n_edge) / n, n_edge / n)
    diff = rendered - gt
    return float(np.sum(weight * diff * diff)), 2.0 * weight * diff


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    # zero padding; the kernel is symmetric so this operator is self-adjoint
    out = correlate1d(img, k, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, k, axis=1, mode="constant", cval=0.0)


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    return 1.0 - 2.0 * dssim_loss(x, y)[0]


def dssim_loss(rendered: np.ndarray, gt: np.ndarray):
    """``(1 - SSIM) / 2`` with an 11x11 Gaussian window and its gradient."""
    x = np.asarray(rendered, dtype=np.float64)
    y = np.asarray(gt, dtype=np.float64)
    _check_shapes(x, y)
    k = gaussian_window()
    mx, my = _blur(x, k), _blur(y, k)
    sxx = _blur(x * x, k) - mx * mx
    syy = _blur(y * y, k) - my * my
    sxy = _blur(x * y, k) - mx * my

    a1 = 2 * mx * my + SSIM_C1
    a2 = 2 * sxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = sxx + syy + SSIM_C2
    smap = (a1 * a2) / (b1 * b2)
    n = x.size
    value = (1.0 - smap.mean()) / 2.0

    # partials of the SSIM map w.r.t. the local statistics
    d_mx = (2 * my * a2) / (b1 * b2) - smap * (2 * mx) / b1
    d_sxy = 2 * a1 / (b1 * b2)
    d_sxx = -smap / b2
    # sxx = E[x^2] - mx^2 and sxy = E[xy] - mx my
    g_mx = d_mx - 2 * mx * d_sxx - my * d_sxy
    g_exx = d_sxx
    g_exy = d_sxy
    grad = _blur(g_mx, k) + 2 * x * _blur(g_exx, k) + y * _blur(g_exy, k)
    return float(value), -grad / (2.0 * n)


def opacity_color_loss(gset: SphericalGaussianSet):
    """Sum of squared opacity-colour gaps; gradients w.r.t. (opacity, colour)."""
    d = gset.opacities - gset.colors
    return float(np.sum(d * d)), 2 * d, -2 * d


def regularization_loss(gset: SphericalGaussianSet):
    """``sum log(1 + o^2 / 0.5)`` and its opacity gradient."""
    o = gset.opacities
    return float(np.sum(np.log1p(o * o / 0.5))), 2 * o / (0.5 + o * o)


@dataclass
class LossTerms:
    edge: float
    dssim: float
    opacity_color: float
    reg: float
    total: float


def total_loss(gset: SphericalGaussianSet, camera: Camera, gt: np.ndarray, weights,
               state: RenderState | None = None):
    """Weighted training objective for one view and its gradients.

    ``weights`` is anything with ``eta``, ``lambda1``, ``lambda2`` and ``lambda3``
    attributes (a :class:`~splatcurves.train.TrainConfig`). Image-space
    gradients are pushed through :func:`render_backward`; the returned
    gradients are w.r.t. the clamped attributes themselves.
    """
    if state is None:
        _, state = render(gset, camera, return_state=True)
    rendered = state.image
    l1, lam2, lam3 = weights.lambda1, weights.lambda2, weights.lambda3
    e_val, e_grad = edge_loss(rendered, gt, weights.eta)
    if l1 > 0:
        s_val, s_grad = dssim_loss(rendered, gt)
    else:
        s_val, s_grad = 0.0, 0.0
    oc_val, oc_go, oc_gc = opacity_color_loss(gset)
    reg_val, reg_go = regularization_loss(gset)

    img_grad = (1 - l1) * e_grad + l1 * s_grad
    grads = render_backward(gset, camera, img_grad, state)
    grads.opacities = grads.opacities + lam2 * oc_go + lam3 * reg_go
    grads.colors = grads.colors + lam2 * oc_gc
    total = (1 - l1) * e_val + l1 * s_val + lam2 * oc_val + lam3 * reg_val
    return LossTerms(e_val, s_val, oc_val, reg_val, float(total)), grads
