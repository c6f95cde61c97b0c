"""Finite-difference oracle for the rendering objective."""

import numpy as np

from splatcurves.geometry import Camera, look_at
from splatcurves.losses import dssim_loss, edge_loss, opacity_color_loss, regularization_loss, total_loss
from splatcurves.render import SphericalGaussianSet, render
from splatcurves.train import TrainConfig

H_POS = 1e-5
H_ATTR = 1e-5
REL_TOL = 1e-3
ABS_TOL = 1e-6


def random_scene(seed: int, n_max: int = 20, size: int = 32):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    az = rng.uniform(0, 2 * np.pi)
    eye = np.array([0.5 + 1.6 * np.cos(az), 0.5 + 1.6 * np.sin(az), rng.uniform(0.2, 1.2)])
    cam = Camera(45.0, 45.0, (size - 1) / 2, (size - 1) / 2, size, size, look_at(eye, (0.5, 0.5, 0.5)))
    gset = SphericalGaussianSet(rng.uniform(0.3, 0.7, (n, 3)), rng.uniform(0.05, 0.95, n),
                                rng.uniform(0.05, 0.95, n), radius=float(rng.uniform(0.01, 0.06)))
    gt = np.clip(rng.uniform(-0.5, 1.2, (size, size)), 0, 1)
    return gset, cam, gt


def objective_under_plan(gset, cam, gt, cfg, plan):
    img = render(gset, cam, plan=plan)
    e, _ = edge_loss(img, gt, cfg.eta)
    s, _ = dssim_loss(img, gt)
    oc, _, _ = opacity_color_loss(gset)
    reg, _ = regularization_loss(gset)
    return (1 - cfg.lambda1) * e + cfg.lambda1 * s + cfg.lambda2 * oc + cfg.lambda3 * reg


def check_total_gradient(seed: int, cfg: TrainConfig | None = None, **scene_kw):
    """Return (n_checked, worst_violation, details) for one random scene.

    ``worst_violation`` is the largest ``|a - f| / max(REL_TOL * max(|a|, |f|), ABS_TOL)``;
    a value <= 1 means every component is within tolerance.
    """
    cfg = cfg or TrainConfig()
    gset, cam, gt = random_scene(seed, **scene_kw)
    _, plan = render(gset, cam, return_state=True)
    _, grads = total_loss(gset, cam, gt, cfg, plan)
    f = lambda g: objective_under_plan(g, cam, gt, cfg, plan)
    worst, info, n = 0.0, None, 0

    def compare(analytic, plus, minus, h, label):
        nonlocal worst, info, n
        fd = (f(plus) - f(minus)) / (2 * h)
        tol = max(REL_TOL * max(abs(analytic), abs(fd)), ABS_TOL)
        v = abs(analytic - fd) / tol
        n += 1
        if v > worst:
            worst, info = v, (label, analytic, fd)

    for i in range(len(gset)):
        for k in range(3):
            a, b = gset.copy(), gset.copy()
            a.centers[i, k] += H_POS
            b.centers[i, k] -= H_POS
            compare(grads.centers[i, k], a, b, H_POS, f"center[{i},{k}]")
        for attr in ("opacities", "colors"):
            a, b = gset.copy(), gset.copy()
            getattr(a, attr)[i] += H_ATTR
            getattr(b, attr)[i] -= H_ATTR
            compare(getattr(grads, attr)[i], a, b, H_ATTR, f"{attr}[{i}]")
    return n, worst, info
