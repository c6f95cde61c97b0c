"""Optimise a Spherical Gaussian set against multi-view edge maps.

Training runs in two phases. Phase one densifies (clone with jitter), resets
opacities periodically and ends with a final prune; phase two only refines
attributes and ends with another final prune. Opacity and colour live behind a
logistic so they always stay inside [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .geometry import Camera
from .losses import total_loss
from .render import SphericalGaussianSet, render

log = logging.getLogger(__name__)


class DegenerateDataError(ValueError):
    """No usable supervision (e.g. every edge map is empty)."""


@dataclass
class TrainConfig:
    grid_resolution: int = 50
    extent: tuple = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    r0: float = 0.005
    eta: float = 0.3
    lambda1: float = 0.2
    lambda2: float = 2.0
    lambda3: float = 0.01
    phase_iters: tuple = (3000, 3000)
    densify_interval: int = 200
    opacity_reset_interval: int = 1000
    opacity_reset_value: float = 0.1
    densify_grad_threshold: float = 5e-3
    prune_opacity_min: float = 0.005
    final_prune_opacity: float = 0.5
    final_prune_color: float = 0.1
    init_opacity: float = 0.1
    init_color: float = 0.5
    lr_position: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    lr_opacity: float = 0.05
    lr_color: float = 0.0025
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-15
    seed: int = 0

    def __post_init__(self):
        self.extent = tuple(tuple(float(v) for v in e) for e in self.extent)
        self.phase_iters = tuple(int(v) for v in self.phase_iters)
        self.adam_betas = tuple(float(v) for v in self.adam_betas)
        for name in ("lambda1", "lambda2", "lambda3", "r0", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be at least 2")
        p1 = self.phase_iters[0]
        for name in ("densify_interval", "opacity_reset_interval"):
            v = getattr(self, name)
            if v <= 0 or p1 % v:
                raise ValueError(f"{name} must divide the phase-1 length")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def total_iters(self) -> int:
        return sum(self.phase_iters)


def grid_init(cfg: TrainConfig) -> SphericalGaussianSet:
    """Gaussians at the cell centres of a ``res^3`` lattice over ``cfg.extent``."""
    res = cfg.grid_resolution
    lo, hi = np.asarray(cfg.extent[0]), np.asarray(cfg.extent[1])
    axes = [lo[k] + (np.arange(res) + 0.5) * (hi[k] - lo[k]) / res for k in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    n = len(pts)
    return SphericalGaussianSet(pts, np.full(n, cfg.init_opacity), np.full(n, cfg.init_color), cfg.r0)


def densify(gset: SphericalGaussianSet, grad_stats: np.ndarray, threshold: float,
            rng: np.random.Generator) -> tuple[SphericalGaussianSet, np.ndarray]:
    """Clone every Gaussian whose mean screen-gradient norm exceeds ``threshold``.

    Returns the grown set and the indices that were cloned. Clones are
    appended after the originals, jittered by N(0, (r0/2)^2) per axis.
    """
    src = np.flatnonzero(np.asarray(grad_stats) > threshold)
    if len(src) == 0:
        return gset.copy(), src
    jitter = rng.normal(0.0, gset.radius / 2, size=(len(src), 3))
    return SphericalGaussianSet(
        np.vstack([gset.centers, gset.centers[src] + jitter]),
        np.concatenate([gset.opacities, gset.opacities[src]]),
        np.concatenate([gset.colors, gset.colors[src]]),
        gset.radius,
    ), src


def prune_mask(gset: SphericalGaussianSet, mode: str, cfg: TrainConfig | None = None) -> np.ndarray:
    """Boolean mask of Gaussians to keep."""
    cfg = cfg or TrainConfig()
    if mode == "running":
        return gset.opacities >= cfg.prune_opacity_min
    if mode == "final":
        # drop when either attribute marks the Gaussian as insignificant
        return (gset.opacities >= cfg.final_prune_opacity) & (gset.colors >= cfg.final_prune_color)
    raise ValueError(f"unknown prune mode {mode!r}")


def prune(gset: SphericalGaussianSet, mode: str, cfg: TrainConfig | None = None) -> SphericalGaussianSet:
    return gset.subset(prune_mask(gset, mode, cfg))


class Adam:
    """Adam over a dict of named arrays with per-name learning rates."""

    def __init__(self, params: dict, betas=(0.9, 0.999), eps=1e-15):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = {k: np.zeros(len(v), dtype=np.int64) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lrs: dict):
        for k, g in grads.items():
            m, v, t = self.m[k], self.v[k], self.t[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            t += 1
            bc1 = 1 - self.b1 ** t
            bc2 = 1 - self.b2 ** t
            if g.ndim > 1:
                bc1, bc2 = bc1[:, None], bc2[:, None]
            params[k] -= lrs[k] * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def select(self, keep: np.ndarray):
        for d in (self.m, self.v, self.t):
            for k in d:
                d[k] = d[k][keep]

    def extend(self, n: int):
        # fresh state for appended parameters
        for d in (self.m, self.v, self.t):
            for k in d:
                pad = np.zeros((n,) + d[k].shape[1:], dtype=d[k].dtype)
                d[k] = np.concatenate([d[k], pad])

    def reset(self, name: str):
        self.m[name][:] = 0
        self.v[name][:] = 0
        self.t[name][:] = 0


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-6, 1 - 1e-6)
    return np.log(p) - np.log1p(-p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class TrainLog:
    """Per-iteration record; ``events`` lists (iteration, description)."""

    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)

    COLUMNS = ("iteration", "phase", "view", "total", "edge", "dssim", "opacity_color", "reg", "count")

    def counts(self) -> np.ndarray:
        return np.array([r[-1] for r in self.rows], dtype=np.int64)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[self.COLUMNS.index(name)] for r in self.rows])


def position_lr(cfg: TrainConfig, it: int) -> float:
    """Log-linear decay from ``lr_position`` to ``lr_position_final``."""
    frac = min(max(it / max(cfg.total_iters, 1), 0.0), 1.0)
    return float(np.exp((1 - frac) * np.log(cfg.lr_position) + frac * np.log(cfg.lr_position_final)))


def usable_views(views, eta: float) -> list[int]:
    """Indices of views with at least one edge pixel; the rest are skipped."""
    return [i for i, (_, gt) in enumerate(views) if np.any(np.asarray(gt) > eta)]


def run_phase(gset: SphericalGaussianSet, views, cfg: TrainConfig, phase: int,
              start_iter: int, log_: TrainLog, usable: list[int] | None = None) -> SphericalGaussianSet:
    """Run one training phase; returns the pruned set at its end."""
    if usable is None:
        usable = usable_views(views, cfg.eta)
    if not usable:
        raise DegenerateDataError("every view is degenerate (no edge pixels above eta)")
    rng = np.random.default_rng([cfg.seed, phase])
    n_iters = cfg.phase_iters[phase - 1]
    params = {
        "centers": gset.centers.copy(),
        "opacity": _logit(gset.opacities),
        "color": _logit(gset.colors),
    }
    adam = Adam(params, cfg.adam_betas, cfg.adam_eps)
    grad_accum = np.zeros(len(gset))
    grad_count = np.zeros(len(gset))
    r0 = gset.radius

    for k in range(1, n_iters + 1):
        it = start_iter + k
        view = usable[int(rng.integers(len(usable)))]
        camera, gt = views[view]
        o = _sigmoid(params["opacity"])
        c = _sigmoid(params["color"])
        cur = SphericalGaussianSet(params["centers"], o, c, r0)
        terms, grads = total_loss(cur, camera, gt, cfg)
        adam.step(params,
                  {"centers": grads.centers,
                   "opacity": grads.opacities * o * (1 - o),
                   "color": grads.colors * c * (1 - c)},
                  {"centers": position_lr(cfg, it), "opacity": cfg.lr_opacity, "color": cfg.lr_color})
        vis = grads.visible
        grad_accum[vis] += np.linalg.norm(grads.means2d[vis], axis=1)
        grad_count[vis] += 1

        if phase == 1 and k < n_iters and k % cfg.densify_interval == 0:
            stats = grad_accum / np.maximum(grad_count, 1)
            log.debug("densify stat percentiles 50/90/99: %s", np.percentile(stats, [50, 90, 99]))
            cur = SphericalGaussianSet(params["centers"], _sigmoid(params["opacity"]),
                                       _sigmoid(params["color"]), r0)
            grown, src = densify(cur, stats, cfg.densify_grad_threshold, rng)
            if len(src):
                params["centers"] = np.vstack([params["centers"], grown.centers[len(cur):]])
                params["opacity"] = np.concatenate([params["opacity"], params["opacity"][src]])
                params["color"] = np.concatenate([params["color"], params["color"][src]])
                adam.extend(len(src))
            keep = _sigmoid(params["opacity"]) >= cfg.prune_opacity_min
            for key in params:
                params[key] = params[key][keep]
            adam.select(keep)
            log_.events.append((it, f"densify +{len(src)} prune -{int((~keep).sum())}"))
            grad_accum = np.zeros(len(keep.nonzero()[0]))
            grad_count = np.zeros_like(grad_accum)
        if phase == 1 and k < n_iters and k % cfg.opacity_reset_interval == 0:
            params["opacity"] = np.minimum(params["opacity"], _logit(np.array(cfg.opacity_reset_value)))
            adam.reset("opacity")
            log_.events.append((it, "opacity reset"))

        log_.rows.append((it, phase, view, terms.total, terms.edge, terms.dssim,
                          terms.opacity_color, terms.reg, len(params["centers"])))

    final = SphericalGaussianSet(params["centers"], _sigmoid(params["opacity"]),
                                 _sigmoid(params["color"]), r0)
    before = len(final)
    final = prune(final, "final", cfg)
    log_.events.append((start_iter + n_iters, f"final prune {before} -> {len(final)}"))
    log.info("phase %d done: %d -> %d Gaussians", phase, before, len(final))
    return final


def train(views, cfg: TrainConfig | None = None, init: SphericalGaussianSet | None = None,
          start_phase: int = 1, progress=None):
    """Two-phase training on ``views`` (a list of ``(Camera, edge_map)``).

    ``init``/``start_phase`` resume from a phase boundary checkpoint. Returns
    the final set and a :class:`TrainLog`.
    """
    cfg = cfg or TrainConfig()
    views = [(cam, np.asarray(gt, dtype=np.float64)) for cam, gt in views]
    usable = usable_views(views, cfg.eta)
    if not usable:
        raise DegenerateDataError("every view is degenerate (no edge pixels above eta)")
    gset = init if init is not None else grid_init(cfg)
    log_ = TrainLog()
    it = sum(cfg.phase_iters[: start_phase - 1])
    for phase in range(start_phase, 3):
        gset = run_phase(gset, views, cfg, phase, it, log_, usable)
        it += cfg.phase_iters[phase - 1]
        if progress is not None:
            progress(phase, gset)
    return gset, log_


def render_views(gset: SphericalGaussianSet, cameras: list[Camera]) -> list[np.ndarray]:
    return [render(gset, cam) for cam in cameras]
