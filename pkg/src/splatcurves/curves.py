"""Parametric curve extraction from a trained Spherical Gaussian set.

Two stages:

1. ``line_fitting`` peels the Gaussian centres into line segments. Each turn
   runs several randomised searches; a search seeds a short segment between a
   centre and one of its nearest neighbours, collects the centres near the
   (dilated) segment and fits the endpoints to them by gradient descent on a
   Chamfer loss. The best-scoring search's centres are removed.
2. ``global_optimize`` lifts every segment to a rational cubic Bézier and
   refines all control points and weights jointly against the full set with an
   opacity-weighted Chamfer loss plus an endpoint-attraction term.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .geometry import RationalBezier, bernstein3, rational_points
from .render import SphericalGaussianSet

log = logging.getLogger(__name__)


class TooFewGaussiansError(ValueError):
    pass


@dataclass
class ExtractConfig:
    N0: int = 5
    n_searches: int = 32
    Ns: int = 64
    delta1: float = 0.02
    subset_squared: bool = False
    gamma1: float = 2.0
    gamma2: float = 2.0
    delta2: float = 0.01
    lambda_ep: float = 0.005
    dilation_factor: int = 3
    knn: int = 5
    inner_iters: int = 100
    inner_lr: float = 1e-3
    grow_rounds: int = 200
    global_iters: int = 500
    global_lr_points: float = 1e-3
    global_lr_weights: float = 1e-2
    merge_threshold: float = 1e-4
    min_coverage: float = 0.8
    resample_noise: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("delta1", "gamma1", "gamma2", "delta2", "lambda_ep"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.N0 < 1 or self.Ns < 2 or self.dilation_factor < 1:
            raise ValueError("N0, Ns and dilation_factor must be positive (Ns >= 2)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown extraction keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LineSegmentSet:
    endpoints: np.ndarray  # (L, 2, 3)

    def __post_init__(self):
        self.endpoints = np.asarray(self.endpoints, dtype=np.float64).reshape(-1, 2, 3)
        if np.any(np.linalg.norm(self.endpoints[:, 1] - self.endpoints[:, 0], axis=1) == 0):
            raise ValueError("segment endpoints must differ")

    def __len__(self):
        return len(self.endpoints)


@dataclass
class CurveNetwork:
    curves: list = field(default_factory=list)

    def __len__(self):
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    @classmethod
    def from_arrays(cls, control_points, weights) -> "CurveNetwork":
        return cls([RationalBezier(p, w) for p, w in zip(control_points, weights)])

    @property
    def control_points(self) -> np.ndarray:
        return np.array([c.control_points for c in self.curves]).reshape(-1, 4, 3)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weights for c in self.curves]).reshape(-1, 4)

    def sample(self, n: int) -> np.ndarray:
        if not self.curves:
            return np.zeros((0, 3))
        u = np.linspace(0.0, 1.0, n)
        return np.concatenate([rational_points(c.control_points, c.weights, u) for c in self.curves])

    def sample_by_spacing(self, spacing: float, resolution: int = 2000) -> np.ndarray:
        """Points at (approximately) uniform arc-length ``spacing`` on every curve."""
        out = []
        u = np.linspace(0.0, 1.0, resolution)
        for c in self.curves:
            dense = rational_points(c.control_points, c.weights, u)
            s = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))]
            n = max(int(np.ceil(s[-1] / spacing)), 1) + 1
            targets = np.linspace(0.0, s[-1], n)
            uu = np.interp(targets, s, u)
            out.append(rational_points(c.control_points, c.weights, uu))
        return np.concatenate(out) if out else np.zeros((0, 3))


# ---------------------------------------------------------------------------
# point-set primitives


def dilate_samples(points: np.ndarray, r0: float, seed=0, k: int = 3) -> np.ndarray:
    """Repeat each point ``k`` times and add isotropic N(0, r0^2) noise."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    points = np.asarray(points, dtype=np.float64)
    return np.repeat(points, k, axis=0) + rng.normal(0.0, r0, size=(len(points) * k, 3))


def sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise squared distance, summed in a fixed x, y, z order."""
    d = a - b
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def nearest(src: np.ndarray, dst: np.ndarray, tree: cKDTree | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest ``dst`` point for each ``src`` point and its squared distance.

    ``tree`` may be a prebuilt index over ``dst``.
    """
    _, idx = (tree or cKDTree(dst)).query(src)
    return idx, sqdist(src, dst[idx])


def _require_nonempty(*sets):
    for s in sets:
        if len(s) == 0:
            raise ValueError("Chamfer distance needs non-empty point sets")


def chamfer(A, B, gamma: float = 1.0) -> float:
    """``gamma * mean_A min_B |x-y|^2 + mean_B min_A |x-y|^2``."""
    A = np.asarray(A, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 3)
    _require_nonempty(A, B)
    _, d_ab = nearest(A, B)
    _, d_ba = nearest(B, A)
    return float(gamma * d_ab.mean() + d_ba.mean())


def chamfer_grad(A: np.ndarray, B: np.ndarray, gamma: float = 1.0, weights: np.ndarray | None = None,
                 tree_b: cKDTree | None = None):
    """(Weighted) Chamfer value and its gradient w.r.t. the points of ``A``.

    With ``weights`` (one per point of ``B``), each A->B term is scaled by the
    weight of the nearest B point and each B->A term by the B point's own weight.
    """
    _require_nonempty(A, B)
    i_ab, d_ab = nearest(A, B, tree_b)
    i_ba, d_ba = nearest(B, A)
    w1 = 1.0 if weights is None else weights[i_ab]
    w2 = 1.0 if weights is None else weights
    na, nb = len(A), len(B)
    value = gamma / na * np.sum(w1 * d_ab) + np.sum(w2 * d_ba) / nb
    grad = (2.0 * gamma / na) * np.reshape(w1, (-1, 1)) * (A - B[i_ab])
    np.add.at(grad, i_ba, (2.0 / nb) * np.reshape(w2, (-1, 1)) * (A[i_ba] - B))
    return float(value), grad


def weighted_chamfer(samples, gset: SphericalGaussianSet, gamma2: float = 2.0) -> float:
    """Opacity-weighted Chamfer between curve samples and Gaussian centres."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
    _require_nonempty(samples, gset.centers)
    return chamfer_grad(samples, gset.centers, gamma2, gset.opacities)[0]


def select_subset(centers: np.ndarray, samples: np.ndarray, delta1: float, squared: bool = True) -> np.ndarray:
    """Indices of centres whose nearest sample is within ``delta1``.

    With ``squared`` the squared distance is compared to ``delta1``.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    if len(centers) == 0 or len(samples) == 0:
        return np.zeros(0, dtype=np.int64)
    _, d2 = nearest(centers, np.asarray(samples, dtype=np.float64).reshape(-1, 3))
    stat = d2 if squared else np.sqrt(d2)
    return np.flatnonzero(stat < delta1)


def endpoint_loss(curves, delta2: float = 0.01):
    """Attraction between nearby endpoints of different curves.

    Every pair of endpoints closer than ``sqrt(delta2)`` contributes its squared
    distance; farther pairs (and a pair exactly at the threshold) contribute 0.
    ``curves`` is a :class:`CurveNetwork` or a (C, 4, 3) control-point array.
    Returns the value and its gradient w.r.t. the control points.
    """
    cp = curves.control_points if isinstance(curves, CurveNetwork) else np.asarray(curves, dtype=np.float64)
    n = len(cp)
    grad = np.zeros_like(cp)
    if n < 2:
        return 0.0, grad
    ends = np.concatenate([cp[:, 0], cp[:, 3]])
    owner = np.r_[np.arange(n), np.arange(n)]
    slot = np.r_[np.zeros(n, int), np.full(n, 3)]
    ii, jj = np.triu_indices(2 * n, k=1)
    keep = owner[ii] != owner[jj]
    ii, jj = ii[keep], jj[keep]
    diff = ends[ii] - ends[jj]
    d2 = np.einsum("ij,ij->i", diff, diff)
    close = d2 < delta2
    ii, jj, diff, d2 = ii[close], jj[close], diff[close], d2[close]
    g = np.zeros_like(ends)
    np.add.at(g, ii, 2 * diff)
    np.add.at(g, jj, -2 * diff)
    np.add.at(grad, (owner, slot), g)
    return float(d2.sum()), grad


# ---------------------------------------------------------------------------
# line fitting


def _segment_samples(p, q, t, noise):
    return p + t[:, None] * (q - p) + noise


def _optimize_endpoints(p, q, target, t, noise, cfg: ExtractConfig):
    return _kernels.fit_segment(np.asarray(p, np.float64), np.asarray(q, np.float64),
                                np.ascontiguousarray(target), t, noise, cfg.gamma1, cfg.inner_lr, cfg.inner_iters)


def _search(pts: np.ndarray, p, q, noise, t, cfg: ExtractConfig):
    """One randomised line search; returns (score, p, q, members) or None."""
    sel = lambda a, b: select_subset(pts, _segment_samples(a, b, t, noise), cfg.delta1, cfg.subset_squared)
    members = sel(p, q)
    if len(members) < cfg.N0:
        return None
    for _ in range(cfg.grow_rounds):
        p_new, q_new = _optimize_endpoints(p, q, pts[members], t, noise, cfg)
        moved = max(np.linalg.norm(p_new - p), np.linalg.norm(q_new - q))
        p, q = p_new, q_new
        grown = np.union1d(members, sel(p, q))
        # settled: nothing new recruited and the endpoints have stopped drifting
        if len(grown) == len(members) and moved < 0.25 * cfg.delta1:
            break
        members = grown
    else:
        p, q = _optimize_endpoints(p, q, pts[members], t, noise, cfg)
    if np.linalg.norm(q - p) == 0:
        return None
    # per-centre fit cost, so a search that stalled early cannot win on luck
    score = chamfer(_segment_samples(p, q, t, noise), pts[members], cfg.gamma1) / len(members)
    return score, p, q, members


def line_fitting(gset: SphericalGaussianSet, cfg: ExtractConfig | None = None, workers: int = 1):
    """Greedy randomised line fitting over the Gaussian centres.

    Returns the :class:`LineSegmentSet` and the indices (into ``gset``) of the
    centres left unexplained at termination. Searches within a turn may run on
    ``workers`` threads; all random draws happen up front, so the result does
    not depend on the worker count.
    """
    cfg = cfg or ExtractConfig()
    rng = np.random.default_rng([cfg.seed, 1])
    centers = gset.centers
    remaining = np.arange(len(centers))
    t = np.repeat(np.linspace(0.0, 1.0, cfg.Ns), cfg.dilation_factor)
    segments = []
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while len(remaining) > cfg.N0:
            pts = centers[remaining]
            tree = cKDTree(pts)
            k = min(cfg.knn + 1, len(pts))
            jobs = []
            for _ in range(cfg.n_searches):
                i = int(rng.integers(len(pts)))
                _, nn = tree.query(pts[i], k)
                j = int(rng.choice(np.atleast_1d(nn)[1:]))
                noise = rng.normal(0.0, gset.radius, size=(len(t), 3))
                jobs.append((pts, pts[i].copy(), pts[j].copy(), noise, t, cfg))
            results = list(pool.map(lambda a: _search(*a), jobs)) if pool else [_search(*a) for a in jobs]
            best = None
            for res in results:
                # strict comparison: ties go to the earliest search
                if res is not None and (best is None or res[0] < best[0]):
                    best = res
            if best is None:
                log.info("line fitting stopped early: every search was degenerate")
                break
            _, p, q, members = best
            log.debug("turn %d: |G|=%d, removed %d, length %.3f, score %.3e",
                      len(segments), len(remaining), len(members), np.linalg.norm(q - p), best[0])
            segments.append((p, q))
            remaining = np.delete(remaining, members)
    finally:
        if pool:
            pool.shutdown()
    return LineSegmentSet(np.array(segments).reshape(-1, 2, 3)), remaining


def init_beziers(lines: LineSegmentSet) -> CurveNetwork:
    """Straight cubics through each segment: controls at 0, 1/4, 3/4, 1; unit weights."""
    curves = []
    for p, q in lines.endpoints:
        cp = np.stack([p, 0.75 * p + 0.25 * q, 0.25 * p + 0.75 * q, q])
        curves.append(RationalBezier(cp, np.ones(4)))
    return CurveNetwork(curves)


# ---------------------------------------------------------------------------
# global optimisation


@dataclass
class GlobalTrace:
    objective: list = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0


class _CurveObjective:
    """Weighted Chamfer + endpoint objective over packed curve parameters."""

    def __init__(self, gset: SphericalGaussianSet, n_curves: int, cfg: ExtractConfig, rng):
        self.cfg = cfg
        self.centers = gset.centers
        self.opac = gset.opacities
        u = np.linspace(0.0, 1.0, cfg.Ns)
        self.basis = bernstein3(u)  # (Ns, 4)
        self.shape = (n_curves, cfg.Ns * cfg.dilation_factor, 3)
        self.radius = gset.radius
        self.tree = cKDTree(self.centers)
        self.redraw(rng)

    def redraw(self, rng):
        self.noise = rng.normal(0.0, self.radius, size=self.shape)

    def __call__(self, cp: np.ndarray, logw: np.ndarray, need_grad: bool = True):
        cfg = self.cfg
        k = cfg.dilation_factor
        w = np.exp(logw)  # (C, 4)
        bw = self.basis[None] * w[:, None, :]  # (C, Ns, 4)
        den = bw.sum(-1)  # (C, Ns)
        pts = np.einsum("cnk,ckd->cnd", bw, cp) / den[..., None]  # (C, Ns, 3)
        dil = np.repeat(pts, k, axis=1) + self.noise
        C = len(cp)
        flat = dil.reshape(-1, 3)
        wcd, g_flat = chamfer_grad(flat, self.centers, cfg.gamma2, self.opac, self.tree)
        ep, g_ep = endpoint_loss(cp, cfg.delta2)
        value = wcd + cfg.lambda_ep * ep
        if not need_grad:
            return value, None, None
        g_pts = g_flat.reshape(C, cfg.Ns, k, 3).sum(2)  # (C, Ns, 3)
        coef = bw / den[..., None]  # (C, Ns, 4)
        g_cp = np.einsum("cnk,cnd->ckd", coef, g_pts) + cfg.lambda_ep * g_ep
        # d pts / d w_i = b_i (P_i - pts) / den
        proj = np.einsum("ckd,cnd->cnk", cp, g_pts) - np.einsum("cnd,cnd->cn", pts, g_pts)[..., None]
        g_w = np.einsum("nk,cnk->ck", self.basis, proj / den[..., None])
        return value, g_cp, g_w * w


def curve_objective(curves: CurveNetwork, gset: SphericalGaussianSet, cfg: ExtractConfig | None = None,
                    seed=None) -> float:
    """Weighted Chamfer + endpoint objective of ``curves`` (fresh dilation noise)."""
    cfg = cfg or ExtractConfig()
    rng = np.random.default_rng([cfg.seed, 2] if seed is None else seed)
    obj = _CurveObjective(gset, len(curves), cfg, rng)
    return obj(curves.control_points, np.log(curves.weights), need_grad=False)[0]


def global_optimize(curves: CurveNetwork, gset: SphericalGaussianSet, cfg: ExtractConfig | None = None,
                    freeze_weights: bool = False):
    """Jointly refine every control point and weight; returns (network, trace).

    Adam on control points and log-weights with a monotone safeguard: a step
    that raises the objective is undone and the step size halved.
    """
    cfg = cfg or ExtractConfig()
    if len(curves) == 0:
        raise ValueError("no curves to optimise")
    rng = np.random.default_rng([cfg.seed, 2])
    obj = _CurveObjective(gset, len(curves), cfg, rng)
    cp = curves.control_points.copy()
    logw = np.log(curves.weights)
    lr = np.array([cfg.global_lr_points, 0.0 if freeze_weights else cfg.global_lr_weights])
    m = [np.zeros_like(cp), np.zeros_like(logw)]
    v = [np.zeros_like(cp), np.zeros_like(logw)]
    b1, b2 = 0.9, 0.999
    scale = 1.0
    trace = GlobalTrace()
    value, g_cp, g_w = obj(cp, logw)
    trace.objective.append(value)
    for it in range(1, cfg.global_iters + 1):
        if cfg.resample_noise and it > 1:
            # new dilation draw; current and candidate are compared on the same draw
            obj.redraw(rng)
            value, g_cp, g_w = obj(cp, logw)
        steps = []
        for j, g in enumerate((g_cp, g_w)):
            m[j] = b1 * m[j] + (1 - b1) * g
            v[j] = b2 * v[j] + (1 - b2) * g * g
            steps.append(scale * lr[j] * (m[j] / (1 - b1**it)) / (np.sqrt(v[j] / (1 - b2**it)) + 1e-15))
        cand_cp, cand_w = cp - steps[0], logw - steps[1]
        cand_value, cand_gcp, cand_gw = obj(cand_cp, cand_w, need_grad=not cfg.resample_noise)
        if cand_value <= value:
            cp, logw, value, g_cp, g_w = cand_cp, cand_w, cand_value, cand_gcp, cand_gw
            scale = min(scale * 1.1, 1.0)
            trace.accepted += 1
        else:
            scale *= 0.5
            trace.rejected += 1
        trace.objective.append(value)
    return CurveNetwork.from_arrays(cp, np.exp(logw)), trace


def curve_support(curves: CurveNetwork, gset: SphericalGaussianSet, cfg: ExtractConfig) -> np.ndarray:
    """Number of Gaussians near each curve (same proximity rule as subset selection)."""
    u = np.linspace(0, 1, cfg.Ns)
    return np.array([
        len(select_subset(gset.centers, c(u), cfg.delta1, cfg.subset_squared)) for c in curves
    ], dtype=np.int64)


def curve_coverage(curves: CurveNetwork, gset: SphericalGaussianSet, cfg: ExtractConfig) -> np.ndarray:
    """Fraction of each curve's samples that have a Gaussian centre within ``delta1``."""
    u = np.linspace(0, 1, cfg.Ns)
    tree = cKDTree(gset.centers)
    out = []
    for c in curves:
        d, _ = tree.query(c(u))
        stat = d * d if cfg.subset_squared else d
        out.append(np.mean(stat < cfg.delta1))
    return np.array(out)


def postprocess(curves: CurveNetwork, gset: SphericalGaussianSet, cfg: ExtractConfig) -> CurveNetwork:
    """Drop weakly supported or poorly covered curves and near-duplicates."""
    support = curve_support(curves, gset, cfg)
    coverage = curve_coverage(curves, gset, cfg)
    kept = [c for c, s, f in zip(curves, support, coverage) if s >= cfg.N0 and f >= cfg.min_coverage]
    out = []
    samples = []
    for c in kept:
        s = c(np.linspace(0, 1, cfg.Ns))
        if any(chamfer(s, other) < cfg.merge_threshold for other in samples):
            continue
        out.append(c)
        samples.append(s)
    return CurveNetwork(out)


@dataclass
class ExtractResult:
    curves: CurveNetwork
    lines: LineSegmentSet
    trace: GlobalTrace
    unexplained: np.ndarray


def extract_curves(gset: SphericalGaussianSet, cfg: ExtractConfig | None = None, workers: int = 1) -> ExtractResult:
    """Full stage two: line fitting, Bézier lifting, global refinement, clean-up."""
    cfg = cfg or ExtractConfig()
    if len(gset) <= cfg.N0:
        raise TooFewGaussiansError(f"too few Gaussians ({len(gset)}) for curve extraction (N0={cfg.N0})")
    lines, rest = line_fitting(gset, cfg, workers)
    if len(lines) == 0:
        raise TooFewGaussiansError("line fitting found no segment")
    log.info("line fitting: %d segments, %d centres unexplained", len(lines), len(rest))
    curves, trace = global_optimize(init_beziers(lines), gset, cfg)
    final = postprocess(curves, gset, cfg)
    log.info("global optimisation: objective %.3e -> %.3e, %d curves kept of %d",
             trace.objective[0], trace.objective[-1], len(final), len(curves))
    return ExtractResult(final, lines, trace, rest)
