"""Point-set metrics for reconstructed curve networks against ground-truth edge samples."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .curves import CurveNetwork

DEFAULT_THRESHOLD = 0.02
DEFAULT_SPACING = 0.005
VOXEL_RES = 64


@dataclass
class MetricReport:
    chamfer: float
    precision: float
    recall: float
    fscore: float
    iou: float
    n_pred: int
    n_gt: int
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)

    SUMMARY_FIELDS = ("chamfer", "precision", "recall", "fscore", "iou", "n_pred", "n_gt", "threshold")

    def summary_line(self, sep: str = "\t") -> str:
        return sep.join(repr(getattr(self, k)) for k in self.SUMMARY_FIELDS)


def fscore(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


class Normalizer:
    """Similarity transform sending a reference cloud's bounding box into [0, 1]^3.

    The longest box side maps to [0, 1]; the shorter axes are centred on 0.5.
    """

    def __init__(self, reference: np.ndarray):
        ref = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
        if len(ref) == 0:
            raise ValueError("cannot normalise an empty point set")
        lo, hi = ref.min(0), ref.max(0)
        extent = (hi - lo).max()
        if extent <= 0:
            raise ValueError("reference points have zero extent")
        self.scale = 1.0 / extent
        self.offset = 0.5 - 0.5 * (lo + hi) * self.scale

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64).reshape(-1, 3) * self.scale + self.offset


def normalize_points(points: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """Apply the normalising transform of ``reference`` (default: ``points`` itself)."""
    return Normalizer(points if reference is None else reference)(points)


def voxel_iou(a: np.ndarray, b: np.ndarray, res: int = VOXEL_RES) -> float:
    """Occupancy IoU on a ``res``^3 grid over [0, 1]^3 (points outside are clamped in)."""
    def occ(p):
        idx = np.clip(np.floor(p * res).astype(np.int64), 0, res - 1)
        return set(map(tuple, idx))
    va, vb = occ(a), occ(b)
    union = len(va | vb)
    return len(va & vb) / union if union else 1.0


def compare_points(pred: np.ndarray, gt: np.ndarray, threshold: float = DEFAULT_THRESHOLD,
                   squared_cd: bool = False, voxel_res: int = VOXEL_RES) -> MetricReport:
    """Metrics between two point clouds that already live in normalised space."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("metrics need non-empty prediction and ground truth")
    d_pg, _ = cKDTree(gt).query(pred)
    d_gp, _ = cKDTree(pred).query(gt)
    if squared_cd:
        cd = 0.5 * (np.mean(d_pg**2) + np.mean(d_gp**2))
    else:
        cd = 0.5 * (d_pg.mean() + d_gp.mean())
    p = float(np.mean(d_pg < threshold))
    r = float(np.mean(d_gp < threshold))
    return MetricReport(float(cd), p, r, fscore(p, r), voxel_iou(pred, gt, voxel_res),
                        len(pred), len(gt), float(threshold))


def compute_metrics(pred_curves: CurveNetwork, gt_points: np.ndarray, threshold: float = DEFAULT_THRESHOLD,
                    sample_spacing: float = DEFAULT_SPACING, squared_cd: bool = False,
                    voxel_res: int = VOXEL_RES) -> MetricReport:
    """Sample the curves at ``sample_spacing`` and score them against ``gt_points``.

    Both clouds are mapped by the normalising transform of the ground truth, so
    the prediction keeps its geometry relative to it.
    """
    if len(pred_curves) == 0:
        raise ValueError("metrics need at least one predicted curve")
    gt_points = np.asarray(gt_points, dtype=np.float64).reshape(-1, 3)
    norm = Normalizer(gt_points)
    # sample in normalised units so the spacing means the same as the threshold
    pred = pred_curves.sample_by_spacing(sample_spacing / norm.scale)
    return compare_points(norm(pred), norm(gt_points), threshold, squared_cd, voxel_res)
