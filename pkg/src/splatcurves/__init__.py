"""Edge reconstruction with Spherical Gaussians and rational Bézier curves.

Typical use::

    from splatcurves import make_scene, train, TrainConfig, extract_curves, compute_metrics

    scene = make_scene("cube", n_views=30)
    gset, log = train(scene.views, TrainConfig(grid_resolution=30, phase_iters=(1000, 1000),
                                               densify_interval=100, opacity_reset_interval=500))
    curves = extract_curves(gset).curves
    print(compute_metrics(curves, scene.gt_points))
"""

from .curves import (
    CurveNetwork,
    ExtractConfig,
    LineSegmentSet,
    extract_curves,
    global_optimize,
    init_beziers,
    line_fitting,
)
from .geometry import Camera, RationalBezier, bezier_eval, look_at, project_point
from .metrics import MetricReport, compute_metrics, normalize_points
from .render import SphericalGaussianSet, render, render_backward
from .scene import make_model, make_scene
from .train import TrainConfig, train

__all__ = [
    "Camera", "CurveNetwork", "ExtractConfig", "LineSegmentSet", "MetricReport", "RationalBezier",
    "SphericalGaussianSet", "TrainConfig", "bezier_eval", "compute_metrics", "extract_curves",
    "global_optimize", "init_beziers", "line_fitting", "look_at", "make_model", "make_scene", "normalize_points",
    "project_point", "render", "render_backward", "train",
]
__version__ = "0.1.0"
