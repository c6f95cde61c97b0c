"""Greedy line fitting on Gaussians sampled along three disjoint segments.

Each turn runs a batch of randomised searches, keeps the best-scoring segment
and removes the Gaussians it explains, until at most N0 remain.

    python demos/line_fitting.py
"""

import logging

import numpy as np

from splatcurves import ExtractConfig, SphericalGaussianSet, line_fitting

logging.basicConfig(level=logging.DEBUG, format="%(message)s")
logging.getLogger("numba").setLevel(logging.WARNING)

segments = [((0.1, 0.1, 0.1), (0.5, 0.1, 0.1)),
            ((0.2, 0.5, 0.3), (0.2, 0.9, 0.3)),
            ((0.6, 0.6, 0.2), (0.9, 0.8, 0.8))]
pts = []
for a, b in segments:
    a, b = np.array(a), np.array(b)
    n = int(np.ceil(np.linalg.norm(b - a) / 0.005)) + 1
    pts.append(a + np.linspace(0, 1, n)[:, None] * (b - a))
pts = np.concatenate(pts)
g = SphericalGaussianSet(pts, np.ones(len(pts)), np.ones(len(pts)))

lines, rest = line_fitting(g, ExtractConfig())
print(f"\n{len(g)} Gaussians -> {len(lines)} segments, {len(rest)} left over")
for p, q in lines.endpoints:
    print(f"  ({p[0]:.3f}, {p[1]:.3f}, {p[2]:.3f}) -> ({q[0]:.3f}, {q[1]:.3f}, {q[2]:.3f})")
