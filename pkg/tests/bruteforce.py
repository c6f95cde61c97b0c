"""O(N^2) reference implementations of the nearest-neighbour based quantities."""

import numpy as np


def nn_sqdist(src: np.ndarray, dst: np.ndarray):
    """Nearest ``dst`` index and squared distance for every ``src`` point, by exhaustive search."""
    d = src[:, None, :] - dst[None, :, :]
    full = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    idx = np.argmin(full, axis=1)
    return idx, full[np.arange(len(src)), idx]


def chamfer(A, B, gamma):
    _, ab = nn_sqdist(A, B)
    _, ba = nn_sqdist(B, A)
    return float(gamma * ab.mean() + ba.mean())


def weighted_chamfer(samples, centers, opacities, gamma):
    i_ab, ab = nn_sqdist(samples, centers)
    _, ba = nn_sqdist(centers, samples)
    return float(gamma / len(samples) * np.sum(opacities[i_ab] * ab) + np.sum(opacities * ba) / len(centers))


def subset(centers, samples, delta1, squared):
    _, d2 = nn_sqdist(centers, samples)
    stat = d2 if squared else np.sqrt(d2)
    return np.flatnonzero(stat < delta1)
