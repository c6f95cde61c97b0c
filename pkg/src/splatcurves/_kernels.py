"""Compiled inner loops (numba). Single-threaded so results are bit-reproducible."""

import numba
import numpy as np

ALPHA_MAX = 0.99
T_MIN = 1e-4


@numba.njit(cache=True)
def segment_distance_field(p0, p1, valid, radius, height, width):
    """Per-pixel distance to the nearest 2D segment, capped at ``radius``."""
    out = np.full((height, width), radius)
    for k in range(p0.shape[0]):
        if not valid[k]:
            continue
        ax, ay = p0[k, 0], p0[k, 1]
        bx, by = p1[k, 0], p1[k, 1]
        x0 = max(int(np.floor(min(ax, bx) - radius)), 0)
        x1 = min(int(np.ceil(max(ax, bx) + radius)), width - 1)
        y0 = max(int(np.floor(min(ay, by) - radius)), 0)
        y1 = min(int(np.ceil(max(ay, by) + radius)), height - 1)
        dx, dy = bx - ax, by - ay
        ll = dx * dx + dy * dy
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                if ll > 0:
                    t = ((x - ax) * dx + (y - ay) * dy) / ll
                    t = min(max(t, 0.0), 1.0)
                else:
                    t = 0.0
                ex = x - (ax + t * dx)
                ey = y - (ay + t * dy)
                d = np.sqrt(ex * ex + ey * ey)
                if d < out[y, x]:
                    out[y, x] = d
    return out


@numba.njit(cache=True)
def composite_forward(order, rects, means, conics, opac, color, height, width):
    """Front-to-back alpha compositing over splats visited in ``order``.

    Returns the image, the final transmittance and, per pixel, the rank (position
    in ``order``) of the last splat that contributed, or -1.
    """
    img = np.zeros((height, width))
    trans = np.ones((height, width))
    last = np.full((height, width), -1, dtype=np.int64)
    for rank in range(order.shape[0]):
        i = order[rank]
        mx, my = means[i, 0], means[i, 1]
        a, b, c = conics[i, 0], conics[i, 1], conics[i, 2]
        o, col = opac[i], color[i]
        for y in range(rects[i, 2], rects[i, 3]):
            for x in range(rects[i, 0], rects[i, 1]):
                t = trans[y, x]
                if t < T_MIN:
                    continue
                dx = x - mx
                dy = y - my
                power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                alpha = min(o * np.exp(power), ALPHA_MAX)
                img[y, x] += col * alpha * t
                trans[y, x] = t * (1.0 - alpha)
                last[y, x] = rank
    return img, trans, last


@numba.njit(cache=True)
def composite_backward(order, rects, means, conics, opac, color, trans_final, last, dl_dimg):
    """Reverse traversal of :func:`composite_forward` accumulating gradients.

    Returns d/dmean (N, 2), d/dconic (N, 3) for (a, b, c) in
    ``power = -(a dx^2 + c dy^2)/2 - b dx dy``, d/dopacity and d/dcolor.
    """
    n = means.shape[0]
    height, width = trans_final.shape
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_opac = np.zeros(n)
    g_color = np.zeros(n)
    trans = trans_final.copy()
    suffix = np.zeros((height, width))
    for rank in range(order.shape[0] - 1, -1, -1):
        i = order[rank]
        mx, my = means[i, 0], means[i, 1]
        a, b, c = conics[i, 0], conics[i, 1], conics[i, 2]
        o, col = opac[i], color[i]
        for y in range(rects[i, 2], rects[i, 3]):
            for x in range(rects[i, 0], rects[i, 1]):
                if rank > last[y, x]:
                    continue
                dx = x - mx
                dy = y - my
                power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                gauss = np.exp(power)
                raw = o * gauss
                alpha = min(raw, ALPHA_MAX)
                t_i = trans[y, x] / (1.0 - alpha)
                g = dl_dimg[y, x]
                g_color[i] += g * alpha * t_i
                dalpha = g * (col * t_i - suffix[y, x] / (1.0 - alpha))
                suffix[y, x] += col * alpha * t_i
                trans[y, x] = t_i
                if raw >= ALPHA_MAX:
                    continue
                g_opac[i] += dalpha * gauss
                dpow = dalpha * o * gauss
                g_mean[i, 0] += dpow * (a * dx + b * dy)
                g_mean[i, 1] += dpow * (b * dx + c * dy)
                g_conic[i, 0] += dpow * (-0.5 * dx * dx)
                g_conic[i, 1] += dpow * (-dx * dy)
                g_conic[i, 2] += dpow * (-0.5 * dy * dy)
    return g_mean, g_conic, g_opac, g_color


@numba.njit(cache=True, nogil=True)
def fit_segment(p, q, target, t, noise, gamma, lr, iters):
    """Adam on the endpoints of a dilated segment against a fixed point set.

    Minimises ``gamma * mean_s min_y |s-y|^2 + mean_y min_s |s-y|^2`` with
    brute-force nearest neighbours (ties go to the lowest index).
    """
    ns = t.shape[0]
    nt = target.shape[0]
    x = np.empty((2, 3))
    x[0] = p
    x[1] = q
    m = np.zeros((2, 3))
    v = np.zeros((2, 3))
    pts = np.empty((ns, 3))
    g = np.empty((ns, 3))
    b1, b2 = 0.9, 0.999
    for it in range(1, iters + 1):
        for i in range(ns):
            for d in range(3):
                pts[i, d] = x[0, d] + t[i] * (x[1, d] - x[0, d]) + noise[i, d]
                g[i, d] = 0.0
        # samples -> target
        for i in range(ns):
            best = np.inf
            bj = 0
            for j in range(nt):
                dd = 0.0
                for d in range(3):
                    diff = pts[i, d] - target[j, d]
                    dd += diff * diff
                if dd < best:
                    best = dd
                    bj = j
            for d in range(3):
                g[i, d] += 2.0 * gamma / ns * (pts[i, d] - target[bj, d])
        # target -> samples
        for j in range(nt):
            best = np.inf
            bi = 0
            for i in range(ns):
                dd = 0.0
                for d in range(3):
                    diff = pts[i, d] - target[j, d]
                    dd += diff * diff
                if dd < best:
                    best = dd
                    bi = i
            for d in range(3):
                g[bi, d] += 2.0 / nt * (pts[bi, d] - target[j, d])
        corr1 = 1.0 - b1**it
        corr2 = 1.0 - b2**it
        for d in range(3):
            gp = 0.0
            gq = 0.0
            for i in range(ns):
                gp += (1.0 - t[i]) * g[i, d]
                gq += t[i] * g[i, d]
            for k in range(2):
                gk = gp if k == 0 else gq
                m[k, d] = b1 * m[k, d] + (1 - b1) * gk
                v[k, d] = b2 * v[k, d] + (1 - b2) * gk * gk
                x[k, d] -= lr * (m[k, d] / corr1) / (np.sqrt(v[k, d] / corr2) + 1e-15)
    return x[0].copy(), x[1].copy()
