"""Naive reference implementations used as independent oracles.

Everything in this module is deliberately written with explicit Python loops
and no shared code with the fast kernels, so that agreement between the two
is meaningful evidence of correctness. These run on desk-scale inputs only.
"""

import numpy as np


def conv2d_direct(x, w, b, stride, pad):
    """Direct convolution: plain nested loops over every output element.

    x: (B, C, H, W), w: (OC, C, KH, KW), b: (OC,) or None.
    Cross-correlation semantics (no kernel flip), zero padding.
    """
    bs, c, h, wd = x.shape
    oc, c2, kh, kw = w.shape
    assert c == c2
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((bs, oc, oh, ow), dtype=np.float64)
    for n in range(bs):
        for f in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                ii = i * stride + u - pad
                                jj = j * stride + v - pad
                                if 0 <= ii < h and 0 <= jj < wd:
                                    acc += float(x[n, ci, ii, jj]) * float(w[f, ci, u, v])
                    out[n, f, i, j] = acc + (float(b[f]) if b is not None else 0.0)
    return out


def maxpool_direct(x, window, stride):
    """Per-window scan: max value and first-encountered argmax per window."""
    bs, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    out = np.zeros((bs, c, oh, ow), dtype=x.dtype)
    arg = np.zeros((bs, c, oh, ow), dtype=np.int64)
    for n in range(bs):
        for ci in range(c):
            for i in range(oh):
                for j in range(ow):
                    best = None
                    best_idx = -1
                    for u in range(window):
                        for v in range(window):
                            ii = i * stride + u
                            jj = j * stride + v
                            val = x[n, ci, ii, jj]
                            if best is None or val > best:
                                best = val
                                best_idx = ((n * c + ci) * h + ii) * w + jj
                    out[n, ci, i, j] = best
                    arg[n, ci, i, j] = best_idx
    return out, arg


def pairwise_distances_direct(a, b):
    """Euclidean distance between every row of `a` and every row of `b`."""
    out = np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            acc = 0.0
            for k in range(a.shape[1]):
                d = float(a[i, k]) - float(b[j, k])
                acc += d * d
            out[i, j] = acc ** 0.5
    return out


def k_smallest_mask_direct(m, k):
    """Full sort per column; ties broken toward the lowest row index."""
    rows, cols = m.shape
    mask = np.zeros((rows, cols), dtype=bool)
    for j in range(cols):
        order = sorted(range(rows), key=lambda i: (m[i, j], i))
        for i in order[:k]:
            mask[i, j] = True
    return mask


def central_difference(f, x, h=1e-3):
    """Central finite-difference gradient of scalar f at x (elementwise)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return grad


def relative_error(analytic, numeric):
    """Scaled elementwise error: absolute below magnitude 1, relative above."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / scale
