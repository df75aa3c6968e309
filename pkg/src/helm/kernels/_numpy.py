"""Pure-numpy kernel implementations (fallback backend).

Must stay numerically interchangeable with the numba twins in _numba.py;
the per-pixel / per-pair arithmetic is written the same way in both.
"""

from __future__ import annotations

import numpy as np


def _fold_reflect(idx: np.ndarray, n: int) -> np.ndarray:
    """Mirror indices into [0, n) without repeating the edge sample."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def blur_separable(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable convolution of a (C, H, W) image with reflect padding."""
    c, h, w = img.shape
    k = taps.shape[0] // 2
    out = img
    idx_h = _fold_reflect(np.arange(-k, h + k), h)
    padded = out[:, idx_h, :]
    tmp = np.zeros_like(img)
    for t in range(taps.shape[0]):
        tmp = tmp + taps[t] * padded[:, t : t + h, :]
    idx_w = _fold_reflect(np.arange(-k, w + k), w)
    padded = tmp[:, :, idx_w]
    out = np.zeros_like(img)
    for t in range(taps.shape[0]):
        out = out + taps[t] * padded[:, :, t : t + w]
    return out


def warp_affine(img: np.ndarray, inv: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Inverse-map bilinear warp of a (C, H, W) image.

    inv maps output (row, col) to source coordinates:
        src_r = inv[0,0]*r + inv[0,1]*c + inv[0,2]
        src_c = inv[1,0]*r + inv[1,1]*c + inv[1,2]
    Out-of-bounds samples take the fill value.
    """
    c, h, w = img.shape
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    src_r = inv[0, 0] * rows + inv[0, 1] * cols + inv[0, 2]
    src_c = inv[1, 0] * rows + inv[1, 1] * cols + inv[1, 2]

    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0

    out = np.empty_like(img)
    for (dr, dc, weight) in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        rcl = np.clip(rr, 0, h - 1)
        ccl = np.clip(cc, 0, w - 1)
        sample = img[:, rcl, ccl]
        sample = np.where(valid[None, :, :], sample, fill)
        if dr == 0 and dc == 0:
            acc = weight[None, :, :] * sample
        else:
            acc = acc + weight[None, :, :] * sample
    out[:] = acc.astype(img.dtype)
    return out


def misordered_fraction(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-sample fraction of (positive, negative) label pairs scored in the
    wrong order (positive <= negative). Samples with no positives or no
    negatives yield 0."""
    n = scores.shape[0]
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        pos = scores[i, targets[i] == 1]
        neg = scores[i, targets[i] == 0]
        if pos.size == 0 or neg.size == 0:
            continue
        bad = (pos[:, None] <= neg[None, :]).sum()
        out[i] = bad / (pos.size * neg.size)
    return out


def kmeans_assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels (ties resolve to the lowest centroid index)."""
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1).astype(np.int64)
