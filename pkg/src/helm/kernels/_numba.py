"""Numba-jitted twins of the kernels in _numpy.py."""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _reflect(i, n):
    if n == 1:
        return 0
    period = 2 * n - 2
    i = i % period
    if i < 0:
        i += period
    if i >= n:
        i = period - i
    return i


@njit(cache=True)
def blur_separable(img, taps):
    c, h, w = img.shape
    k = taps.shape[0] // 2
    idx_h = np.empty(h + 2 * k, dtype=np.int64)
    for i in range(h + 2 * k):
        idx_h[i] = _reflect(i - k, h)
    idx_w = np.empty(w + 2 * k, dtype=np.int64)
    for j in range(w + 2 * k):
        idx_w[j] = _reflect(j - k, w)
    tmp = np.zeros_like(img)
    for ch in range(c):
        for i in range(h):
            for t in range(taps.shape[0]):
                row = idx_h[i + t]
                wt = taps[t]
                for j in range(w):
                    tmp[ch, i, j] += wt * img[ch, row, j]
    out = np.zeros_like(img)
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for t in range(taps.shape[0]):
                    acc += taps[t] * tmp[ch, i, idx_w[j + t]]
                out[ch, i, j] = acc
    return out


@njit(cache=True)
def warp_affine(img, inv, fill=0.0):
    c, h, w = img.shape
    out = np.empty_like(img)
    for i in range(h):
        for j in range(w):
            src_r = inv[0, 0] * i + inv[0, 1] * j + inv[0, 2]
            src_c = inv[1, 0] * i + inv[1, 1] * j + inv[1, 2]
            r0 = int(np.floor(src_r))
            c0 = int(np.floor(src_c))
            fr = src_r - r0
            fc = src_c - c0
            for ch in range(c):
                acc = 0.0
                for dr in range(2):
                    for dc in range(2):
                        rr = r0 + dr
                        cc = c0 + dc
                        weight = (fr if dr else 1.0 - fr) * (fc if dc else 1.0 - fc)
                        if 0 <= rr < h and 0 <= cc < w:
                            acc += weight * img[ch, rr, cc]
                        else:
                            acc += weight * fill
                out[ch, i, j] = acc
    return out


@njit(cache=True)
def misordered_fraction(scores, targets):
    n, m = scores.shape
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        n_pos = 0
        n_neg = 0
        for j in range(m):
            if targets[i, j] == 1:
                n_pos += 1
            else:
                n_neg += 1
        if n_pos == 0 or n_neg == 0:
            continue
        bad = 0
        for p in range(m):
            if targets[i, p] != 1:
                continue
            for q in range(m):
                if targets[i, q] == 1:
                    continue
                if scores[i, p] <= scores[i, q]:
                    bad += 1
        out[i] = bad / (n_pos * n_neg)
    return out


@njit(cache=True, parallel=True)
def kmeans_assign(points, centroids):
    n, d = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    for i in prange(n):
        best = -1
        best_d = np.inf
        for c in range(k):
            dist = 0.0
            for j in range(d):
                diff = points[i, j] - centroids[c, j]
                dist += diff * diff
            if dist < best_d:
                best_d = dist
                best = c
        labels[i] = best
    return labels
