"""Timing comparison of the numba kernels against their pure-numpy twins.

Run: python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from helm.kernels import _numba, _numpy


def bench(fn, args, repeats):
    fn(*args)  # warmup / JIT
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    img = rng.random((3, 224, 224))
    taps = np.exp(-0.5 * (np.arange(-3, 4) / 1.2) ** 2)
    taps /= taps.sum()
    angle = 0.3
    inv = np.array([[np.cos(angle), -np.sin(angle), 5.0],
                    [np.sin(angle), np.cos(angle), -3.0]])
    scores = rng.random((512, 104))
    targets = (rng.random((512, 104)) < 0.15).astype(np.uint8)
    points = rng.standard_normal((20_000, 32))
    centroids = rng.standard_normal((60, 32))

    cases = [
        ("blur_separable 3x224x224 k7", "blur_separable", (img, taps)),
        ("warp_affine 3x224x224", "warp_affine", (img, inv, 0.0)),
        ("misordered_fraction 512x104", "misordered_fraction", (scores, targets)),
        ("kmeans_assign 20k x 32, k=60", "kmeans_assign", (points, centroids)),
    ]

    print(f"{'kernel':36s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for label, name, inputs in cases:
        t_np = bench(getattr(_numpy, name), inputs, args.repeats)
        t_nb = bench(getattr(_numba, name), inputs, args.repeats)
        print(f"{label:36s} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms "
              f"{t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
