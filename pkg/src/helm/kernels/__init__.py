"""Hot numeric kernels with two interchangeable backends.

HELM_KERNELS selects the backend: "numba" (jitted, the default when numba
imports cleanly), "numpy" (pure-numpy fallback), or "auto". HELM_THREADS
caps numba's parallel workers. benchmarks/bench_kernels.py compares the two.
"""

from __future__ import annotations

import os
import warnings

# threading-layer probing is noisy on some TBB builds; the layer falls back
warnings.filterwarnings("ignore", message=".*TBB.*")


def _resolve():
    choice = os.environ.get("HELM_KERNELS", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"HELM_KERNELS must be auto, numba, or numpy (got {choice!r})")
    if choice in ("auto", "numba"):
        try:
            import numba

            threads = os.environ.get("HELM_THREADS")
            if threads:
                numba.set_num_threads(
                    max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
                )
            from . import _numba as impl

            return impl, "numba"
        except ImportError:
            if choice == "numba":
                raise
    from . import _numpy as impl

    return impl, "numpy"


_impl, ACTIVE_BACKEND = _resolve()

blur_separable = _impl.blur_separable
warp_affine = _impl.warp_affine
misordered_fraction = _impl.misordered_fraction
kmeans_assign = _impl.kmeans_assign
