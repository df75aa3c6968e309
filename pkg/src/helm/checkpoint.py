"""Flat binary parameter checkpoints.

Layout: one line of JSON (name -> shape/dtype/byte offset), a newline,
then the raw little-endian parameter values back to back.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np


def save_params(state: dict[str, np.ndarray], path: str):
    """Write a checkpoint atomically (temp file + rename)."""
    header = {}
    offset = 0
    blobs = []
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        header[name] = {
            "shape": list(arr.shape),
            "dtype": le.dtype.str,
            "offset": offset,
        }
        raw = le.tobytes()
        blobs.append(raw)
        offset += len(raw)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(json.dumps(header).encode("utf-8"))
            f.write(b"\n")
            for raw in blobs:
                f.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_params(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        header_line = f.readline()
        header = json.loads(header_line.decode("utf-8"))
        data = f.read()
    state = {}
    for name, meta in header.items():
        dtype = np.dtype(meta["dtype"])
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=start)
        state[name] = arr.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
    return state
