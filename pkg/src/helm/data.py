"""Synthetic hierarchical imagery, manifest loading, and split planning.

Synthetic samples draw a few leaf labels, render one visual motif per leaf
(a colored block at a leaf-specific grid cell with a leaf-specific stripe
texture), and close the label set upward. Sibling leaves share a color
family so the taxonomy carries learnable signal.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .hierarchy import LabelHierarchy, ancestor_closure, parse_hierarchy, serialize_hierarchy

log = logging.getLogger(__name__)


def rng_stream(seed: int, *tags) -> np.random.Generator:
    """Independent deterministic stream per (seed, purpose) without any
    ordering coupling between purposes."""
    entropy = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(zlib.crc32(tag.encode("utf-8")))
        else:
            entropy.append(int(tag) & 0xFFFFFFFF)
    return np.random.default_rng(entropy)


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb)


@dataclass
class SyntheticSpec:
    hierarchy: LabelHierarchy
    image_size: int = 32
    channels: int = 3
    leaves_per_sample: tuple[int, int] = (1, 3)
    noise_std: float = 0.05
    motifs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lo, hi = self.leaves_per_sample
        n_leaves = len(self.hierarchy.leaf_ids)
        if not 1 <= lo <= hi <= n_leaves:
            raise ValueError("leaves_per_sample range must fit inside the leaf set")
        if not self.motifs:
            self.motifs = self._build_motifs()
        if len({m["cell"] for m in self.motifs.values()}) != n_leaves:
            raise ValueError("motif cells are not distinct per leaf")

    def _build_motifs(self) -> dict:
        """One motif per leaf: a distinct grid cell, a color in its level-1
        family's hue band, and a leaf-specific stripe frequency/orientation."""
        h = self.hierarchy
        n_level1 = h.level_sizes[0]
        grid = math.ceil(math.sqrt(len(h.leaf_ids)))
        motifs = {}
        for k, leaf in enumerate(h.leaf_ids):
            chain = h.ancestors_of(leaf)
            root = chain[-1] if chain else leaf
            parent = chain[0] if chain else leaf
            hue = (root / n_level1 + 0.13 * ((parent * 0.61803) % 1.0) / n_level1) % 1.0
            color = _hsv_to_rgb(hue, 0.9, 0.55 + 0.45 * ((leaf * 0.37) % 1.0))
            motifs[leaf] = {
                "cell": (k // grid, k % grid),
                "grid": grid,
                "color": color,
                "freq": 1.5 + 1.0 * (k % 4),
                "angle": (k % 2) * (math.pi / 2),
            }
        return motifs

    def render(self, leaf_ids, rng) -> np.ndarray:
        s = self.image_size
        img = np.full((self.channels, s, s), 0.2, dtype=np.float32)
        yy, xx = np.mgrid[0:s, 0:s].astype(np.float32) / s
        for leaf in leaf_ids:
            m = self.motifs[leaf]
            cell_r, cell_c = m["cell"]
            grid = m["grid"]
            r0, r1 = int(cell_r * s / grid), int((cell_r + 1) * s / grid)
            c0, c1 = int(cell_c * s / grid), int((cell_c + 1) * s / grid)
            phase = xx * math.cos(m["angle"]) + yy * math.sin(m["angle"])
            stripes = 0.75 + 0.25 * np.sin(2 * math.pi * m["freq"] * grid * phase)
            block = m["color"][: self.channels, None, None] * stripes[None, r0:r1, c0:c1]
            img[:, r0:r1, c0:c1] = block.astype(np.float32)
        if self.noise_std > 0:
            img = img + rng.normal(0.0, self.noise_std, img.shape).astype(np.float32)
        return np.clip(img, 0.0, 1.0)


@dataclass
class Dataset:
    """Images as (N, C, H, W) float32 in [0, 1] with (N, M) closed label rows."""

    images: np.ndarray
    labels: np.ndarray
    hierarchy: LabelHierarchy

    def __len__(self) -> int:
        return self.images.shape[0]

    def leaf_labels(self) -> np.ndarray:
        return self.labels[:, list(self.hierarchy.leaf_ids)]


def generate_synthetic(spec: SyntheticSpec, n: int, seed: int) -> Dataset:
    """n samples, each with k ~ U{leaves_per_sample} distinct leaves; labels
    are ancestor-closed; per-sample determinism comes from (seed, index)."""
    if n < 1:
        raise ValueError("need at least one sample")
    h = spec.hierarchy
    lo, hi = spec.leaves_per_sample
    leaf_arr = np.array(h.leaf_ids)
    images = np.empty((n, spec.channels, spec.image_size, spec.image_size), dtype=np.float32)
    labels = np.zeros((n, h.num_labels), dtype=np.uint8)
    for i in range(n):
        rng = rng_stream(seed, "sample", i)
        k = int(rng.integers(lo, hi + 1))
        leaves = rng.choice(leaf_arr, size=k, replace=False)
        images[i] = spec.render(leaves, rng)
        labels[i] = ancestor_closure({h.labels[j] for j in leaves}, h).bits
    return Dataset(images, labels, h)


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint labeled/unlabeled index sets over a training pool. The test
    set lives in a separate dataset so it stays fixed across ratios."""

    labeled_ids: tuple[int, ...]
    unlabeled_ids: tuple[int, ...]
    ratio: float
    seed: int
    test_ids: tuple[int, ...] = ()

    def __post_init__(self):
        overlap = set(self.labeled_ids) & set(self.unlabeled_ids)
        if overlap:
            raise ValueError(f"labeled/unlabeled overlap: {sorted(overlap)[:5]}")


def make_split(n_train: int, ratio: float, seed: int) -> SplitPlan:
    """floor(ratio * n) labeled (minimum 1), remainder unlabeled; uniform
    without replacement."""
    if n_train < 1:
        raise ValueError("empty training pool")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    n_labeled = max(1, int(math.floor(ratio * n_train)))
    perm = rng_stream(seed, "split").permutation(n_train)
    return SplitPlan(
        labeled_ids=tuple(sorted(int(i) for i in perm[:n_labeled])),
        unlabeled_ids=tuple(sorted(int(i) for i in perm[n_labeled:])),
        ratio=ratio,
        seed=seed,
    )


def save_dataset(ds: Dataset, out_dir: str, meta: dict | None = None):
    """Directory layout: images/NNNNNN.npy per sample, manifest.csv with
    (image_path, leaf_labels), hierarchy.yaml, meta.json."""
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    h = ds.hierarchy
    leaf_list = list(h.leaf_ids)
    rows = []
    for i in range(len(ds)):
        rel = os.path.join("images", f"{i:06d}.npy")
        np.save(os.path.join(out_dir, rel), ds.images[i])
        active = [h.labels[leaf_list[j]] for j in np.flatnonzero(ds.labels[i, leaf_list])]
        rows.append((rel, ";".join(active)))
    tmp = os.path.join(out_dir, "manifest.csv.tmp")
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_path", "leaf_labels"])
        writer.writerows(rows)
    os.replace(tmp, os.path.join(out_dir, "manifest.csv"))
    with open(os.path.join(out_dir, "hierarchy.yaml"), "w") as f:
        f.write(serialize_hierarchy(h))
    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump({"n": len(ds), "image_shape": list(ds.images.shape[1:]),
                   **(meta or {})}, f, indent=2)


def load_manifest(manifest_path: str, hierarchy: LabelHierarchy | None = None) -> Dataset:
    """Load (image_path, leaf_labels) rows; labels resolve through ancestor
    closure at load time. Image paths are relative to the manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    if hierarchy is None:
        hier_path = os.path.join(base, "hierarchy.yaml")
        if not os.path.exists(hier_path):
            raise FileNotFoundError(f"no hierarchy given and {hier_path} not found")
        with open(hier_path) as f:
            hierarchy = parse_hierarchy(f.read())

    images, labels = [], []
    with open(manifest_path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or {"image_path", "leaf_labels"} - set(reader.fieldnames):
            raise ValueError("manifest must have image_path and leaf_labels columns")
        for lineno, row in enumerate(reader, start=2):
            path = (row["image_path"] or "").strip()
            raw = (row["leaf_labels"] or "").strip()
            if not path:
                raise ValueError(f"manifest line {lineno}: missing image path")
            if not raw:
                raise ValueError(f"manifest line {lineno}: no leaf labels")
            names = [s.strip() for s in raw.split(";") if s.strip()]
            if len(names) != len(set(names)):
                log.warning("manifest line %d: duplicate leaf labels deduplicated", lineno)
            vec = ancestor_closure(set(names), hierarchy)
            img = np.load(os.path.join(base, path))
            images.append(np.asarray(img, dtype=np.float32))
            labels.append(vec.bits)
    if not images:
        raise ValueError("manifest has no data rows")
    return Dataset(np.stack(images), np.stack(labels), hierarchy)


def load_dataset(path: str, hierarchy: LabelHierarchy | None = None) -> Dataset:
    """Accept either a dataset directory (with manifest.csv) or a manifest file."""
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.csv")
    return load_manifest(path, hierarchy)
