"""Stochastic image augmentation with weak and strong policies.

Images are channels-first float arrays in [0, 1]. Every op preserves the
image dimensions and the pixel range, and the whole pipeline is
deterministic given (image, policy, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class AugmentationPolicy:
    kind: str
    p_hflip: float = 0.0
    p_vflip: float = 0.0
    p_blur: float = 0.0
    blur_sigma: tuple[float, float] = (0.3, 0.8)
    p_jitter: float = 0.0
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.3
    p_affine: float = 0.0
    degrees: float = 15.0
    translate: float = 0.1
    scale_range: tuple[float, float] = (0.9, 1.1)
    p_crop: float = 0.0
    crop_scale: tuple[float, float] = (0.7, 1.0)
    p_erase: float = 0.0
    erase_scale: tuple[float, float] = (0.02, 0.1)


def weak_policy() -> AugmentationPolicy:
    """Horizontal/vertical flips and Gaussian blur."""
    return AugmentationPolicy(kind="weak", p_hflip=0.5, p_vflip=0.5, p_blur=0.5)


def strong_policy() -> AugmentationPolicy:
    """Weak ops plus color jitter, affine transform, random resized crop,
    and random erasing."""
    return AugmentationPolicy(
        kind="strong",
        p_hflip=0.5,
        p_vflip=0.5,
        p_blur=0.5,
        p_jitter=0.8,
        p_affine=0.5,
        p_crop=0.5,
        p_erase=0.25,
    )


def _gaussian_taps(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (xs / sigma) ** 2)
    return taps / taps.sum()


def _affine_inverse(h, w, angle_deg, translate_frac, scale) -> np.ndarray:
    theta = math.radians(angle_deg)
    t_r = translate_frac[0] * h
    t_c = translate_frac[1] * w
    ctr_r, ctr_c = (h - 1) / 2.0, (w - 1) / 2.0
    cos, sin = math.cos(theta), math.sin(theta)
    fwd = np.array(
        [
            [scale * cos, -scale * sin, ctr_r + t_r - scale * (cos * ctr_r - sin * ctr_c)],
            [scale * sin, scale * cos, ctr_c + t_c - scale * (sin * ctr_r + cos * ctr_c)],
            [0.0, 0.0, 1.0],
        ]
    )
    return np.linalg.inv(fwd)[:2]


def augment(image: np.ndarray, policy: AugmentationPolicy, seed) -> np.ndarray:
    """Apply the policy's ops in a fixed order; each op fires with its own
    probability and draws its parameters only when applied."""
    rng = np.random.default_rng(seed)
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3:
        raise ValueError(f"expected (C, H, W) image, got shape {img.shape}")
    _, h, w = img.shape

    if policy.p_hflip > 0 and rng.random() < policy.p_hflip:
        img = img[:, :, ::-1].copy()
    if policy.p_vflip > 0 and rng.random() < policy.p_vflip:
        img = img[:, ::-1, :].copy()
    if policy.p_blur > 0 and rng.random() < policy.p_blur:
        sigma = rng.uniform(*policy.blur_sigma)
        taps = _gaussian_taps(sigma)
        img = kernels.blur_separable(img.astype(np.float64), taps).astype(np.float32)
    if policy.p_jitter > 0 and rng.random() < policy.p_jitter:
        fb = 1.0 + policy.brightness * rng.uniform(-1, 1)
        fc = 1.0 + policy.contrast * rng.uniform(-1, 1)
        fs = 1.0 + policy.saturation * rng.uniform(-1, 1)
        img = np.clip(img * fb, 0.0, 1.0)
        mean = img.mean()
        img = np.clip((img - mean) * fc + mean, 0.0, 1.0)
        gray = img.mean(axis=0, keepdims=True)
        img = np.clip(img * fs + gray * (1.0 - fs), 0.0, 1.0)
    if policy.p_affine > 0 and rng.random() < policy.p_affine:
        angle = rng.uniform(-policy.degrees, policy.degrees)
        translate = rng.uniform(-policy.translate, policy.translate, size=2)
        scale = rng.uniform(*policy.scale_range)
        inv = _affine_inverse(h, w, angle, translate, scale)
        img = kernels.warp_affine(img.astype(np.float64), inv, 0.0).astype(np.float32)
    if policy.p_crop > 0 and rng.random() < policy.p_crop:
        area = rng.uniform(*policy.crop_scale)
        aspect = math.exp(rng.uniform(math.log(3 / 4), math.log(4 / 3)))
        ch = min(h, max(2, int(round(math.sqrt(area * h * w / aspect)))))
        cw = min(w, max(2, int(round(math.sqrt(area * h * w * aspect)))))
        top = rng.integers(0, h - ch + 1)
        left = rng.integers(0, w - cw + 1)
        sr, sc = ch / h, cw / w
        inv = np.array(
            [[sr, 0.0, top + 0.5 * sr - 0.5], [0.0, sc, left + 0.5 * sc - 0.5]]
        )
        img = kernels.warp_affine(img.astype(np.float64), inv, 0.0).astype(np.float32)
    if policy.p_erase > 0 and rng.random() < policy.p_erase:
        area = rng.uniform(*policy.erase_scale) * h * w
        aspect = math.exp(rng.uniform(math.log(0.3), math.log(1 / 0.3)))
        eh = min(h, max(1, int(round(math.sqrt(area / aspect)))))
        ew = min(w, max(1, int(round(math.sqrt(area * aspect)))))
        top = rng.integers(0, h - eh + 1)
        left = rng.integers(0, w - ew + 1)
        img = img.copy()
        img[:, top : top + eh, left : left + ew] = rng.random(
            (img.shape[0], eh, ew), dtype=np.float32
        )

    return np.clip(img, 0.0, 1.0)


def augment_batch(images: np.ndarray, policy: AugmentationPolicy, seeds) -> np.ndarray:
    """Augment a batch with one seed per sample."""
    return np.stack([augment(images[i], policy, seeds[i]) for i in range(images.shape[0])])
