"""Vision transformer encoder with one learnable CLS token per hierarchy label.

The M label tokens are prepended to the patch tokens and evolve through
self-attention alongside them; the output is split back into per-label
embeddings and patch embeddings with their pooled means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import NumericsError, Tensor
from .params import ParameterStore


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int
    patch_size: int
    embed_dim: int
    depth: int
    heads: int
    num_labels: int
    channels: int = 3
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError("image_size must be divisible by patch_size")
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if self.num_labels < 1:
            raise ValueError("need at least one label token")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size**2


@dataclass
class ForwardBundle:
    """Per-batch encoder outputs.

    cls_embeddings: (B, M, d) label-token embeddings
    pooled_cls: (B, d) mean over the M label tokens
    patch_embeddings: (B, N_p, d)
    pooled_patches: (B, d) mean over patch tokens
    """

    cls_embeddings: Tensor
    pooled_cls: Tensor
    patch_embeddings: Tensor
    pooled_patches: Tensor


def _trunc_normal(rng, shape, std=0.02):
    return np.clip(rng.normal(0.0, std, size=shape), -2 * std, 2 * std)


def init_encoder(cfg: EncoderConfig, rng, store: ParameterStore, prefix="encoder."):
    """Truncated-normal projections and tokens, zero biases, unit LN gains."""
    d = cfg.embed_dim
    store.add(prefix + "patch_proj.w", _trunc_normal(rng, (cfg.patch_dim, d)))
    store.add(prefix + "patch_proj.b", np.zeros(d))
    store.add(prefix + "pos_embed", _trunc_normal(rng, (cfg.n_patches, d)))
    store.add(prefix + "cls_tokens", _trunc_normal(rng, (cfg.num_labels, d)))
    hidden = int(d * cfg.mlp_ratio)
    for i in range(cfg.depth):
        b = f"{prefix}block{i}."
        store.add(b + "ln1.g", np.ones(d))
        store.add(b + "ln1.b", np.zeros(d))
        for name in ("wq", "wk", "wv", "wo"):
            store.add(b + f"attn.{name}", _trunc_normal(rng, (d, d)))
        for name in ("bq", "bk", "bv", "bo"):
            store.add(b + f"attn.{name}", np.zeros(d))
        store.add(b + "ln2.g", np.ones(d))
        store.add(b + "ln2.b", np.zeros(d))
        store.add(b + "mlp.w1", _trunc_normal(rng, (d, hidden)))
        store.add(b + "mlp.b1", np.zeros(hidden))
        store.add(b + "mlp.w2", _trunc_normal(rng, (hidden, d)))
        store.add(b + "mlp.b2", np.zeros(d))
    store.add(prefix + "ln_f.g", np.ones(d))
    store.add(prefix + "ln_f.b", np.zeros(d))


def extract_patches(images: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """(B, C, H, W) -> (B, N_p, C*ps*ps), row-major over the patch grid."""
    b, c, h, w = images.shape
    if c != cfg.channels or h != cfg.image_size or w != cfg.image_size:
        raise ValueError(
            f"image shape {images.shape[1:]} does not match config "
            f"({cfg.channels}, {cfg.image_size}, {cfg.image_size})"
        )
    ps = cfg.patch_size
    g = h // ps
    patches = images.reshape(b, c, g, ps, g, ps)
    patches = patches.transpose(0, 2, 4, 1, 3, 5)
    return patches.reshape(b, g * g, c * ps * ps)


def patchify(images, cfg: EncoderConfig, store: ParameterStore, prefix="encoder."):
    """Project flattened patches and add positional embeddings.

    Accepts a single (C, H, W) image or a (B, C, H, W) batch and preserves
    the rank of the input.
    """
    arr = images.data if isinstance(images, Tensor) else np.asarray(images)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    flat = Tensor(extract_patches(arr, cfg))
    tokens = ad.matmul(flat, store[prefix + "patch_proj.w"]) + store[prefix + "patch_proj.b"]
    tokens = tokens + store[prefix + "pos_embed"]
    return tokens[0] if single else tokens


def attention_block(x: Tensor, store: ParameterStore, prefix: str, cfg: EncoderConfig,
                    return_attn: bool = False):
    """Pre-norm block: LN -> multi-head self-attention -> residual -> LN -> MLP -> residual."""
    b, n, d = x.shape
    dh = d // cfg.heads

    h = ad.layer_norm(x, store[prefix + "ln1.g"], store[prefix + "ln1.b"])
    q = ad.matmul(h, store[prefix + "attn.wq"]) + store[prefix + "attn.bq"]
    k = ad.matmul(h, store[prefix + "attn.wk"]) + store[prefix + "attn.bk"]
    v = ad.matmul(h, store[prefix + "attn.wv"]) + store[prefix + "attn.bv"]
    q = ad.transpose(ad.reshape(q, (b, n, cfg.heads, dh)), (0, 2, 1, 3))
    k = ad.transpose(ad.reshape(k, (b, n, cfg.heads, dh)), (0, 2, 1, 3))
    v = ad.transpose(ad.reshape(v, (b, n, cfg.heads, dh)), (0, 2, 1, 3))
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.matmul(attn, v)
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, n, d))
    ctx = ad.matmul(ctx, store[prefix + "attn.wo"]) + store[prefix + "attn.bo"]
    x = x + ctx

    h2 = ad.layer_norm(x, store[prefix + "ln2.g"], store[prefix + "ln2.b"])
    m = ad.gelu(ad.matmul(h2, store[prefix + "mlp.w1"]) + store[prefix + "mlp.b1"])
    m = ad.matmul(m, store[prefix + "mlp.w2"]) + store[prefix + "mlp.b2"]
    out = x + m
    if return_attn:
        return out, attn.data
    return out


def forward(images, cfg: EncoderConfig, store: ParameterStore, prefix="encoder.") -> ForwardBundle:
    """Full encoder pass over a (B, C, H, W) batch."""
    arr = images.data if isinstance(images, Tensor) else np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    b = arr.shape[0]
    m = cfg.num_labels

    patches = patchify(arr, cfg, store, prefix)
    cls = ad.broadcast_to(store[prefix + "cls_tokens"], (b, m, cfg.embed_dim))
    tokens = ad.concat([cls, patches], axis=1)
    for i in range(cfg.depth):
        tokens = attention_block(tokens, store, f"{prefix}block{i}.", cfg)
    if cfg.depth > 0:
        # depth 0 is the identity encoder: label tokens pass through untouched
        tokens = ad.layer_norm(tokens, store[prefix + "ln_f.g"], store[prefix + "ln_f.b"])
    if not np.isfinite(tokens.data).all():
        raise NumericsError("non-finite activation in encoder output")

    cls_out = tokens[:, :m, :]
    patch_out = tokens[:, m:, :]
    return ForwardBundle(
        cls_embeddings=cls_out,
        pooled_cls=cls_out.mean(axis=1),
        patch_embeddings=patch_out,
        pooled_patches=patch_out.mean(axis=1),
    )
