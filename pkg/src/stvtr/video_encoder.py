"""Video encoder: frame-local patch embedding, replicated learnable
positional embeddings, pre-norm transformer blocks with joint space-time
attention, and a unit-norm clip embedding.

Every block attends over all T * (H/p) * (W/p) tokens at once; queries and
keys are rotated by a per-head rotation table before the logits, values
are left unrotated.  Token order everywhere is frame-major, then row-major
within the frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    ParameterSet,
    Tensor,
    gelu,
    l2_normalize,
    layernorm,
    matmul,
    mean,
    repeat_rows,
    reshape,
    rope_rotate,
    softmax_lastdim,
    tile_rows,
    transpose,
)
from .rope import (
    RotationTable,
    build_spatial_rope,
    build_split_3d_rope,
    build_temporal_rope,
    compose_st_rope,
    identity_table,
)

ROPE_MODES = ("st", "spatial", "split3d", "none")


@dataclass(frozen=True)
class EncoderConfig:
    channels: int = 3
    frames: int = 4
    height: int = 32
    width: int = 32
    patch_size: int = 8
    dim: int = 64
    heads: int = 4
    depth: int = 4
    mlp_ratio: int = 4
    out_dim: int = 256
    rope_mode: str = "st"
    temporal_pe: bool = True
    spatial_pe: bool = True
    rope_base: float = 10000.0
    split_fractions: tuple[float, float, float] = (0.375, 0.375, 0.25)
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError(
                f"frame size {self.height}x{self.width} not divisible by patch {self.patch_size}"
            )
        if self.dim % 2:
            raise ValueError("hidden width must be even")
        if self.dim % self.heads:
            raise ValueError("hidden width must divide evenly into heads")
        if self.rope_mode not in ROPE_MODES:
            raise ValueError(f"rope_mode must be one of {ROPE_MODES}")
        if self.rope_mode in ("st", "spatial") and self.head_dim % 4:
            raise ValueError("per-head width must be divisible by 4 for the 2D table")

    @property
    def grid_h(self) -> int:
        return self.height // self.patch_size

    @property
    def grid_w(self) -> int:
        return self.width // self.patch_size

    @property
    def tokens_per_frame(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def n_tokens(self) -> int:
        return self.frames * self.tokens_per_frame

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def build_rope_table(cfg: EncoderConfig) -> RotationTable | None:
    """Per-head rotation table for the configured mode (None disables rotation)."""
    dh = cfg.head_dim
    if cfg.rope_mode == "none":
        return None
    if cfg.rope_mode == "split3d":
        return build_split_3d_rope(
            cfg.frames, cfg.grid_h, cfg.grid_w, dh, cfg.split_fractions, cfg.rope_base
        )
    spatial = build_spatial_rope(cfg.grid_h, cfg.grid_w, dh, cfg.rope_base)
    if cfg.rope_mode == "spatial":
        temporal = identity_table(cfg.frames, dh)
    else:
        temporal = build_temporal_rope(cfg.frames, dh, cfg.rope_base)
    return compose_st_rope(spatial, temporal)


def init_video_params(
    params: ParameterSet,
    cfg: EncoderConfig,
    rng: np.random.Generator,
    dtype=np.float32,
    prefix: str = "video.",
) -> None:
    """Create all encoder leaves: projections ~ N(0, 1/fan_in), PEs ~ N(0, 0.02)."""

    def lin(fan_in, fan_out):
        return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)).astype(dtype)

    d = cfg.dim
    params.add(prefix + "patch.w", lin(cfg.channels * cfg.patch_size**2, d))
    params.add(prefix + "patch.b", np.zeros(d, dtype=dtype))
    if cfg.temporal_pe:
        params.add(
            prefix + "pos.temporal",
            (0.02 * rng.normal(size=(cfg.frames, d))).astype(dtype),
        )
    if cfg.spatial_pe:
        params.add(
            prefix + "pos.spatial",
            (0.02 * rng.normal(size=(cfg.tokens_per_frame, d))).astype(dtype),
        )
    for i in range(cfg.depth):
        bp = f"{prefix}block{i}."
        params.add(bp + "ln1.g", np.ones(d, dtype=dtype))
        for name in ("wq", "wk", "wv", "wo"):
            params.add(bp + f"attn.{name}", lin(d, d))
        for name in ("bq", "bk", "bv", "bo"):
            params.add(bp + f"attn.{name}", np.zeros(d, dtype=dtype))
        params.add(bp + "ln2.g", np.ones(d, dtype=dtype))
        hidden = cfg.mlp_ratio * d
        params.add(bp + "mlp.w1", lin(d, hidden))
        params.add(bp + "mlp.b1", np.zeros(hidden, dtype=dtype))
        params.add(bp + "mlp.w2", lin(hidden, d))
        params.add(bp + "mlp.b2", np.zeros(d, dtype=dtype))
    params.add(prefix + "final_ln.g", np.ones(d, dtype=dtype))
    params.add(prefix + "head.w", lin(d, cfg.out_dim))


def patchify(videos: np.ndarray, w: Tensor, b: Tensor, cfg: EncoderConfig) -> Tensor:
    """Embed every p x p patch of every frame with one shared affine map.

    The convolution kernel spans a single frame, so a token depends only
    on the pixels of its own patch.  Accepts (C, T, H, W) or batched
    (B, C, T, H, W) input with values in [0, 1]; returns (B, L, D).
    """
    v = np.asarray(videos)
    if v.ndim == 4:
        v = v[None]
    bsz, c, t, h, w_ = v.shape
    p = cfg.patch_size
    if (c, t, h, w_) != (cfg.channels, cfg.frames, cfg.height, cfg.width):
        raise ValueError(
            f"clip shape {v.shape[1:]} does not match config "
            f"({cfg.channels},{cfg.frames},{cfg.height},{cfg.width})"
        )
    gh, gw = cfg.grid_h, cfg.grid_w
    patches = (
        v.reshape(bsz, c, t, gh, p, gw, p)
        .transpose(0, 2, 3, 5, 1, 4, 6)
        .reshape(bsz, t * gh * gw, c * p * p)
    )
    return matmul(Tensor(np.ascontiguousarray(patches)), w) + b


def add_positional(z0: Tensor, params: ParameterSet, cfg: EncoderConfig, prefix: str = "video.") -> Tensor:
    """Add replicated learnable embeddings: temporal rows repeat per patch,
    spatial rows tile per frame."""
    x = z0
    if cfg.temporal_pe:
        x = x + repeat_rows(params[prefix + "pos.temporal"], cfg.tokens_per_frame)
    if cfg.spatial_pe:
        x = x + tile_rows(params[prefix + "pos.spatial"], cfg.frames)
    return x


def joint_st_attention_block(
    x: Tensor,
    params: ParameterSet,
    prefix: str,
    heads: int,
    table: RotationTable | None,
    ln_eps: float = 1e-5,
) -> Tensor:
    """Pre-norm transformer block with global attention over all tokens.

    Attention logits are taken between table-rotated queries and keys;
    values are not rotated.
    """
    bsz, n_tok, d = x.shape
    dh = d // heads
    if table is not None and (table.n_tokens != n_tok or table.dim != dh):
        raise ValueError(
            f"rotation table ({table.n_tokens} tokens, dim {table.dim}) does not "
            f"match sequence ({n_tok} tokens, head dim {dh})"
        )

    h = layernorm(x, params[prefix + "ln1.g"], ln_eps)

    def project(name):
        t = matmul(h, params[prefix + f"attn.w{name}"]) + params[prefix + f"attn.b{name}"]
        return transpose(reshape(t, (bsz, n_tok, heads, dh)), (0, 2, 1, 3))

    q, k, v = project("q"), project("k"), project("v")
    if table is not None:
        q = rope_rotate(q, table.cos, table.sin)
        k = rope_rotate(k, table.cos, table.sin)
    logits = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    att = softmax_lastdim(logits)
    out = transpose(matmul(att, v), (0, 2, 1, 3))
    out = matmul(reshape(out, (bsz, n_tok, d)), params[prefix + "attn.wo"]) + params[prefix + "attn.bo"]
    x = x + out

    h2 = layernorm(x, params[prefix + "ln2.g"], ln_eps)
    m = matmul(gelu(matmul(h2, params[prefix + "mlp.w1"]) + params[prefix + "mlp.b1"]), params[prefix + "mlp.w2"])
    return x + (m + params[prefix + "mlp.b2"])


def encode_video(
    videos: np.ndarray,
    params: ParameterSet,
    cfg: EncoderConfig,
    table: RotationTable | None = None,
    prefix: str = "video.",
) -> Tensor:
    """Full forward pass to a unit-norm clip embedding of width ``out_dim``.

    ``table`` defaults to the config's rope mode; pass one explicitly to
    avoid rebuilding it every call during training.
    """
    if table is None and cfg.rope_mode != "none":
        table = build_rope_table(cfg)
    x = patchify(videos, params[prefix + "patch.w"], params[prefix + "patch.b"], cfg)
    x = add_positional(x, params, cfg, prefix)
    for i in range(cfg.depth):
        x = joint_st_attention_block(x, params, f"{prefix}block{i}.", cfg.heads, table, cfg.ln_eps)
    pooled = mean(x, axis=1)
    pooled = layernorm(pooled, params[prefix + "final_ln.g"], cfg.ln_eps)
    emb = matmul(pooled, params[prefix + "head.w"])
    return l2_normalize(emb).values
