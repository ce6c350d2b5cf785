"""Toy caption encoder over a closed vocabulary.

Mirrors the dual-encoder structure at desk scale: embedding table, two
pre-norm attention blocks with a 1D rotary table over token positions,
mean pooling, and a unit-norm projection to the shared embedding width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ParameterSet, Tensor, l2_normalize, layernorm, matmul, mean, take_rows
from .rope import build_temporal_rope
from .video_encoder import joint_st_attention_block

PAD_ID = 0
UNK_ID = 1


@dataclass(frozen=True)
class Vocabulary:
    """Closed word list; slot 0 is padding, slot 1 the unknown word."""

    words: tuple[str, ...]

    @classmethod
    def build(cls, words) -> "Vocabulary":
        cleaned = sorted({w.lower() for w in words})
        return cls(words=("<pad>", "<unk>", *cleaned))

    def __len__(self) -> int:
        return len(self.words)

    def word_to_id(self, word: str) -> int:
        try:
            return self.words.index(word.lower())
        except ValueError:
            return UNK_ID


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> np.ndarray:
    """Deterministic lowercase word-to-id mapping, padded/truncated to max_len."""
    lookup = {w: i for i, w in enumerate(vocab.words)}
    ids = [lookup.get(w.lower(), UNK_ID) for w in text.split()][:max_len]
    ids.extend([PAD_ID] * (max_len - len(ids)))
    return np.asarray(ids, dtype=np.int64)


def tokenize_batch(texts, vocab: Vocabulary, max_len: int) -> np.ndarray:
    lookup = {w: i for i, w in enumerate(vocab.words)}
    out = np.full((len(texts), max_len), PAD_ID, dtype=np.int64)
    for r, text in enumerate(texts):
        for c, w in enumerate(text.split()[:max_len]):
            out[r, c] = lookup.get(w.lower(), UNK_ID)
    return out


@dataclass(frozen=True)
class TextConfig:
    vocab_size: int
    dim: int = 64
    heads: int = 4
    depth: int = 2
    max_len: int = 4
    out_dim: int = 256
    rope_base: float = 10000.0
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.dim % self.heads or (self.dim // self.heads) % 2:
            raise ValueError("hidden width must split into heads with even per-head width")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def init_text_params(
    params: ParameterSet,
    cfg: TextConfig,
    rng: np.random.Generator,
    dtype=np.float32,
    prefix: str = "text.",
) -> None:
    def lin(fan_in, fan_out):
        return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)).astype(dtype)

    d = cfg.dim
    params.add(prefix + "embed", (0.02 * rng.normal(size=(cfg.vocab_size, d))).astype(dtype))
    for i in range(cfg.depth):
        bp = f"{prefix}block{i}."
        params.add(bp + "ln1.g", np.ones(d, dtype=dtype))
        for name in ("wq", "wk", "wv", "wo"):
            params.add(bp + f"attn.{name}", lin(d, d))
        for name in ("bq", "bk", "bv", "bo"):
            params.add(bp + f"attn.{name}", np.zeros(d, dtype=dtype))
        params.add(bp + "ln2.g", np.ones(d, dtype=dtype))
        params.add(bp + "mlp.w1", lin(d, 4 * d))
        params.add(bp + "mlp.b1", np.zeros(4 * d, dtype=dtype))
        params.add(bp + "mlp.w2", lin(4 * d, d))
        params.add(bp + "mlp.b2", np.zeros(d, dtype=dtype))
    params.add(prefix + "final_ln.g", np.ones(d, dtype=dtype))
    params.add(prefix + "head.w", lin(d, cfg.out_dim))


def encode_text(
    token_ids: np.ndarray,
    params: ParameterSet,
    cfg: TextConfig,
    table=None,
    prefix: str = "text.",
) -> Tensor:
    """Unit-norm caption embeddings from (B, max_len) id arrays."""
    ids = np.asarray(token_ids)
    if ids.ndim == 1:
        ids = ids[None]
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError("token ids out of vocabulary range")
    if table is None:
        table = build_temporal_rope(cfg.max_len, cfg.head_dim, cfg.rope_base)
    x = take_rows(params[prefix + "embed"], ids)
    for i in range(cfg.depth):
        x = joint_st_attention_block(x, params, f"{prefix}block{i}.", cfg.heads, table, cfg.ln_eps)
    pooled = mean(x, axis=1)
    pooled = layernorm(pooled, params[prefix + "final_ln.g"], cfg.ln_eps)
    emb = matmul(pooled, params[prefix + "head.w"])
    return l2_normalize(emb).values
