"""Training objectives for the dual-encoder retrieval model.

All losses take a batch cosine-similarity matrix (Tensor) and return a
scalar Tensor wired into the autodiff tape.  Batch relevancy tables and
index masks enter as plain ndarrays: labels carry no gradient.

For every triplet loss there is a ``*_terms`` companion returning the raw
per-triplet hinge values as ndarrays (diagonal zeroed, one array per
retrieval direction).  The Tensor losses and the term arrays are checked
against each other in the test suite, and the term arrays are what the
reduction-equivalence properties are stated on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    Tensor,
    absolute,
    diag_part,
    exp,
    log,
    matmul,
    mean,
    relu,
    reshape,
    sum_,
    transpose,
)

_BIG_NEG = -1e30


@dataclass
class LossConfig:
    """Hyperparameters shared by the loss family.

    ``lam`` is the edge threshold deciding which branch of the symmetric
    loss applies; by default it equals the positive-mining threshold.
    """

    kind: str = "sms"
    gamma: float = 0.6
    tau: float = 0.1
    lam: float = 0.1
    alpha: float = 2.0
    beta: float = 50.0
    temperature: float = 0.05
    gamma_hard: float = 0.3

    KINDS = ("infonce", "mimm", "adaptive_mimm", "ms", "sms", "sms_hard")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {self.KINDS}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.tau < 0 or self.lam < 0:
            raise ValueError("tau and lam must be nonnegative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


def similarity_matrix(video_embs: Tensor, text_embs: Tensor) -> Tensor:
    """Cosine-similarity matrix of two unit-norm batches (videos x texts)."""
    if video_embs.shape[-1] != text_embs.shape[-1]:
        raise ValueError(
            f"embedding widths disagree: {video_embs.shape} vs {text_embs.shape}"
        )
    return matmul(video_embs, transpose(text_embs))


def _offdiag_mask(b: int, dtype) -> np.ndarray:
    return (1.0 - np.eye(b)).astype(dtype)


def _cross_entropy_diag(logits: Tensor) -> Tensor:
    """Mean over rows of -log softmax(row)[diag]."""
    m = logits.data.max(axis=-1, keepdims=True)
    lse = log(sum_(exp(logits - m), axis=-1)) + m[:, 0]
    return mean(lse - diag_part(logits))


def infonce_bidirectional(S: Tensor, temperature: float) -> Tensor:
    """Symmetric InfoNCE with diagonal targets, averaged over directions."""
    b, b2 = S.shape
    if b != b2:
        raise ValueError(f"expected a square similarity matrix, got {S.shape}")
    z = S * (1.0 / temperature)
    return 0.5 * (_cross_entropy_diag(z) + _cross_entropy_diag(transpose(z)))


# ---------------------------------------------------------------------------
# max-margin family
# ---------------------------------------------------------------------------


def _margin_hinges(S: Tensor, margins: np.ndarray) -> Tensor:
    """relu(margin_i - S_ii + S_ik) with the diagonal masked out."""
    b = S.shape[0]
    d = reshape(diag_part(S), (b, 1))
    hinge = relu(margins[:, None] - d + S)
    return hinge * _offdiag_mask(b, S.dtype)


def mi_mm(S: Tensor, gamma: float) -> Tensor:
    """Max-margin triplet loss over batch triplets, both directions, raw sum."""
    b = S.shape[0]
    margins = np.full(b, gamma)
    return sum_(_margin_hinges(S, margins)) + sum_(_margin_hinges(transpose(S), margins))


def adaptive_mi_mm(S: Tensor, C_batch: np.ndarray, gamma: float) -> Tensor:
    """Max-margin loss with the margin scaled by the sampled pair's relevancy."""
    C = np.asarray(C_batch)
    if C.shape != tuple(S.shape):
        raise ValueError(f"relevancy table {C.shape} does not match similarities {S.shape}")
    margins = np.diagonal(C) * gamma
    return sum_(_margin_hinges(S, margins)) + sum_(_margin_hinges(transpose(S), margins))


def mi_mm_terms(S: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    b = S.shape[0]
    return (
        _margin_hinges(Tensor(S), np.full(b, gamma)).data,
        _margin_hinges(Tensor(S.T), np.full(b, gamma)).data,
    )


def adaptive_mi_mm_terms(
    S: np.ndarray, C: np.ndarray, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    margins = np.diagonal(C) * gamma
    return (
        _margin_hinges(Tensor(S), margins).data,
        _margin_hinges(Tensor(S.T), margins).data,
    )


# ---------------------------------------------------------------------------
# multi-similarity
# ---------------------------------------------------------------------------


def _log1p_sum_exp_masked(z: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise log(1 + sum_{mask} exp(z)), stabilized; empty rows give 0."""
    maskf = mask.astype(z.dtype)
    zm = np.where(mask, z.data, _BIG_NEG)
    m = np.maximum(zm.max(axis=-1), 0.0)
    z_masked = z * maskf + _BIG_NEG * (1.0 - maskf)
    s = sum_(exp(z_masked - m[:, None]), axis=-1)
    return log(s + np.exp(-m)) + m


def multi_similarity(
    S: Tensor,
    pos_mask: np.ndarray,
    neg_mask: np.ndarray,
    alpha: float,
    beta: float,
    gamma: float,
) -> Tensor:
    """Pairwise log-sum-exp loss around the margin, both directions.

    ``pos_mask``/``neg_mask`` are boolean (B, B) tables with rows indexing
    the first-axis anchors; transposed masks are used for the reverse
    direction.  Positives are pulled up toward the margin with scale
    ``alpha``, negatives pushed below it with scale ``beta``.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    pos_mask = np.asarray(pos_mask, dtype=bool)
    neg_mask = np.asarray(neg_mask, dtype=bool)

    def one_direction(M: Tensor, p: np.ndarray, n: np.ndarray) -> Tensor:
        pos = _log1p_sum_exp_masked(M * (-alpha) + alpha * gamma, p) * (1.0 / alpha)
        neg = _log1p_sum_exp_masked(M * beta - beta * gamma, n) * (1.0 / beta)
        return sum_(pos + neg)

    b = S.shape[0]
    total = one_direction(S, pos_mask, neg_mask) + one_direction(
        transpose(S), pos_mask.T, neg_mask.T
    )
    return total * (1.0 / b)


def ms_positive_term(s: float, alpha: float, gamma: float) -> float:
    """Single-pair positive term, the smooth counterpart of relu(gamma - s)."""
    return float(np.log1p(np.exp(-alpha * (s - gamma))) / alpha) if alpha * (s - gamma) > -600 else float(gamma - s)


def ms_negative_term(s: float, beta: float, gamma: float) -> float:
    """Single-pair negative term, the smooth counterpart of relu(s - gamma)."""
    return float(np.log1p(np.exp(beta * (s - gamma))) / beta) if beta * (s - gamma) < 600 else float(s - gamma)


# ---------------------------------------------------------------------------
# symmetric soft-label loss
# ---------------------------------------------------------------------------


def _symmetric_branch_terms(
    S: np.ndarray, C: np.ndarray, gamma: float, tau: float, lam: float
) -> np.ndarray:
    """Per-triplet values for one direction; rows are anchors, diagonal is 0."""
    b = S.shape[0]
    R = np.diagonal(C)[:, None] - C
    d = np.diagonal(S)[:, None] - S
    pos = np.maximum(R * gamma - d, 0.0)
    neg = np.maximum(-R * gamma + d, 0.0)
    mid = np.maximum(np.abs(d) - tau, 0.0)
    out = np.where(R >= lam, pos, np.where(R <= -lam, neg, mid))
    out[np.arange(b), np.arange(b)] = 0.0
    return out


def sms_terms(
    S: np.ndarray, C: np.ndarray, cfg: LossConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Per-triplet values of the symmetric loss for both directions."""
    v2t = _symmetric_branch_terms(S, C, cfg.gamma, cfg.tau, cfg.lam)
    t2v = _symmetric_branch_terms(S.T, C.T, cfg.gamma, cfg.tau, cfg.lam)
    return v2t, t2v


def sms(S_v2t: Tensor, S_t2v: Tensor, C_batch: np.ndarray, cfg: LossConfig) -> Tensor:
    """Symmetric soft-label triplet loss over batch triplets.

    For anchor i the diagonal column j=i is the sampled positive and every
    other column k is contrasted against it through the signed relevancy
    gap R = c_ij - c_ik:

    * R >= lam:   relu(R*gamma - S_ij + S_ik)   (j must win by R*gamma)
    * R <= -lam:  relu(-R*gamma + S_ij - S_ik)  (k must win by |R|*gamma)
    * |R| < lam:  relu(|S_ij - S_ik| - tau)     (near-ties relaxed by tau)

    Both directions are summed and the total divided by the batch size.
    """
    C = np.asarray(C_batch)
    b = S_v2t.shape[0]
    if C.shape != (b, b) or tuple(S_t2v.shape) != (b, b):
        raise ValueError(
            f"shape mismatch: S_v2t {S_v2t.shape}, S_t2v {S_t2v.shape}, C {C.shape}"
        )

    def one_direction(S: Tensor, Cd: np.ndarray) -> Tensor:
        R = np.diagonal(Cd)[:, None] - Cd
        off = _offdiag_mask(b, S.dtype)
        mask_pos = ((R >= cfg.lam) * off).astype(S.dtype)
        mask_neg = ((R <= -cfg.lam) * off).astype(S.dtype)
        mask_mid = ((np.abs(R) < cfg.lam) * off).astype(S.dtype)
        d = reshape(diag_part(S), (b, 1)) - S
        pos = relu(R * cfg.gamma - d) * mask_pos
        neg = relu(-R * cfg.gamma + d) * mask_neg
        mid = relu(absolute(d) - cfg.tau) * mask_mid
        return sum_(pos) + sum_(neg) + sum_(mid)

    total = one_direction(S_v2t, C) + one_direction(S_t2v, C.T)
    return total * (1.0 / b)


def sms_hard_label(S: Tensor, labels: np.ndarray, gamma_h: float, tau: float) -> Tensor:
    """Hard-label variant for rows with several exact positives.

    ``labels`` is a binary (B, K) table.  Column pairs with differing
    labels contribute one hinge with the positive in front; equal-label
    pairs are visited once (upper triangle) and relaxed by ``tau``.
    """
    L = np.asarray(labels)
    if not np.isin(L, (0, 1)).all():
        raise ValueError("labels must be binary")
    if L.shape != tuple(S.shape):
        raise ValueError(f"labels {L.shape} do not match similarities {S.shape}")
    b, k = L.shape
    mask_hinge = (L[:, :, None] == 1) & (L[:, None, :] == 0)
    upper = np.triu(np.ones((k, k), dtype=bool), 1)
    mask_tau = (L[:, :, None] == L[:, None, :]) & upper[None, :, :]

    d = reshape(S, (b, k, 1)) - reshape(S, (b, 1, k))
    hinge = relu(gamma_h - d) * mask_hinge.astype(S.dtype)
    ties = relu(absolute(d) - tau) * mask_tau.astype(S.dtype)
    return (sum_(hinge) + sum_(ties)) * (1.0 / b)
