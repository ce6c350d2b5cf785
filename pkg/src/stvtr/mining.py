"""Hard-mining batch assembly.

For each video in a batch a narration is drawn uniformly from its
positive set (relevancy >= epsilon), the chosen indices are recorded, and
the per-batch relevancy table is rebuilt by gathering the full matrix at
those indices, so off-diagonal entries keep their true correlation values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .relevancy import positive_set


@dataclass(frozen=True)
class Batch:
    """Immutable record of one assembled training batch."""

    video_indices: np.ndarray
    narration_indices: np.ndarray
    relevancy: np.ndarray  # (B, B) gathered sub-matrix
    rng_state: dict  # generator state snapshot taken before sampling
    fallback_count: int  # rows whose positive set was empty

    @property
    def size(self) -> int:
        return len(self.video_indices)


def sample_positive(
    i: int,
    matrix: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    counters: dict | None = None,
) -> int:
    """Uniform draw from {j : c_ij >= epsilon}; falls back to j=i when empty."""
    pos = positive_set(i, matrix, epsilon)
    if len(pos) == 0:
        if counters is not None:
            counters["empty_positive_set"] = counters.get("empty_positive_set", 0) + 1
        return i
    return int(pos[rng.integers(len(pos))])


def rebuild_batch_relevancy(
    video_indices: np.ndarray, narration_indices: np.ndarray, matrix: np.ndarray
) -> np.ndarray:
    """Gather the (B, B) sub-table; entry (r, c) = matrix[video_r, narration_c]."""
    return matrix[np.ix_(np.asarray(video_indices), np.asarray(narration_indices))]


def assemble_batch(
    video_indices,
    matrix: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> Batch:
    """Sample one positive narration per video and rebuild the sub-table.

    Video indices must be distinct; narrations may repeat across rows.
    Deterministic for a fixed generator state (snapshot kept on the batch).
    """
    vids = np.asarray(video_indices, dtype=np.int64)
    if len(np.unique(vids)) != len(vids):
        raise ValueError("video indices within a batch must be distinct")
    state = rng.bit_generator.state
    counters: dict = {}
    narrs = np.asarray(
        [sample_positive(int(i), matrix, epsilon, rng, counters) for i in vids],
        dtype=np.int64,
    )
    sub = rebuild_batch_relevancy(vids, narrs, matrix)
    return Batch(
        video_indices=vids,
        narration_indices=narrs,
        relevancy=sub,
        rng_state=state,
        fallback_count=counters.get("empty_positive_set", 0),
    )


def check_batch_consistency(batch: Batch, matrix: np.ndarray, epsilon: float) -> bool:
    """Debug invariant: sub-matrix gathers correctly and diagonal >= epsilon.

    The diagonal condition is waived for fallback rows.
    """
    expect = rebuild_batch_relevancy(batch.video_indices, batch.narration_indices, matrix)
    if not np.array_equal(expect, batch.relevancy):
        return False
    diag = np.diagonal(batch.relevancy)
    if batch.fallback_count == 0 and not (diag >= epsilon).all():
        return False
    return True
