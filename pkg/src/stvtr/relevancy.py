"""Soft labels between captions: weighted verb/noun set overlap.

Captions arrive pre-tagged with their verb and noun sets; the relevancy
of two captions is the part-of-speech-weighted intersection-over-union of
those sets.  The full matrix is built once, before training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Caption:
    text: str
    verbs: frozenset[str]
    nouns: frozenset[str]

    @classmethod
    def make(cls, text: str, verbs, nouns) -> "Caption":
        return cls(text=text, verbs=frozenset(verbs), nouns=frozenset(nouns))

    def signature(self) -> tuple[frozenset[str], frozenset[str]]:
        return (self.verbs, self.nouns)


@dataclass(frozen=True)
class RelevancyConfig:
    """Part-of-speech weights and the positive-set threshold."""

    verb_weight: float = 0.5
    noun_weight: float = 0.5
    epsilon: float = 0.1

    def __post_init__(self):
        if self.verb_weight < 0 or self.noun_weight < 0:
            raise ValueError("part-of-speech weights must be nonnegative")
        if abs(self.verb_weight + self.noun_weight - 1.0) > 1e-12:
            raise ValueError("part-of-speech weights must sum to 1")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in (0, 1]")


def _set_iou(a: frozenset[str], b: frozenset[str]) -> float:
    # Two empty sets count as a full match so identical captions score 1.
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union


def pos_relevancy(a: Caption, b: Caption, cfg: RelevancyConfig = RelevancyConfig()) -> float:
    """Weighted IoU of the verb sets and of the noun sets, in [0, 1]."""
    return cfg.verb_weight * _set_iou(a.verbs, b.verbs) + cfg.noun_weight * _set_iou(
        a.nouns, b.nouns
    )


def build_relevancy_matrix(
    video_captions: Sequence[Caption],
    narrations: Sequence[Caption],
    cfg: RelevancyConfig = RelevancyConfig(),
) -> np.ndarray:
    """Full soft-label table, entry (i, j) = pos_relevancy(caption_i, narration_j).

    Computed over unique (verb-set, noun-set) signatures and expanded, so
    corpora with many repeated captions stay cheap.
    """
    row_sigs = [c.signature() for c in video_captions]
    col_sigs = [c.signature() for c in narrations]
    uniq = list(dict.fromkeys(row_sigs + col_sigs))
    index = {sig: i for i, sig in enumerate(uniq)}
    base = np.empty((len(uniq), len(uniq)), dtype=np.float64)
    for i, (va, na) in enumerate(uniq):
        ca = Caption("", va, na)
        for j in range(i, len(uniq)):
            vb, nb = uniq[j]
            val = pos_relevancy(ca, Caption("", vb, nb), cfg)
            base[i, j] = val
            base[j, i] = val
    rows = np.asarray([index[s] for s in row_sigs])
    cols = np.asarray([index[s] for s in col_sigs])
    return base[np.ix_(rows, cols)]


def positive_set(i: int, matrix: np.ndarray, epsilon: float) -> np.ndarray:
    """Indices j with c_ij >= epsilon, in ascending order."""
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must lie in (0, 1]")
    return np.flatnonzero(matrix[i] >= epsilon)


# ---------------------------------------------------------------------------
# corpus / matrix I/O
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CaptionRecord:
    """One caption corpus row: JSON-lines record schema."""

    id: str
    text: str
    verbs: tuple[str, ...]
    nouns: tuple[str, ...]
    video_ref: int

    def caption(self) -> Caption:
        return Caption.make(self.text, self.verbs, self.nouns)


def write_captions_jsonl(records: Sequence[CaptionRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "id": r.id,
                        "text": r.text,
                        "verbs": sorted(r.verbs),
                        "nouns": sorted(r.nouns),
                        "video_ref": r.video_ref,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_captions_jsonl(path) -> list[CaptionRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(
                CaptionRecord(
                    id=d["id"],
                    text=d["text"],
                    verbs=tuple(d["verbs"]),
                    nouns=tuple(d["nouns"]),
                    video_ref=int(d["video_ref"]),
                )
            )
    return records


def save_relevancy_csv(matrix: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
