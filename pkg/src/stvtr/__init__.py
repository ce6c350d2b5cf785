"""Desk-scale video-text retrieval with composed spatial-temporal rotary
embeddings, soft-label mining, and symmetric contrastive objectives."""

__version__ = "0.1.0"

from . import losses, metrics, mining, numerics, relevancy, rope, text_encoder, video_encoder

__all__ = [
    "losses",
    "metrics",
    "mining",
    "numerics",
    "relevancy",
    "rope",
    "text_encoder",
    "video_encoder",
    "__version__",
]
