"""Compositional image-text retrieval engine."""

from ._ccnet import (
    batch_softmax_loss,
    combined_probability,
    context_gating,
    evaluate,
    generate_synthetic,
    grad_check,
    recall_at_k,
    retrieve,
    softmax,
    train,
)

__all__ = [
    "batch_softmax_loss",
    "combined_probability",
    "context_gating",
    "evaluate",
    "generate_synthetic",
    "grad_check",
    "recall_at_k",
    "retrieve",
    "softmax",
    "train",
]
