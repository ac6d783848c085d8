"""Semantic typing for social knowledge bases."""

from ._native import (
    EmbeddingSet,
    Model,
    Schema,
    __version__,
    aggregate_mean,
    cosine,
    fuse,
    induce_schema,
    metrics,
    rerank,
    topk,
)

__all__ = [
    "EmbeddingSet",
    "Model",
    "Schema",
    "aggregate_mean",
    "cosine",
    "fuse",
    "induce_schema",
    "metrics",
    "rerank",
    "topk",
]
