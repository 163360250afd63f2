"""Scoring queries against every node of a hierarchical index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backends import Embedder
from .chunking import ChunkKind
from .graph import HierarchicalIndex


@dataclass
class RetrievalEntry:
    chunk_id: int
    layer_index: int
    score: float
    kind: ChunkKind


@dataclass
class RetrievalResult:
    entries: list[RetrievalEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def rank(
    index: HierarchicalIndex,
    query: str,
    top_k: int,
    embedder: Embedder,
) -> RetrievalResult:
    """Top-k nodes across all layers by cosine similarity to the query.

    Scores use the same dot product as cosine_similarity, so they are
    exactly reproducible from the stored embeddings. Ties order by lower
    layer index, then lower chunk id.
    """
    if not query.split():
        raise ValueError("query must contain at least one token")
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    if not index.layers:
        raise ValueError("index has no layers")
    q = embedder.embed(query)
    scored: list[tuple[float, int, int]] = []
    for layer in index.layers:
        if layer.embeddings.shape[0] and layer.embeddings.shape[1] != q.shape[0]:
            raise ValueError(
                f"query embedding dim {q.shape[0]} does not match layer "
                f"{layer.layer_index} dim {layer.embeddings.shape[1]}"
            )
        for row, chunk_id in enumerate(layer.node_ids):
            score = float(np.dot(layer.embeddings[row], q))
            scored.append((score, layer.layer_index, chunk_id))
    scored.sort(key=lambda item: (-item[0], item[1], item[2]))
    entries = [
        RetrievalEntry(chunk_id, layer_index, score, index.chunks[chunk_id].kind)
        for score, layer_index, chunk_id in scored[:top_k]
    ]
    return RetrievalResult(entries)


def layer_distribution(result: RetrievalResult, layer_count: int) -> list[int]:
    """How many retrieved entries came from each layer."""
    counts = [0] * layer_count
    for entry in result.entries:
        if not 0 <= entry.layer_index < layer_count:
            raise ValueError(
                f"entry layer {entry.layer_index} outside [0, {layer_count})"
            )
        counts[entry.layer_index] += 1
    return counts
