"""Similarity-graph layers and the iterative hierarchy builder.

Layer 0 holds one summary chunk per large document plus that document's
small leaf chunks. Each further layer summarizes the communities of the
layer below: embed, connect nodes whose cosine similarity clears ``tau``
(considering only each node's ``k_edges`` nearest neighbours), detect
communities, then write one summary chunk per community. Building stops at
``n_layers``, or earlier when a layer is too small or communities stop
compressing it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backends import BackendError, Embedder, Generator
from .chunking import DEFAULT_TOKENIZER, ChunkKind, DocumentChunk, Tokenizer, split_text
from .community import Partition, detect_communities
from .config import BuildConfig

logger = logging.getLogger(__name__)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors; symmetric and exact."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def build_similarity_matrix(embeddings) -> np.ndarray:
    """All-pairs cosine matrix for unit-norm row vectors.

    The BLAS product is symmetrized explicitly so M[i, j] == M[j, i] holds
    bit-exactly, not just to rounding.
    """
    matrix = np.asarray(embeddings, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValueError("embeddings must form a non-empty 2-D array")
    gram = matrix @ matrix.T
    return (gram + gram.T) / 2.0


def prune_edges(matrix: np.ndarray, tau: float, k_edges: int) -> list[tuple[int, int, float]]:
    """Neighbourhood-limited thresholding of a similarity matrix.

    Each node considers only its ``k_edges`` highest-similarity neighbours
    (ties broken toward lower node ids, self excluded); of those, pairs at
    or above ``tau`` become edges. Returns deduplicated (u, v, w) triples
    with u < v, sorted by (u, v). ``k_edges >= n - 1`` recovers plain
    thresholding.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("similarity matrix must be square")
    if k_edges < 1:
        raise ValueError("k_edges must be at least 1")
    n = m.shape[0]
    ids = np.arange(n)
    kept: dict[tuple[int, int], float] = {}
    for u in range(n):
        # ascending by (-weight, id): strongest neighbours first
        order = np.lexsort((ids, -m[u]))
        picked = 0
        for v in order:
            if v == u:
                continue
            if picked >= k_edges:
                break
            picked += 1
            w = float(m[u, v])
            if w >= tau:
                key = (u, int(v)) if u < v else (int(v), u)
                kept.setdefault(key, w)
    return [(u, v, w) for (u, v), w in sorted(kept.items())]


@dataclass
class GraphLayer:
    """One level of the hierarchy: nodes, unit embeddings, pruned edges.

    ``edges`` index into ``node_ids`` positionally; ``embeddings`` row i
    belongs to ``node_ids[i]``.
    """

    layer_index: int
    node_ids: list[int]
    embeddings: np.ndarray
    edges: list[tuple[int, int, float]]


@dataclass
class CommunityRecord:
    community_id: int
    member_chunk_ids: list[int]
    summary_chunk_id: int


@dataclass
class HierarchicalIndex:
    layers: list[GraphLayer]
    chunks: dict[int, DocumentChunk]
    communities: dict[int, list[CommunityRecord]] = field(default_factory=dict)
    config: BuildConfig = field(default_factory=BuildConfig)

    @property
    def total_nodes(self) -> int:
        return sum(len(layer.node_ids) for layer in self.layers)


def build_layer(
    chunks: list[DocumentChunk],
    layer_index: int,
    config: BuildConfig,
    embedder: Embedder,
) -> GraphLayer:
    """Embeds chunks and prunes the similarity graph for one layer."""
    if not chunks:
        raise ValueError("cannot build a layer from zero chunks")
    try:
        vectors = embedder.embed_batch([chunk.text for chunk in chunks])
    except BackendError as exc:
        raise BackendError(f"embedding layer {layer_index}: {exc}") from exc
    stacked = np.vstack(vectors)
    sim = build_similarity_matrix(stacked)
    edges = prune_edges(sim, config.tau, config.k_edges)
    return GraphLayer(
        layer_index=layer_index,
        node_ids=[chunk.id for chunk in chunks],
        embeddings=stacked,
        edges=edges,
    )


def build_hierarchy(
    text: str,
    config: BuildConfig,
    embedder: Embedder,
    summarizer: Generator,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> HierarchicalIndex:
    """Builds the full hierarchical index for one corpus string.

    Deterministic for fixed config and mock backends: chunk ids, node
    order, community seeds and summaries all derive from the input alone.
    """
    large_docs = split_text(text, config.large, tokenizer)
    if not large_docs:
        raise ValueError("input text has no tokens")

    chunks: dict[int, DocumentChunk] = {}
    next_id = 0

    def add_chunk(body: str, kind: ChunkKind, layer_index: int, source_ids: list[int]) -> DocumentChunk:
        nonlocal next_id
        chunk = DocumentChunk(
            id=next_id,
            text=body,
            token_count=tokenizer.count(body),
            kind=kind,
            layer_index=layer_index,
            source_ids=source_ids,
        )
        chunks[chunk.id] = chunk
        next_id += 1
        return chunk

    # layer 0: one summary per large document, then that document's leaves.
    # A document summary cites its own leaves as sources, so the leaf ids
    # must exist first; the summary chunks still take the lower ids.
    doc_summaries: list[str] = []
    for doc in large_docs:
        try:
            doc_summaries.append(summarizer.summarize([doc.text], config.small))
        except BackendError as exc:
            raise BackendError(f"summarizing layer 0: {exc}") from exc
    next_id = len(large_docs)
    leaves_per_doc: list[list[DocumentChunk]] = []
    for doc in large_docs:
        leaves = split_text(doc.text, config.small, tokenizer, start_id=next_id)
        for leaf in leaves:
            chunks[leaf.id] = leaf
        next_id += len(leaves)
        leaves_per_doc.append(leaves)
    summary_chunks: list[DocumentChunk] = []
    for doc_index, body in enumerate(doc_summaries):
        sources = [leaf.id for leaf in leaves_per_doc[doc_index]]
        chunk = DocumentChunk(
            id=doc_index,
            text=body,
            token_count=tokenizer.count(body),
            kind=ChunkKind.SUMMARY,
            layer_index=0,
            source_ids=sources,
        )
        chunks[chunk.id] = chunk
        summary_chunks.append(chunk)
    current = summary_chunks + [leaf for leaves in leaves_per_doc for leaf in leaves]

    index = HierarchicalIndex(layers=[], chunks=chunks, config=config)
    for li in range(config.n_layers):
        layer = build_layer(current, li, config, embedder)
        index.layers.append(layer)
        if li == config.n_layers - 1:
            break
        if len(layer.node_ids) <= 2:
            logger.debug("layer %d has %d nodes; stopping early", li, len(layer.node_ids))
            break
        partition: Partition = detect_communities(layer, config.resolution, config.seed + li)
        if partition.community_count == len(layer.node_ids):
            logger.debug("layer %d communities do not compress; stopping", li)
            break
        records: list[CommunityRecord] = []
        next_chunks: list[DocumentChunk] = []
        for cid, node_positions in enumerate(partition.members()):
            member_ids = [layer.node_ids[pos] for pos in node_positions]
            texts = [chunks[mid].text for mid in member_ids]
            try:
                body = summarizer.summarize(texts, config.small)
            except BackendError as exc:
                raise BackendError(f"summarizing layer {li + 1}: {exc}") from exc
            summary = add_chunk(body, ChunkKind.SUMMARY, li + 1, member_ids)
            records.append(CommunityRecord(cid, member_ids, summary.id))
            next_chunks.append(summary)
        index.communities[li] = records
        current = next_chunks
    logger.info(
        "built hierarchy: %d layers, %d chunks", len(index.layers), len(index.chunks)
    )
    return index
