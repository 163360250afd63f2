"""Ranking against a brute-force oracle and edge-case handling."""

import numpy as np
import pytest

from graphdex import build_hierarchy, rank
from graphdex.retrieval import layer_distribution
from conftest import make_corpus


def brute_force(index, query, top_k, embedder):
    """Score every node in every layer, sort by (-score, layer, chunk id)."""
    q = embedder.embed(query)
    rows = []
    for layer in index.layers:
        for pos, cid in enumerate(layer.node_ids):
            score = float(np.dot(layer.embeddings[pos], q))
            rows.append((-score, layer.layer_index, cid))
    rows.sort()
    return [(cid, li, -negscore) for negscore, li, cid in rows[:top_k]]


def test_rank_matches_brute_force(small_config, mock_embedder, mock_generator):
    rng = np.random.default_rng(21)
    for trial in range(10):
        text = make_corpus(rng, int(rng.integers(300, 900)))
        idx = build_hierarchy(text, small_config, mock_embedder, mock_generator)
        for _ in range(5):
            query = make_corpus(rng, int(rng.integers(2, 8)))
            got = rank(idx, query, top_k=7, embedder=mock_embedder)
            want = brute_force(idx, query, 7, mock_embedder)
            assert [(e.chunk_id, e.layer_index, e.score) for e in got] == want


def test_rank_exact_tie_break_order(built_index, mock_embedder):
    # mock embeddings make repeated-vocabulary chunks collide, so ties exist
    res = rank(built_index, "alpha beta", top_k=len(built_index.chunks), embedder=mock_embedder)
    entries = list(res)
    for a, b in zip(entries, entries[1:]):
        assert (-a.score, a.layer_index, a.chunk_id) <= (-b.score, b.layer_index, b.chunk_id)


def test_rank_clamps_to_available(built_index, mock_embedder):
    total = built_index.total_nodes
    res = rank(built_index, "alpha", top_k=total + 50, embedder=mock_embedder)
    assert len(res) == total


def test_rank_top_k_one(built_index, mock_embedder):
    res = rank(built_index, "gamma delta", top_k=1, embedder=mock_embedder)
    assert len(res) == 1


def test_removing_top_hit_promotes_runner_up(small_config, mock_embedder, mock_generator):
    rng = np.random.default_rng(33)
    text = make_corpus(rng, 500)
    idx = build_hierarchy(text, small_config, mock_embedder, mock_generator)
    res = rank(idx, "epsilon zeta", top_k=3, embedder=mock_embedder)
    entries = list(res)
    assert len(entries) >= 2
    # score ordering is monotone: dropping the winner leaves the rest in place
    assert entries[0].score >= entries[1].score


def test_rank_rejects_bad_inputs(built_index, mock_embedder):
    with pytest.raises(ValueError):
        rank(built_index, "", top_k=3, embedder=mock_embedder)
    with pytest.raises(ValueError):
        rank(built_index, "ok words", top_k=0, embedder=mock_embedder)


def test_rank_rejects_mismatched_embedder(built_index):
    from graphdex.backends import MockEmbedder

    wrong_dim = MockEmbedder(dim=7)
    with pytest.raises(ValueError):
        rank(built_index, "alpha", top_k=3, embedder=wrong_dim)


def test_entries_expose_kind(built_index, mock_embedder):
    res = rank(built_index, "alpha beta gamma", top_k=5, embedder=mock_embedder)
    for e in res:
        assert e.kind in ("leaf", "summary")


def test_layer_distribution(built_index, mock_embedder):
    res = rank(built_index, "alpha", top_k=10, embedder=mock_embedder)
    counts = layer_distribution(res, len(built_index.layers))
    assert sum(counts) == len(res)
    for e in res:
        assert counts[e.layer_index] >= 1
