import numpy as np
import pytest

from graphdex import BuildConfig
from graphdex.backends import BackendConfig, make_embedder, make_generator

WORDS = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "lambda", "sigma", "omega", "query", "graph", "node",
]


def make_corpus(rng, n_tokens, vocab=None):
    vocab = vocab or WORDS
    return " ".join(rng.choice(vocab, n_tokens))


@pytest.fixture
def mock_backend_config():
    return BackendConfig(kind="mock", mock_dim=32)


@pytest.fixture
def mock_embedder(mock_backend_config):
    return make_embedder(mock_backend_config)


@pytest.fixture
def mock_generator(mock_backend_config):
    return make_generator(mock_backend_config)


@pytest.fixture
def small_config():
    # small chunk sizes so tiny corpora still produce multi-node layers
    return BuildConfig(
        large=200, small=40, n_layers=2, tau=0.3, k_edges=5,
        top_k_retrieval=8, seed=3,
    )


@pytest.fixture
def built_index(small_config, mock_embedder, mock_generator):
    rng = np.random.default_rng(7)
    text = make_corpus(rng, 800)
    from graphdex import build_hierarchy

    return build_hierarchy(text, small_config, mock_embedder, mock_generator)
