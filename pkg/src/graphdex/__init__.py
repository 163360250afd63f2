"""graphdex: hierarchical similarity-graph indexing and preference synthesis.

The pipeline: split text into chunks, embed them, connect similar chunks
into a graph, detect communities, summarize each community into the next
layer's chunks, and repeat. Retrieval ranks every node of every layer
against a query; the preference module turns QA pairs plus retrieved
contexts into chosen/rejected training records; the modeseek module is a
small lab for the KL objectives behind that training.
"""

from .backends import (
    BackendConfig,
    BackendError,
    BackendKind,
    MockEmbedder,
    MockGenerator,
    TransientBackendError,
    make_embedder,
    make_generator,
)
from .chunking import (
    ChunkKind,
    DocumentChunk,
    Tokenizer,
    WhitespaceTokenizer,
    count_tokens,
    split_text,
)
from .community import Partition, detect_communities, kernel_backend, quality
from .config import BuildConfig, resolve_build_config
from .graph import (
    CommunityRecord,
    GraphLayer,
    HierarchicalIndex,
    build_hierarchy,
    build_layer,
    build_similarity_matrix,
    cosine_similarity,
    prune_edges,
)
from .metrics import EvalReport, choice_accuracy, evaluate_accuracy, evaluate_rouge, rouge_l_f1
from .modeseek import (
    CategoricalPolicy,
    ConcentrationReport,
    FitDivergedError,
    FitObjective,
    FitResult,
    GaussianMixtureTarget,
    ResponseSet,
    RewardSpec,
    concentration_contrast,
    fit_policy,
    grad_check,
    interquartile_range,
    kl_divergence,
    mode_seeking_loss,
    optimal_policy,
    response_set,
    sample_response_sets,
    top_reward_logprobs,
)
from .prefdata import (
    PreferenceRecord,
    QAPair,
    build_contexts,
    load_qa_pairs,
    load_records,
    make_record,
    parse_chosen,
    synthesize_dataset,
    write_records,
)
from .retrieval import RetrievalEntry, RetrievalResult, layer_distribution, rank
from .store import (
    ChecksumMismatchError,
    IndexFormatError,
    IndexManifest,
    IndexStoreError,
    TruncatedIndexError,
    UnsupportedVersionError,
    load_index,
    read_manifest,
    save_index,
)

__version__ = "0.1.0"
