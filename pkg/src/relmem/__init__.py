"""Relation-aware external-memory retrieval for long contexts.

Long sources (stories, code repositories, chat histories) are split into
fragments held in an external store. A query scores every fragment directly,
then each fragment inherits an environment score from its related fragments
through an explicit relation matrix; the combined score drives top-K
retrieval and context assembly for a downstream generator.
"""

from .embeddings import EmbeddingProviderSpec, cosine_similarity, embed_batch, local_embedding
from .errors import (
    ConfigError,
    DimensionError,
    EmptyContext,
    FragmentUnmapped,
    GeneratorError,
    IndexFormatError,
    MatrixContractError,
    NodeNotFound,
    ProviderContractError,
    ProviderError,
    RelmemError,
    RetryableProviderError,
    ZeroNormError,
)
from .fragments import (
    ChatSplit,
    ChatTurn,
    CodeSplit,
    Fragment,
    SourceRef,
    StorySplit,
    estimate_tokens,
    split_chat,
    split_code,
    split_story,
)
from .codegraph import (
    CodeEdge,
    CodeGraph,
    CodeNode,
    NodeSpanAssignment,
    build_code_graph,
    map_fragment_to_nodes,
)
from .lexical import Bm25Index, bm25_scores, build_bm25, tokenize_code
from .relations import (
    RelationMatrix,
    RelationSpec,
    build_relation_matrix,
    code_structure_relation,
    context_structure_relation,
    semantic_relation,
)
from .scoring import (
    ScoreSet,
    TopKSelection,
    environment_scores,
    independent_scores,
    relation_aware_scores,
    top_k,
)
from .index import (
    MemoryIndex,
    build_chat_index,
    build_code_index,
    build_story_index,
    load_index,
    save_index,
)
from .manager import (
    ChatMemoryState,
    GeneratorSpec,
    RetrievalConfig,
    RetrievedContext,
    chat_preset,
    chat_step,
    code_preset,
    iterative_retrieve,
    retrieve,
    story_preset,
    stub_generator,
)

__version__ = "0.1.0"
