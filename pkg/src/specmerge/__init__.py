"""specmerge: conflict-aware integration of new information into intent specs."""

from .bench import (
    Benchmark,
    BenchmarkCase,
    EvalConfig,
    FprExperimentConfig,
    Metrics,
    MetricsReport,
    compute_metrics,
    injected_count,
    load_benchmark,
    markdown_table,
    run_fpr_experiment,
    run_method,
)
from .engine import (
    ChangeRequest,
    DetectionReport,
    check_for_conflicts,
    local_rewrite,
    make_change,
    should_request_clarification,
    suggest_strategies,
    underline_words,
)
from .errors import (
    BenchmarkLoadError,
    ChunkNotFoundError,
    CountMismatchError,
    FixtureMissError,
    ProviderError,
    ResponseParseError,
    SpecFormatError,
    SpecmergeError,
    StateTransitionError,
)
from .gateway import (
    DELETE,
    CompletionRequest,
    CompletionResponse,
    EditOp,
    LiveProvider,
    LlmGateway,
    PromptTemplate,
    ScriptedProvider,
    StaticProvider,
    bind_edits,
    load_catalog,
    parse_conflict_json,
    parse_edits_json,
    parse_numbered_list,
    parse_triples_json,
    variables_digest,
)
from .graph import (
    EntityNode,
    KnowledgeGraph,
    PprConfig,
    PprResult,
    RelationEdge,
    induce_graph,
    normalize_key,
    personalized_pagerank,
    retrieve_candidates,
    update_for_chunk,
)
from .service import SessionState, create_app
from .store import (
    Chunk,
    ChunkState,
    ConflictClass,
    ConflictVerdict,
    IntentSpec,
    SpecSnapshot,
    load_spec,
)

__version__ = "0.1.0"
