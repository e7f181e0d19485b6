"""Interactive corpus retrieval: a white-box engine the agent steers
through typed actions, plus the loops, training tooling, and evaluation
harness built on top of it."""

from .agent import (
    AgentConfig,
    HttpChatClient,
    ScriptedClient,
    Step,
    Trajectory,
    extract_answer,
    extract_thought,
    render_messages,
    run_agent,
)
from .config import AppConfig, load_config
from .corpus import Chunk, CorpusStore, Document, chunk_document, ingest_corpus
from .dense import DenseHit, DenseIndex, HashEmbedder, HttpEmbeddingProvider
from .engine import CorpusEngine, SessionState, apply_fusion, resolve_candidates
from .errors import (
    ClientError,
    DuplicateDocument,
    EmbeddingError,
    EmptyDocument,
    EmptyQuery,
    ExportError,
    GroupTooSmall,
    IndexBuildError,
    IngestError,
    InvalidParameter,
    NotFound,
    PlanningError,
    ProtocolError,
    RagloopError,
    TrajectoryAborted,
)
from .evalqa import (
    EvalReport,
    QAExample,
    emit_report,
    exact_match,
    f1,
    load_qa_dataset,
    normalize_answer,
    run_benchmark,
)
from .protocol import (
    Action,
    AdjustScale,
    Answer,
    EntityHit,
    EntityMatch,
    ExactSearch,
    ExcludeDocs,
    IncludeDocs,
    ParseFailure,
    ScoredChunk,
    SemanticSearch,
    ToolResponse,
    WeightedFusion,
    parse_tool_calls,
    parse_tool_response,
    render_tool_calls,
    render_tool_response,
)
from .sparse import InvertedIndex, SparseHit, tokenize
from .training import (
    RewardBreakdown,
    SftRecord,
    TrajectoryVerdict,
    export_sft,
    filter_trajectories,
    group_advantage,
    reward,
    validate_trajectory,
)
from .workflow import (
    Conclude,
    PrimaryPlan,
    Proceed,
    ReflectRefine,
    WorkflowConfig,
    plan,
    run_workflow,
)

__version__ = "0.1.0"
