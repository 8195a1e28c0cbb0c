"""
OrderScout Library

Discovers learning-friendly orderings of decoder target tokens.

Sequence-to-sequence arithmetic tasks can be easy or nearly unlearnable for
a causal transformer depending on the order its target tokens are emitted
in. OrderScout trains small GPT-2 style decoders on mixtures of target
orders, ranks the orders by the loss they reach early in training, and
searches the permutation space hierarchically for the best one.

Public API (v0.1.0):
- Task generators: gen_relu(), gen_square19(), gen_index(), gen_prod(), gen_dataset()
- Permutation algebra: apply(), compose(), inverse(), make_set(), block_perms()
- Model and training: build_model(), train(), train_mixed(), train_soft_perm()
- Search: profile(), global_stage(), local_stage(), hierarchical_search(), es_search()
- Evaluation: eval_success(), attention_sparsity(), prod_digit_grid(), emit_report()
- Data models, typed configs and exceptions

Example:
    from orderscout import TaskSpec, gen_splits, build_vocab, make_set, PermSetKind

    task = TaskSpec.relu(13)
    train_set, val_set, eval_set = gen_splits(task, 5000, 1000, 1000)
    vocab = build_vocab([train_set, val_set, eval_set])
    candidates = make_set(PermSetKind.G, 13, 32, seed=0)
"""

__version__ = "0.1.0"

from .models import (  # noqa: E402
    # Enumerations
    TaskKind,
    Split,
    PermSetKind,
    SoftPermMode,
    Normalization,
    OutputFormat,

    # Data classes
    TaskSpec,
    Example,
    Dataset,
    Vocabulary,
    Permutation,
    PermutationSet,
    BlockPartition,
    ModelConfig,
    TrainConfig,
    SoftPermConfig,
    TrainReport,
    LossProfileEntry,
    LossProfile,
    GlobalSearchConfig,
    LocalSearchConfig,
    EsConfig,
    EsResult,
    TraceEntry,
    SearchTrace,
    BudgetSummary,
    EvalReport,
    AttentionStats,
    RankPoint,
    RunManifest,
    AUTO_SUBSAMPLE,

    # Exceptions
    OrderScoutError,
    ConfigurationError,
    TaskInputError,
    PermutationError,
    BudgetExceededError,
    VocabularyError,
    NumericOverflowError,
    GradientError,
    TrainingAbortedError,
    SearchError,
    InvalidCaptureError,
    ReportError,
)
from .taskgen import (  # noqa: E402
    smod19,
    gen_relu,
    gen_square19,
    gen_index,
    gen_prod,
    compute_target,
    gen_dataset,
    gen_splits,
    build_vocab,
    save_dataset,
    load_dataset,
)
from .permutation import (  # noqa: E402
    identity,
    reverse,
    adjacent_swap,
    apply,
    compose,
    inverse,
    to_matrix,
    split_blocks,
    fixed_size_blocks,
    block_perms,
    intra_block_perms,
    block_rotations,
    make_set,
    save_permutation_set,
    load_permutation_set,
)
from .transformer import (  # noqa: E402
    DecoderTransformer,
    build_model,
    model_config_for,
    encode_batch,
    forward,
    backward,
    generate,
    save_checkpoint,
    load_checkpoint,
)
from .trainer import (  # noqa: E402
    lr_at,
    train,
    train_mixed,
    train_soft_perm,
    validation_loss,
    permutation_losses,
    fixed_order_entropy,
)
from .search import (  # noqa: E402
    LossProfiler,
    profile,
    count_candidates,
    global_stage,
    local_stage,
    hierarchical_search,
    es_search,
    run_es,
)
from .evaluator import (  # noqa: E402
    eval_success,
    capture_attention,
    attention_sparsity,
    rank_retrain_sweep,
    prod_digit_grid,
    length_sweep,
)
from .report import ReportArtifacts, emit_report  # noqa: E402
from .config import RunConfig, load_run_config, dump_run_config  # noqa: E402

__all__ = [
    # Enumerations
    "TaskKind",
    "Split",
    "PermSetKind",
    "SoftPermMode",
    "Normalization",
    "OutputFormat",

    # Data classes
    "TaskSpec",
    "Example",
    "Dataset",
    "Vocabulary",
    "Permutation",
    "PermutationSet",
    "BlockPartition",
    "ModelConfig",
    "TrainConfig",
    "SoftPermConfig",
    "TrainReport",
    "LossProfileEntry",
    "LossProfile",
    "GlobalSearchConfig",
    "LocalSearchConfig",
    "EsConfig",
    "EsResult",
    "TraceEntry",
    "SearchTrace",
    "BudgetSummary",
    "EvalReport",
    "AttentionStats",
    "RankPoint",
    "RunManifest",
    "RunConfig",
    "ReportArtifacts",
    "AUTO_SUBSAMPLE",

    # Exceptions
    "OrderScoutError",
    "ConfigurationError",
    "TaskInputError",
    "PermutationError",
    "BudgetExceededError",
    "VocabularyError",
    "NumericOverflowError",
    "GradientError",
    "TrainingAbortedError",
    "SearchError",
    "InvalidCaptureError",
    "ReportError",

    # Tasks
    "smod19",
    "gen_relu",
    "gen_square19",
    "gen_index",
    "gen_prod",
    "compute_target",
    "gen_dataset",
    "gen_splits",
    "build_vocab",
    "save_dataset",
    "load_dataset",

    # Permutations
    "identity",
    "reverse",
    "adjacent_swap",
    "apply",
    "compose",
    "inverse",
    "to_matrix",
    "split_blocks",
    "fixed_size_blocks",
    "block_perms",
    "intra_block_perms",
    "block_rotations",
    "make_set",
    "save_permutation_set",
    "load_permutation_set",

    # Model and training
    "DecoderTransformer",
    "build_model",
    "model_config_for",
    "encode_batch",
    "forward",
    "backward",
    "generate",
    "save_checkpoint",
    "load_checkpoint",
    "lr_at",
    "train",
    "train_mixed",
    "train_soft_perm",
    "validation_loss",
    "permutation_losses",
    "fixed_order_entropy",

    # Search
    "LossProfiler",
    "profile",
    "count_candidates",
    "global_stage",
    "local_stage",
    "hierarchical_search",
    "es_search",
    "run_es",

    # Evaluation and reports
    "eval_success",
    "capture_attention",
    "attention_sparsity",
    "rank_retrain_sweep",
    "prod_digit_grid",
    "length_sweep",
    "emit_report",

    # Config files
    "load_run_config",
    "dump_run_config",
]
