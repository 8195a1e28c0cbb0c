"""
Data models for OrderScout.

This module contains the core data classes, enums and exceptions used
throughout the library: task descriptions, datasets, permutations, the
typed configs for model/training/search, and the result records those
stages produce.
"""

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple


# ============================================================================
# Enumerations
# ============================================================================

class TaskKind(Enum):
    """The four order-sensitive arithmetic tasks."""
    RELU = "relu"
    SQUARE19 = "square19"
    INDEX = "index"
    PROD = "prod"

    def __str__(self) -> str:
        return self.value


class Split(Enum):
    """Dataset split."""
    TRAIN = "train"
    VALIDATION = "validation"
    EVAL = "eval"

    def __str__(self) -> str:
        return self.value


class PermSetKind(Enum):
    """Construction recipe of a permutation set."""
    F = "f"
    R = "r"
    G = "g"
    B = "b"
    EXPLICIT = "explicit"

    def __str__(self) -> str:
        return self.value


class SoftPermMode(Enum):
    """How the soft permutation is optimised."""
    JOINT = "joint"
    ALTERNATING = "alternating"


class Normalization(Enum):
    """How soft-permutation logits are turned into a stochastic matrix."""
    ROW_SOFTMAX = "row_softmax"
    SINKHORN = "sinkhorn"


class OutputFormat(Enum):
    """Enumeration for CLI output format options."""
    JSON = "json"
    HUMAN_READABLE = "text"


# ============================================================================
# Exception Classes
# ============================================================================

class OrderScoutError(Exception):
    """Base exception for all OrderScout errors."""
    pass


class ConfigurationError(OrderScoutError):
    """Raised when a config or parameter violates its invariants."""
    pass


class TaskInputError(OrderScoutError):
    """Raised when a task generator receives an invalid input sequence."""
    pass


class PermutationError(OrderScoutError):
    """Raised for non-bijections and length mismatches."""
    pass


class BudgetExceededError(PermutationError):
    """Raised when an enumeration would exceed its configured budget."""
    pass


class VocabularyError(OrderScoutError):
    """Raised when a value has no token id."""
    pass


class NumericOverflowError(OrderScoutError):
    """Raised when activations or losses become non-finite."""
    pass


class GradientError(OrderScoutError):
    """Raised when gradients are requested without a train-mode forward pass."""
    pass


class TrainingAbortedError(OrderScoutError):
    """Raised when training stops early; carries the report up to that point."""

    def __init__(self, message: str, partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report


class SearchError(OrderScoutError):
    """Raised when a permutation search cannot proceed."""
    pass


class InvalidCaptureError(OrderScoutError):
    """Raised when attention rows are not probability vectors."""
    pass


class ReportError(OrderScoutError):
    """Raised when report artifacts cannot be written."""
    pass


# ============================================================================
# Tasks and Data
# ============================================================================

@dataclass(frozen=True)
class TaskSpec:
    """Describes one task instance: kind, target length and input bounds."""
    kind: TaskKind
    target_len: int
    window: Optional[int] = None
    operand_digits: Optional[int] = None
    input_low: Optional[int] = None
    input_high: Optional[int] = None

    def __post_init__(self):
        """Validate task constraints and fill in default input bounds."""
        if not isinstance(self.kind, TaskKind):
            raise ConfigurationError("kind must be a TaskKind")
        if self.target_len < 2:
            raise ConfigurationError("target_len must be >= 2")

        if self.kind == TaskKind.INDEX:
            if self.window is None or not (1 <= self.window <= self.target_len):
                raise ConfigurationError("index task requires 1 <= window <= target_len")
        if self.kind == TaskKind.PROD:
            if self.operand_digits is None or self.operand_digits < 1:
                raise ConfigurationError("prod task requires operand_digits >= 1")
            if self.target_len != 2 * self.operand_digits:
                raise ConfigurationError("prod task requires target_len == 2 * operand_digits")

        low, high = self.input_low, self.input_high
        if low is None or high is None:
            default_low, default_high = _default_bounds(self.kind, self.target_len)
            low = default_low if low is None else low
            high = default_high if high is None else high
            object.__setattr__(self, "input_low", low)
            object.__setattr__(self, "input_high", high)
        if low > high:
            raise ConfigurationError("input_low must be <= input_high")
        if self.kind == TaskKind.INDEX and (low < 0 or high > self.target_len - 1):
            raise ConfigurationError("index task inputs must lie in [0, target_len - 1]")

    @classmethod
    def relu(cls, target_len: int) -> "TaskSpec":
        return cls(TaskKind.RELU, target_len)

    @classmethod
    def square19(cls, target_len: int) -> "TaskSpec":
        return cls(TaskKind.SQUARE19, target_len)

    @classmethod
    def index(cls, target_len: int, window: int) -> "TaskSpec":
        return cls(TaskKind.INDEX, target_len, window=window)

    @classmethod
    def prod(cls, operand_digits: int) -> "TaskSpec":
        return cls(TaskKind.PROD, 2 * operand_digits, operand_digits=operand_digits)

    @property
    def input_len(self) -> int:
        """Number of integers in x (both operands for Prod)."""
        if self.kind == TaskKind.PROD:
            return 2 * self.operand_digits
        return self.target_len

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TaskSpec":
        data = dict(data)
        data["kind"] = TaskKind(data["kind"])
        return cls(**data)


def _default_bounds(kind: TaskKind, target_len: int) -> Tuple[int, int]:
    if kind == TaskKind.INDEX:
        return 0, target_len - 1
    if kind == TaskKind.PROD:
        return 0, 9
    return -9, 9


@dataclass(frozen=True)
class Example:
    """One input/target pair; y is in forward order."""
    x: Tuple[int, ...]
    y: Tuple[int, ...]
    task: TaskSpec

    def __post_init__(self):
        if len(self.y) != self.task.target_len:
            raise ValueError("len(y) must equal task.target_len")


@dataclass(frozen=True)
class Dataset:
    """An immutable, reproducible collection of examples for one task."""
    examples: Tuple[Example, ...]
    task: TaskSpec
    seed: int
    split: Split = Split.TRAIN

    def __post_init__(self):
        if not self.examples:
            raise ValueError("Dataset must contain at least one example")
        if any(e.task != self.task for e in self.examples):
            raise ValueError("All examples must share the dataset TaskSpec")

    @property
    def size(self) -> int:
        return len(self.examples)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)


class Vocabulary:
    """
    Frozen token table: four specials followed by the sorted integer values.

    Ids are stable: PAD=0, BOS=1, SEP=2, EOS=3, then values ascending.
    """

    SPECIALS = ("PAD", "BOS", "SEP", "EOS")
    PAD = 0
    BOS = 1
    SEP = 2
    EOS = 3

    def __init__(self, values: Sequence[int]):
        self._values: Tuple[int, ...] = tuple(sorted(set(int(v) for v in values)))
        offset = len(self.SPECIALS)
        self._ids: Dict[int, int] = {v: i + offset for i, v in enumerate(self._values)}

    @property
    def values(self) -> Tuple[int, ...]:
        return self._values

    @property
    def size(self) -> int:
        return len(self.SPECIALS) + len(self._values)

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._values == other._values

    def __hash__(self) -> int:
        return hash(self._values)

    def __repr__(self) -> str:
        return f"Vocabulary(values={list(self._values)})"

    def token_id(self, value: int) -> int:
        try:
            return self._ids[int(value)]
        except KeyError:
            raise VocabularyError(f"out-of-vocabulary value: {value}")

    def encode(self, values: Sequence[int]) -> List[int]:
        return [self.token_id(v) for v in values]

    def is_value_id(self, token_id: int) -> bool:
        return len(self.SPECIALS) <= token_id < self.size

    def value_of(self, token_id: int) -> int:
        if not self.is_value_id(token_id):
            raise VocabularyError(f"token id {token_id} is not a value token")
        return self._values[token_id - len(self.SPECIALS)]

    def to_dict(self) -> Dict[str, Any]:
        return {"specials": list(self.SPECIALS), "values": list(self._values)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Vocabulary":
        return cls(data["values"])


# ============================================================================
# Permutations
# ============================================================================

@dataclass(frozen=True)
class Permutation:
    """
    A bijection on target positions.

    map[k] is the forward-order position whose token is emitted at output
    slot k; the identity prints as [0, 1, ..., L-1].
    """
    map: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "map", tuple(int(v) for v in self.map))
        if not self.map:
            raise PermutationError("permutation must be non-empty")
        if sorted(self.map) != list(range(len(self.map))):
            raise PermutationError(f"not a bijection on 0..{len(self.map) - 1}: {list(self.map)}")

    def __len__(self) -> int:
        return len(self.map)

    def __getitem__(self, index: int) -> int:
        return self.map[index]

    def __str__(self) -> str:
        return "[" + ", ".join(str(v) for v in self.map) + "]"

    @property
    def is_identity(self) -> bool:
        return all(k == v for k, v in enumerate(self.map))

    def to_list(self) -> List[int]:
        return list(self.map)


@dataclass(frozen=True)
class PermutationSet:
    """Ordered candidate permutations; the position in `perms` is the stable id."""
    perms: Tuple[Permutation, ...]
    kind: PermSetKind = PermSetKind.EXPLICIT
    block_len: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "perms", tuple(self.perms))
        if not self.perms:
            raise PermutationError("permutation set must not be empty")
        length = len(self.perms[0])
        if any(len(p) != length for p in self.perms):
            raise PermutationError("all permutations in a set must share one length")
        if len(set(self.perms)) != len(self.perms):
            raise PermutationError("permutation set contains duplicates")
        if self.kind == PermSetKind.G and not self.perms[0].is_identity:
            raise PermutationError("id 0 of a G set must be the identity")

    def __len__(self) -> int:
        return len(self.perms)

    def __iter__(self) -> Iterator[Permutation]:
        return iter(self.perms)

    def __getitem__(self, perm_id: int) -> Permutation:
        return self.perms[perm_id]

    @property
    def length(self) -> int:
        return len(self.perms[0])

    def index_of(self, perm: Permutation) -> Optional[int]:
        try:
            return self.perms.index(perm)
        except ValueError:
            return None


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous half-open ranges covering 0..L-1 in order."""
    boundaries: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "boundaries", tuple((int(s), int(e)) for s, e in self.boundaries)
        )
        if not self.boundaries:
            raise PermutationError("partition needs at least one block")
        expected_start = 0
        for start, end in self.boundaries:
            if start != expected_start or end <= start:
                raise PermutationError(f"blocks are not contiguous: {self.boundaries}")
            expected_start = end

    @property
    def length(self) -> int:
        return self.boundaries[-1][1]

    @property
    def num_blocks(self) -> int:
        return len(self.boundaries)

    @property
    def sizes(self) -> List[int]:
        return [end - start for start, end in self.boundaries]


# ============================================================================
# Model and Training Configs
# ============================================================================

@dataclass
class ModelConfig:
    """Shape of the decoder-only transformer."""
    vocab_size: int
    max_seq_len: int
    n_layers: int = 2
    n_heads: int = 1
    d_emb: int = 128
    d_ffn: int = 512
    dropout: float = 0.1

    def __post_init__(self):
        """Validate configuration constraints."""
        if self.vocab_size < 1 or self.max_seq_len < 1:
            raise ConfigurationError("vocab_size and max_seq_len must be positive")
        if self.n_layers < 1 or self.n_heads < 1:
            raise ConfigurationError("n_layers and n_heads must be >= 1")
        if self.d_emb % self.n_heads != 0:
            raise ConfigurationError("d_emb must be divisible by n_heads")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigurationError("dropout must be in [0, 1)")

    @classmethod
    def desk(cls, vocab_size: int, max_seq_len: int) -> "ModelConfig":
        return cls(vocab_size=vocab_size, max_seq_len=max_seq_len)

    @classmethod
    def full(cls, vocab_size: int, max_seq_len: int) -> "ModelConfig":
        return cls(
            vocab_size=vocab_size,
            max_seq_len=max_seq_len,
            n_layers=6,
            n_heads=1,
            d_emb=512,
            d_ffn=2048,
            dropout=0.1,
        )


# subsample_per_perm value meaning "ceil(m / T) rows per permutation"
AUTO_SUBSAMPLE = 0


@dataclass
class TrainConfig:
    """Optimiser and loop settings shared by every training entry point."""
    epochs: int = 10
    batch_size: int = 128
    lr_init: float = 5.0e-5
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    eps: float = 1e-8
    seed: int = 0
    subsample_per_perm: Optional[int] = AUTO_SUBSAMPLE
    eval_batch_size: int = 512
    log_every: int = 50

    def __post_init__(self):
        """Validate configuration constraints."""
        self.betas = tuple(self.betas)
        if self.lr_init <= 0:
            raise ConfigurationError("lr_init must be > 0")
        if not all(0.0 < b < 1.0 for b in self.betas) or len(self.betas) != 2:
            raise ConfigurationError("betas must be two values in (0, 1)")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigurationError("batch sizes must be >= 1")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")
        if self.subsample_per_perm is not None and self.subsample_per_perm < 0:
            raise ConfigurationError("subsample_per_perm must be None, 0 (auto) or positive")

    @classmethod
    def desk(cls, epochs: int = 10, seed: int = 0) -> "TrainConfig":
        return cls(epochs=epochs, lr_init=1e-3, seed=seed)


@dataclass
class SoftPermConfig:
    """Settings for the soft-permutation baseline."""
    mode: SoftPermMode = SoftPermMode.JOINT
    normalization: Normalization = Normalization.SINKHORN
    sinkhorn_iters: int = 20
    tolerance: float = 1e-3
    entropy_weight: Optional[float] = None
    lr: float = 0.05
    init_scale: float = 0.01
    # Diagonal mass of the starting matrix; None starts from uniform
    identity_weight: Optional[float] = 0.9

    def __post_init__(self):
        if self.sinkhorn_iters < 1:
            raise ConfigurationError("sinkhorn_iters must be >= 1")
        if self.identity_weight is not None and not (0.0 < self.identity_weight < 1.0):
            raise ConfigurationError("identity_weight must be in (0, 1) or None")
        if self.lr <= 0:
            raise ConfigurationError("soft permutation lr must be > 0")
        if self.entropy_weight is not None and self.entropy_weight < 0:
            raise ConfigurationError("entropy_weight must be non-negative")


@dataclass
class TrainReport:
    """Record of one training run."""
    step_losses: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)
    epoch_val_losses: List[float] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    checkpoint_path: Optional[str] = None
    perm_loss_trace: Optional[Dict[int, List[float]]] = None
    stage2_entropy: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.step_losses)

    @property
    def final_loss(self) -> Optional[float]:
        return self.step_losses[-1] if self.step_losses else None


# ============================================================================
# Search Configs and Records
# ============================================================================

@dataclass(frozen=True)
class LossProfileEntry:
    perm_id: int
    permutation: Permutation
    loss: float


@dataclass
class LossProfile:
    """Validation losses per candidate after short mixed training, ascending."""
    entries: List[LossProfileEntry]
    epochs: int = 1
    snapshot: Optional[str] = None

    def __post_init__(self):
        if not self.entries:
            raise ValueError("LossProfile must contain at least one entry")
        if any(not math.isfinite(e.loss) for e in self.entries):
            raise ValueError("LossProfile losses must be finite")
        keys = [(e.loss, e.perm_id) for e in self.entries]
        if keys != sorted(keys):
            raise ValueError("LossProfile entries must be sorted by (loss, perm_id)")

    @property
    def winner(self) -> LossProfileEntry:
        return self.entries[0]

    def __len__(self) -> int:
        return len(self.entries)

    def rank_of(self, perm: Permutation) -> Optional[int]:
        """1-based rank of a permutation, or None if absent."""
        for rank, entry in enumerate(self.entries, start=1):
            if entry.permutation == perm:
                return rank
        return None


@dataclass
class GlobalSearchConfig:
    """Depth K of the block-level stage; the budget is T = (K + 1)!."""
    depth: int
    epochs: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError("depth K must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")

    @property
    def budget(self) -> int:
        return math.factorial(self.depth + 1)

    def keep_count(self, k: int) -> int:
        """Survivors after round k: floor(T / (k + 1)!)."""
        return self.budget // math.factorial(k + 1)


@dataclass
class LocalSearchConfig:
    """Block lengths swept by the intra-block stage."""
    min_block_len: int = 2
    max_block_len: Optional[int] = None
    factorial_cap: int = 5040
    epochs: int = 1

    def __post_init__(self):
        if self.min_block_len < 2:
            raise ConfigurationError("min_block_len must be >= 2")
        if self.max_block_len is not None and self.max_block_len < self.min_block_len:
            raise ConfigurationError("max_block_len must be >= min_block_len")
        if self.factorial_cap < 2:
            raise ConfigurationError("factorial_cap must be >= 2")

    def block_lengths(self, target_len: int) -> List[int]:
        upper = target_len // 2
        if self.max_block_len is not None:
            upper = min(upper, self.max_block_len)
        return list(range(self.min_block_len, upper + 1))


@dataclass
class EsConfig:
    """Evolutionary-strategy knobs."""
    population: int = 32
    crossover_prob: float = 0.9
    mutation_prob: float = 0.2
    generations: int = 20
    tournament_size: int = 3
    elitism_ratio: float = 0.1
    seed: int = 0
    fitness_epochs: int = 1

    def __post_init__(self):
        """Validate configuration constraints."""
        if self.population < 2:
            raise ConfigurationError("population must be >= 2")
        for name in ("crossover_prob", "mutation_prob", "elitism_ratio"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigurationError(f"{name} must be in [0, 1]")
        if not (1 <= self.tournament_size <= self.population):
            raise ConfigurationError("tournament_size must be in [1, population]")
        if self.generations < 0:
            raise ConfigurationError("generations must be >= 0")

    @property
    def elite_count(self) -> int:
        return int(math.ceil(self.elitism_ratio * self.population))


@dataclass(frozen=True)
class TraceEntry:
    """One profiled round; winner == compose(base, step)."""
    stage: str
    round: int
    candidate_count: int
    unique_count: int
    base: Permutation
    step: Permutation
    winner: Permutation
    loss: float


@dataclass
class SearchTrace:
    """Audit log of a hierarchical search."""
    entries: List[TraceEntry] = field(default_factory=list)
    final: Optional[Permutation] = None
    global_winner: Optional[Permutation] = None
    warnings: List[str] = field(default_factory=list)

    def extend(self, other: "SearchTrace") -> None:
        self.entries.extend(other.entries)
        self.warnings.extend(other.warnings)
        if other.global_winner is not None:
            self.global_winner = other.global_winner
        if other.final is not None:
            self.final = other.final


@dataclass
class BudgetSummary:
    """Exact candidate counts for a planned search."""
    global_rounds: List[int]
    final_profile: int
    local_rounds: List[Tuple[int, int, int]]
    skipped_block_lens: List[int] = field(default_factory=list)

    @property
    def global_total(self) -> int:
        return sum(self.global_rounds) + self.final_profile

    @property
    def local_total(self) -> int:
        return sum(intra + rotations for _, intra, rotations in self.local_rounds)

    @property
    def total(self) -> int:
        return self.global_total + self.local_total


# ============================================================================
# Evaluation Records
# ============================================================================

@dataclass
class EvalReport:
    """Exact-match success over an evaluation set."""
    success_rate: float
    passed: List[bool]
    transcripts: Optional[List[Tuple[List[int], List[int]]]] = None

    def __post_init__(self):
        """Validate result constraints."""
        if not (0.0 <= self.success_rate <= 1.0):
            raise ValueError("success_rate must be in [0, 1]")
        if self.passed and sum(self.passed) != round(self.success_rate * len(self.passed)):
            raise ValueError("success_rate must equal pass count / total")

    @property
    def total(self) -> int:
        return len(self.passed)

    @property
    def pass_count(self) -> int:
        return sum(self.passed)


@dataclass
class AttentionStats:
    """Mean attention entropy S per (layer, head) and overall."""
    per_head: Dict[Tuple[int, int], float]
    aggregate: float
    source: str = ""
    seq_len: int = 0


@dataclass(frozen=True)
class RankPoint:
    rank: int
    perm_id: int
    loss: float
    success: float


@dataclass
class RunManifest:
    """Everything needed to reproduce the numeric outputs of a run."""
    tool_version: str
    configs: Dict[str, Any] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    dataset_hashes: Dict[str, str] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)


@dataclass
class EsResult:
    """Outcome of an evolutionary search; history[g] is the best fitness so far."""
    best: Permutation
    best_fitness: float
    history: List[float]
    mean_history: List[float] = field(default_factory=list)
    evaluations: int = 0
