"""
Task generators and exact oracles for the order-sensitive arithmetic tasks.

Each generator maps an input sequence to its forward-order target. Datasets
are sampled with one seeded numpy stream per example index, so any example
can be regenerated on its own and generation order never matters.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .models import (
    Dataset,
    Example,
    Split,
    TaskKind,
    TaskSpec,
    TaskInputError,
    ConfigurationError,
    Vocabulary,
)

logger = logging.getLogger(__name__)

SQUARE_MODULUS = 19

DEFAULT_TRAIN_SEED = 42
DEFAULT_VALIDATION_SEED = 7
DEFAULT_EVAL_SEED = 123
DEFAULT_EVAL_SIZE = 1000


# ============================================================================
# Oracles
# ============================================================================

def smod19(z: int) -> int:
    """Symmetric residue of z modulo 19, in {-9, ..., 9}."""
    return ((z + 9) % SQUARE_MODULUS) - 9


def gen_relu(x: Sequence[int]) -> List[int]:
    """
    Running rectified sum: y1 = x1, yi = max(xi + y(i-1), 0).

    Example:
        >>> gen_relu([4, -7, -7, -3, 8])
        [4, 0, 0, 0, 8]
    """
    if len(x) == 0:
        raise TaskInputError("empty input sequence")
    y = [int(x[0])]
    for value in x[1:]:
        y.append(max(int(value) + y[-1], 0))
    return y


def gen_square19(x: Sequence[int]) -> List[int]:
    """
    Squared accumulation modulo 19: y1 = x1, yi = smod19(xi^2 + y(i-1)^2).

    Example:
        >>> gen_square19([7, -2, 4, 1, 3])
        [7, -4, -6, -1, -9]
    """
    if len(x) == 0:
        raise TaskInputError("empty input sequence")
    y = [int(x[0])]
    for value in x[1:]:
        y.append(smod19(int(value) ** 2 + y[-1] ** 2))
    return y


def gen_index(x: Sequence[int], d: int) -> List[int]:
    """
    Pointer recurrence: y1 = x1; yi = x[p] with p the sum of the last
    min(d, i-1) outputs modulo L (0-based into x).

    Example:
        >>> gen_index([1, 0, 3, 2, 4], d=2)
        [1, 0, 0, 1, 0]
    """
    length = len(x)
    if length == 0:
        raise TaskInputError("empty input sequence")
    if not (1 <= d <= length):
        raise TaskInputError(f"window must satisfy 1 <= d <= {length}, got {d}")
    if any(not (0 <= int(v) < length) for v in x):
        raise TaskInputError("index task input out of range")

    y = [int(x[0])]
    for i in range(1, length):
        history = y[max(0, i - d):i]
        pointer = sum(history) % length
        y.append(int(x[pointer]))
    return y


def gen_prod(a: Sequence[int], b: Sequence[int]) -> List[int]:
    """
    Digits of a*b, least significant first, zero-padded to 2 * len(a).

    Operands are most-significant-first, zero-padded digit lists.

    Example:
        >>> gen_prod([0, 0, 2, 0, 3], [0, 2, 6, 3, 7])
        [1, 1, 3, 5, 3, 5, 0, 0, 0, 0]
    """
    if len(a) == 0 or len(a) != len(b):
        raise TaskInputError("prod operands must be non-empty and equally wide")
    for digit in list(a) + list(b):
        if isinstance(digit, bool) or int(digit) != digit or not (0 <= int(digit) <= 9):
            raise TaskInputError(f"non-digit input: {digit}")

    product = digits_to_int(a) * digits_to_int(b)
    width = 2 * len(a)
    return [(product // 10 ** k) % 10 for k in range(width)]


def digits_to_int(digits: Sequence[int]) -> int:
    value = 0
    for digit in digits:
        value = value * 10 + int(digit)
    return value


def int_to_digits(value: int, width: int) -> List[int]:
    """Most-significant-first, zero-padded digits of a non-negative integer."""
    if value < 0 or value >= 10 ** width:
        raise TaskInputError(f"{value} does not fit in {width} digits")
    return [(value // 10 ** k) % 10 for k in reversed(range(width))]


def compute_target(task: TaskSpec, x: Sequence[int]) -> List[int]:
    """Run the oracle matching `task` on x."""
    if task.kind == TaskKind.RELU:
        return gen_relu(x)
    if task.kind == TaskKind.SQUARE19:
        return gen_square19(x)
    if task.kind == TaskKind.INDEX:
        return gen_index(x, task.window)
    if task.kind == TaskKind.PROD:
        n = task.operand_digits
        if len(x) != 2 * n:
            raise TaskInputError(f"prod input must hold two {n}-digit operands")
        return gen_prod(x[:n], x[n:])
    raise ConfigurationError(f"Unknown task kind: {task.kind}")


def verify_example(example: Example) -> bool:
    """True when re-running the oracle on x reproduces y."""
    return tuple(compute_target(example.task, example.x)) == tuple(example.y)


# ============================================================================
# Dataset Generation
# ============================================================================

def _example_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def sample_input(task: TaskSpec, rng: np.random.Generator) -> List[int]:
    """Draw one input sequence uniformly from the task's bounds."""
    if task.kind == TaskKind.PROD:
        # uniform digits == uniform operand over [0, 10^n)
        return [int(v) for v in rng.integers(0, 10, size=task.input_len)]
    values = rng.integers(task.input_low, task.input_high + 1, size=task.input_len)
    return [int(v) for v in values]


def gen_dataset(
    spec: TaskSpec,
    size: int,
    seed: int,
    split: Split = Split.TRAIN,
) -> Dataset:
    """
    Sample `size` examples i.i.d. and label them with the task oracle.

    Identical (spec, size, seed) always produce identical datasets.

    Example:
        >>> ds = gen_dataset(TaskSpec.relu(5), size=3, seed=42)
        >>> ds == gen_dataset(TaskSpec.relu(5), size=3, seed=42)
        True
    """
    if size < 1:
        raise ConfigurationError("dataset size must be >= 1")

    examples = []
    for index in range(size):
        x = sample_input(spec, _example_rng(seed, index))
        y = compute_target(spec, x)
        examples.append(Example(x=tuple(x), y=tuple(y), task=spec))

    logger.debug(f"Generated {size} {spec.kind.value} examples (L={spec.target_len}, seed={seed})")
    return Dataset(examples=tuple(examples), task=spec, seed=seed, split=split)


def gen_splits(
    spec: TaskSpec,
    train_size: int,
    validation_size: int = DEFAULT_EVAL_SIZE,
    eval_size: int = DEFAULT_EVAL_SIZE,
    train_seed: int = DEFAULT_TRAIN_SEED,
    validation_seed: int = DEFAULT_VALIDATION_SEED,
    eval_seed: int = DEFAULT_EVAL_SEED,
) -> Tuple[Dataset, Dataset, Dataset]:
    """Build train / validation / eval sets with pairwise distinct seeds."""
    if len({train_seed, validation_seed, eval_seed}) != 3:
        raise ConfigurationError("train, validation and eval seeds must differ")
    return (
        gen_dataset(spec, train_size, train_seed, Split.TRAIN),
        gen_dataset(spec, validation_size, validation_seed, Split.VALIDATION),
        gen_dataset(spec, eval_size, eval_seed, Split.EVAL),
    )


def build_vocab(datasets: Iterable[Dataset]) -> Vocabulary:
    """
    Collect every integer occurring in any x or y into a frozen vocabulary.

    Prod vocabularies always contain all ten digits so that unseen products
    stay encodable.
    """
    datasets = list(datasets)
    if not datasets:
        raise ConfigurationError("build_vocab needs at least one dataset")

    values = set()
    for dataset in datasets:
        if dataset.task.kind == TaskKind.PROD:
            values.update(range(10))
        for example in dataset.examples:
            values.update(example.x)
            values.update(example.y)
    return Vocabulary(sorted(values))


# ============================================================================
# Serialization
# ============================================================================

def dataset_to_jsonl(dataset: Dataset) -> str:
    lines = [
        json.dumps({"x": list(e.x), "y": list(e.y)}, separators=(",", ":"))
        for e in dataset.examples
    ]
    return "\n".join(lines) + "\n"


def dataset_hash(dataset: Dataset) -> str:
    """sha256 of the dataset's JSON-lines bytes."""
    return hashlib.sha256(dataset_to_jsonl(dataset).encode("utf-8")).hexdigest()


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save_dataset(dataset: Dataset, path: str, vocab: Optional[Vocabulary] = None) -> Path:
    """
    Write a dataset as JSON lines plus a `<path>.meta.json` sidecar.

    Returns:
        Path of the JSON-lines file
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dataset_to_jsonl(dataset), encoding="utf-8")

    meta = {
        "task": dataset.task.to_dict(),
        "seed": dataset.seed,
        "size": dataset.size,
        "split": dataset.split.value,
        "sha256": dataset_hash(dataset),
        "vocab": (vocab or build_vocab([dataset])).to_dict(),
    }
    _meta_path(out).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    logger.info(f"Wrote {dataset.size} examples to {out}")
    return out


def load_dataset(path: str) -> Tuple[Dataset, Vocabulary]:
    """
    Read a dataset written by save_dataset; every example is re-verified.

    Raises:
        ConfigurationError: If the file or its sidecar is missing
        TaskInputError: If a stored target disagrees with the oracle
    """
    src = Path(path)
    if not src.exists() or not _meta_path(src).exists():
        raise ConfigurationError(f"dataset or its .meta.json sidecar not found: {src}")
    meta = json.loads(_meta_path(src).read_text(encoding="utf-8"))
    task = TaskSpec.from_dict(meta["task"])

    examples = []
    with src.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            example = Example(x=tuple(record["x"]), y=tuple(record["y"]), task=task)
            if not verify_example(example):
                raise TaskInputError(f"{src}:{line_number}: target does not match the oracle")
            examples.append(example)

    dataset = Dataset(
        examples=tuple(examples),
        task=task,
        seed=int(meta["seed"]),
        split=Split(meta["split"]),
    )
    return dataset, Vocabulary.from_dict(meta["vocab"])
