"""
Evaluation and diagnostics: exact-match success, attention sparsity,
rank-vs-success retraining sweeps, the Prod digit grid and length sweeps.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .models import (
    AttentionStats,
    ConfigurationError,
    Dataset,
    EvalReport,
    InvalidCaptureError,
    LossProfile,
    ModelConfig,
    Permutation,
    RankPoint,
    TaskKind,
    TaskSpec,
    TrainConfig,
    TrainReport,
    Vocabulary,
)
from .permutation import apply, identity, reverse
from .taskgen import build_vocab, gen_prod, gen_splits, int_to_digits
from .trainer import train
from .transformer import (
    AttentionCapture,
    DecoderTransformer,
    build_model,
    capture_batch,
    encode_batch,
    generate_batch,
    model_config_for,
)

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-4
DEFAULT_CAPTURE_ROWS = 64


# ============================================================================
# Success Rate
# ============================================================================

def eval_success(
    model: DecoderTransformer,
    eval_set: Dataset,
    perm: Permutation,
    vocab: Vocabulary,
    keep_transcripts: bool = False,
    batch_size: int = 256,
) -> EvalReport:
    """
    Greedy-decode every example and compare with apply(perm, y) token for token.

    Early EOS and wrong lengths count as failures.
    """
    task = eval_set.task
    passed: List[bool] = []
    transcripts: List[Tuple[List[int], List[int]]] = []
    examples = eval_set.examples
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        decoded = generate_batch(model, [e.x for e in chunk], task, vocab)
        for example, output in zip(chunk, decoded):
            expected = apply(perm, list(example.y))
            passed.append(output == expected)
            if keep_transcripts:
                transcripts.append((output, expected))

    report = EvalReport(
        success_rate=sum(passed) / len(passed),
        passed=passed,
        transcripts=transcripts if keep_transcripts else None,
    )
    logger.info(f"Success {report.pass_count}/{report.total} = {report.success_rate:.3f} under {perm}")
    return report


def retrain_and_evaluate(
    perm: Permutation,
    train_set: Dataset,
    eval_set: Dataset,
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
    validation: Optional[Dataset] = None,
) -> Tuple[EvalReport, TrainReport, DecoderTransformer]:
    """Train a fresh model on one order and measure its success rate."""
    model = build_model(model_config, seed=train_config.seed)
    report = train(model, train_set, perm, vocab, train_config, validation=validation)
    return eval_success(model, eval_set, perm, vocab), report, model


# ============================================================================
# Attention
# ============================================================================

def capture_attention(
    model: DecoderTransformer,
    dataset: Dataset,
    perm: Permutation,
    vocab: Vocabulary,
    rows: int = DEFAULT_CAPTURE_ROWS,
) -> AttentionCapture:
    """Attention maps of the first `rows` examples encoded under `perm`."""
    if rows < 1:
        raise ConfigurationError("rows must be >= 1")
    batch = encode_batch(dataset.examples[:rows], perm, vocab)
    source = f"{dataset.task.kind.value} L={dataset.task.target_len} order={perm}"
    return capture_batch(model, batch, source=source)


def _row_entropy_mean(maps: np.ndarray) -> float:
    """-(1/L') sum_ij a_ij ln a_ij per map, averaged over maps; 0 ln 0 = 0."""
    positive = np.where(maps > 0, maps, 1.0)
    plogp = np.where(maps > 0, maps * np.log(positive), 0.0)
    seq_len = maps.shape[-1]
    per_map = -plogp.sum(axis=(-1, -2)) / seq_len
    return float(np.mean(per_map))


def attention_sparsity(
    capture: AttentionCapture,
    layer: Optional[int] = None,
    head: Optional[int] = None,
) -> AttentionStats:
    """
    Mean attention entropy S per (layer, head) and overall.

    Raises:
        InvalidCaptureError: If a row is not a probability vector
    """
    maps = np.asarray(capture.maps, dtype=np.float64)
    if maps.ndim != 5:
        raise InvalidCaptureError("invalid attention capture: expected [layers, heads, rows, L', L']")
    if np.any(maps < -ROW_SUM_TOLERANCE) or np.any(maps > 1 + ROW_SUM_TOLERANCE):
        raise InvalidCaptureError("invalid attention capture: entries outside [0, 1]")
    if np.any(np.abs(maps.sum(axis=-1) - 1.0) > ROW_SUM_TOLERANCE):
        raise InvalidCaptureError("invalid attention capture: row not normalized")

    per_head: Dict[Tuple[int, int], float] = {}
    for li in range(maps.shape[0]):
        if layer is not None and li != layer:
            continue
        for hi in range(maps.shape[1]):
            if head is not None and hi != head:
                continue
            per_head[(li, hi)] = _row_entropy_mean(maps[li, hi])
    if not per_head:
        raise ConfigurationError(f"no attention head matches layer={layer} head={head}")

    aggregate = math.fsum(per_head.values()) / len(per_head)
    return AttentionStats(
        per_head=per_head, aggregate=aggregate, source=capture.source, seq_len=capture.seq_len
    )


def export_attention_csv(capture: AttentionCapture, out_dir: str) -> List[Path]:
    """One CSV per (layer, head): the attention map averaged over captured rows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for li in range(capture.num_layers):
        for hi in range(capture.num_heads):
            path = out / f"attention_layer{li}_head{hi}.csv"
            np.savetxt(path, capture.head(li, hi).mean(axis=0), delimiter=",", fmt="%.8f")
            paths.append(path)
    return paths


# ============================================================================
# Sweeps
# ============================================================================

def rank_retrain_sweep(
    profile: LossProfile,
    train_set: Dataset,
    eval_set: Dataset,
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
    ranks: Optional[Sequence[int]] = None,
) -> List[RankPoint]:
    """
    Retrain from scratch on each ranked permutation and record its success.

    ranks: 1-based ranks to retrain; defaults to every entry.
    """
    ranks = list(ranks) if ranks is not None else list(range(1, len(profile) + 1))
    points = []
    for rank in ranks:
        if not (1 <= rank <= len(profile)):
            raise ConfigurationError(f"rank {rank} outside 1..{len(profile)}")
        entry = profile.entries[rank - 1]
        report, _, _ = retrain_and_evaluate(
            entry.permutation, train_set, eval_set, vocab, model_config, train_config
        )
        points.append(RankPoint(rank, entry.perm_id, entry.loss, report.success_rate))
        logger.info(f"rank {rank} (id {entry.perm_id}): success {report.success_rate:.3f}")
    return points


def _digit_operand(digits: int, rng: np.random.Generator) -> int:
    low = 0 if digits == 1 else 10 ** (digits - 1)
    return int(rng.integers(low, 10 ** digits))


def prod_digit_grid(
    model: DecoderTransformer,
    task: TaskSpec,
    vocab: Vocabulary,
    samples_per_cell: int,
    max_digits: Optional[int] = None,
    perm: Optional[Permutation] = None,
    seed: int = 0,
    zero_operands: bool = False,
) -> np.ndarray:
    """
    Success matrix over operand digit counts for a Prod model.

    Cell (i-1, j-1) holds the success rate on products of an i-digit and a
    j-digit operand, zero-padded to the trained width. With zero_operands
    every operand is zero.

    Raises:
        ConfigurationError: For non-Prod tasks, digit counts beyond the
            trained padding, or samples_per_cell < 1
    """
    if task.kind != TaskKind.PROD:
        raise ConfigurationError("digit grid requires a prod task")
    if samples_per_cell < 1:
        raise ConfigurationError("samples_per_cell must be >= 1")
    width = task.operand_digits
    max_digits = max_digits or width
    if max_digits > width:
        raise ConfigurationError(f"{max_digits} digits exceed the trained padding of {width}")
    perm = perm or identity(task.target_len)

    grid = np.zeros((max_digits, max_digits))
    for i in range(1, max_digits + 1):
        for j in range(1, max_digits + 1):
            rng = np.random.default_rng([seed, i, j])
            inputs, targets = [], []
            for _ in range(samples_per_cell):
                a = 0 if zero_operands else _digit_operand(i, rng)
                b = 0 if zero_operands else _digit_operand(j, rng)
                a_digits, b_digits = int_to_digits(a, width), int_to_digits(b, width)
                inputs.append(a_digits + b_digits)
                targets.append(apply(perm, gen_prod(a_digits, b_digits)))
            decoded = generate_batch(model, inputs, task, vocab)
            grid[i - 1, j - 1] = sum(d == t for d, t in zip(decoded, targets)) / samples_per_cell
    return grid


def _task_for(kind: TaskKind, length: int, window: int) -> TaskSpec:
    if kind == TaskKind.INDEX:
        return TaskSpec.index(length, min(window, length))
    if kind == TaskKind.PROD:
        if length % 2:
            raise ConfigurationError("prod lengths must be even")
        return TaskSpec.prod(length // 2)
    return TaskSpec(kind, length)


def length_sweep(
    kind: TaskKind,
    lengths: Sequence[int],
    train_config: TrainConfig,
    orders: Optional[Dict[str, Callable[[int], Permutation]]] = None,
    train_size: int = 5000,
    eval_size: int = 500,
    window: int = 2,
    model_preset: str = "desk",
) -> Dict[str, List[Tuple[int, float]]]:
    """
    Success rate versus target length for named orders.

    orders maps a name to a builder L -> Permutation; defaults to the
    forward and reverse orders.
    """
    orders = orders or {"forward": identity, "reverse": reverse}
    curves: Dict[str, List[Tuple[int, float]]] = {name: [] for name in orders}
    for length in lengths:
        task = _task_for(kind, length, window)
        train_set, val_set, eval_set = gen_splits(task, train_size, eval_size, eval_size)
        vocab = build_vocab([train_set, val_set, eval_set])
        model_config = model_config_for(task, vocab, model_preset)
        for name, builder in orders.items():
            report, _, _ = retrain_and_evaluate(
                builder(length), train_set, eval_set, vocab, model_config, train_config
            )
            curves[name].append((length, report.success_rate))
            logger.info(f"length sweep {kind.value} L={length} {name}: {report.success_rate:.3f}")
    return curves
