"""
Training loops: single-order, mixed multi-order and soft-permutation.

All loops share one recipe: AdamW with a linearly decaying learning rate,
shuffled minibatches drawn from a seeded torch generator, and a TrainReport
recording every step.
"""

import logging
import math
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR

from .models import (
    AUTO_SUBSAMPLE,
    ConfigurationError,
    Dataset,
    Normalization,
    NumericOverflowError,
    Permutation,
    SoftPermConfig,
    SoftPermMode,
    TrainConfig,
    TrainingAbortedError,
    TrainReport,
    Vocabulary,
)
from .permutation import identity
from .transformer import (
    DecoderTransformer,
    EncodedBatch,
    concat_batches,
    encode_batch,
    encode_dataset,
    forward,
    save_checkpoint,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Optimiser and Schedule
# ============================================================================

def lr_at(step: int, total_steps: int, lr_init: float) -> float:
    """
    Linearly decayed learning rate: lr_init * (1 - step / total_steps).

    Example:
        >>> lr_at(50, 100, 5e-5)
        2.5e-05
    """
    if total_steps <= 0:
        raise ConfigurationError("total_steps must be > 0")
    if not (0 <= step <= total_steps):
        raise ConfigurationError(f"step must be in [0, {total_steps}], got {step}")
    return lr_init * (1.0 - step / total_steps)


def build_optimizer(
    model: nn.Module,
    config: TrainConfig,
    total_steps: int,
    extra_groups: Sequence[Dict] = (),
) -> Tuple[AdamW, LambdaLR]:
    """
    AdamW with weight decay on matrices only, plus the linear-decay schedule.

    Biases, layer-norm gains and other 1-d parameters are not decayed.
    """
    if total_steps <= 0:
        raise ConfigurationError("total_steps must be > 0")
    decay, no_decay = [], []
    for param in model.parameters():
        if not param.requires_grad:
            continue
        (decay if param.dim() >= 2 else no_decay).append(param)

    groups = [
        {"params": decay, "weight_decay": config.weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
        *extra_groups,
    ]
    optimizer = AdamW(groups, lr=config.lr_init, betas=config.betas, eps=config.eps)
    scheduler = LambdaLR(optimizer, lambda step: lr_at(min(step, total_steps), total_steps, 1.0))
    return optimizer, scheduler


def _shuffled_batches(
    n: int, batch_size: int, generator: torch.Generator
) -> List[torch.Tensor]:
    order = torch.randperm(n, generator=generator)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


# ============================================================================
# Core Loop
# ============================================================================

def _fit(
    model: DecoderTransformer,
    batch: EncodedBatch,
    config: TrainConfig,
    on_epoch_end=None,
    label: str = "train",
) -> TrainReport:
    """Run config.epochs of AdamW over `batch`, returning the step record."""
    report = TrainReport()
    started = time.perf_counter()
    total_steps = steps_per_epoch(len(batch), config.batch_size) * config.epochs
    optimizer, scheduler = build_optimizer(model, config, total_steps)

    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    step = 0
    for epoch in range(config.epochs):
        for index in _shuffled_batches(len(batch), config.batch_size, generator):
            lr = scheduler.get_last_lr()[0]
            try:
                output = forward(model, batch.select(index), train=True)
            except NumericOverflowError:
                report.wall_clock_seconds = time.perf_counter() - started
                raise TrainingAbortedError(
                    f"{label}: numeric overflow at step {step}", partial_report=report
                )
            optimizer.zero_grad(set_to_none=True)
            output.loss.backward()
            optimizer.step()
            scheduler.step()

            report.step_losses.append(float(output.loss.item()))
            report.learning_rates.append(lr)
            if config.log_every and step % config.log_every == 0:
                logger.debug(f"{label} step {step}/{total_steps}: loss={report.step_losses[-1]:.4f}")
            step += 1

        if on_epoch_end is not None:
            on_epoch_end(epoch, report)
        logger.info(
            f"{label} epoch {epoch + 1}/{config.epochs} done: "
            f"last loss={report.step_losses[-1]:.4f}"
        )

    report.wall_clock_seconds = time.perf_counter() - started
    return report


def train(
    model: DecoderTransformer,
    dataset: Dataset,
    perm: Permutation,
    vocab: Vocabulary,
    config: TrainConfig,
    validation: Optional[Dataset] = None,
    checkpoint_path: Optional[str] = None,
) -> TrainReport:
    """
    Train on targets reordered by `perm`.

    Returns:
        TrainReport with ceil(m / batch_size) * epochs steps

    Raises:
        TrainingAbortedError: On numeric overflow, with the partial report
    """
    batch = encode_dataset(dataset, perm, vocab)

    def record_validation(epoch: int, report: TrainReport) -> None:
        if validation is not None:
            report.epoch_val_losses.append(
                validation_loss(model, validation, perm, vocab, config.eval_batch_size)
            )

    report = _fit(model, batch, config, on_epoch_end=record_validation, label=f"train[{perm}]")
    if checkpoint_path:
        report.checkpoint_path = str(save_checkpoint(model, vocab, checkpoint_path, dataset.task))
    return report


def build_mixed_batch(
    dataset: Dataset,
    perm_set: Sequence[Permutation],
    vocab: Vocabulary,
    subsample_per_perm: Optional[int] = AUTO_SUBSAMPLE,
    seed: int = 0,
) -> EncodedBatch:
    """
    Union of the dataset encoded under every permutation, rows tagged by id.

    subsample_per_perm: None uses every row for every permutation, 0 takes
    ceil(m / T) rows per permutation, n takes n rows per permutation.
    """
    if len(perm_set) == 0:
        raise ConfigurationError("permutation set is empty")
    m = len(dataset)
    if subsample_per_perm is None:
        per_perm = m
    elif subsample_per_perm == AUTO_SUBSAMPLE:
        per_perm = math.ceil(m / len(perm_set))
    else:
        per_perm = min(subsample_per_perm, m)

    parts = []
    for perm_id, perm in enumerate(perm_set):
        if per_perm >= m:
            rows = dataset.examples
        else:
            picks = np.random.default_rng([seed, perm_id]).choice(m, size=per_perm, replace=False)
            rows = tuple(dataset.examples[int(i)] for i in sorted(picks))
        parts.append(encode_batch(rows, perm, vocab, perm_id))
    return concat_batches(parts)


def train_mixed(
    model: DecoderTransformer,
    dataset: Dataset,
    perm_set: Sequence[Permutation],
    vocab: Vocabulary,
    config: TrainConfig,
    validation: Optional[Dataset] = None,
    trace_perm_losses: bool = False,
) -> TrainReport:
    """
    Train one model on the shuffled union of all permuted copies of the data.

    With trace_perm_losses and a validation set, the per-permutation
    validation loss is recorded after every epoch.
    """
    if len(perm_set) == 0:
        raise ConfigurationError("permutation set is empty")
    batch = build_mixed_batch(dataset, perm_set, vocab, config.subsample_per_perm, config.seed)
    logger.info(f"Mixed dataset: {len(batch)} rows over T={len(perm_set)} permutations")

    trace: Optional[Dict[int, List[float]]] = (
        {i: [] for i in range(len(perm_set))} if trace_perm_losses and validation else None
    )

    def record_validation(epoch: int, report: TrainReport) -> None:
        if validation is None:
            return
        if trace is not None:
            losses = permutation_losses(model, validation, perm_set, vocab, config.eval_batch_size)
            for perm_id, loss in enumerate(losses):
                trace[perm_id].append(loss)
            report.epoch_val_losses.append(math.fsum(losses) / len(losses))
        else:
            report.epoch_val_losses.append(
                validation_loss(model, validation, perm_set[0], vocab, config.eval_batch_size)
            )

    report = _fit(model, batch, config, on_epoch_end=record_validation, label="train_mixed")
    report.perm_loss_trace = trace
    return report


# ============================================================================
# Validation Losses
# ============================================================================

@torch.no_grad()
def batch_row_losses(
    model: DecoderTransformer, batch: EncodedBatch, batch_size: int = 512
) -> np.ndarray:
    """Eval-mode per-row losses in row order, as float64."""
    losses = []
    for start in range(0, len(batch), batch_size):
        index = torch.arange(start, min(start + batch_size, len(batch)))
        output = forward(model, batch.select(index), train=False)
        losses.append(output.per_row_loss.to(torch.float64).cpu().numpy())
    return np.concatenate(losses)


def validation_loss(
    model: DecoderTransformer,
    dataset: Dataset,
    perm: Permutation,
    vocab: Vocabulary,
    batch_size: int = 512,
) -> float:
    """Mean per-row loss with dropout off; summed in fixed row order."""
    rows = batch_row_losses(model, encode_dataset(dataset, perm, vocab), batch_size)
    return math.fsum(rows.tolist()) / len(rows)


def permutation_losses(
    model: DecoderTransformer,
    dataset: Dataset,
    perm_set: Sequence[Permutation],
    vocab: Vocabulary,
    batch_size: int = 512,
) -> List[float]:
    """Validation loss of every candidate on a frozen snapshot, in id order."""
    return [validation_loss(model, dataset, perm, vocab, batch_size) for perm in perm_set]


# ============================================================================
# Soft Permutation
# ============================================================================

def sinkhorn(log_alpha: torch.Tensor, iters: int) -> torch.Tensor:
    """Log-space Sinkhorn normalisation; the last pass normalises rows."""
    for _ in range(iters):
        log_alpha = log_alpha - torch.logsumexp(log_alpha, dim=0, keepdim=True)
        log_alpha = log_alpha - torch.logsumexp(log_alpha, dim=1, keepdim=True)
    return log_alpha.exp()


def initial_logits(length: int, identity_weight: Optional[float]) -> torch.Tensor:
    """
    Log of the doubly stochastic matrix w*I + (1 - w)/(L - 1) off the diagonal.

    None gives all-zero logits, i.e. the uniform matrix.

    Example:
        >>> initial_logits(3, 0.8).exp()
        tensor([[0.8000, 0.1000, 0.1000],
                [0.1000, 0.8000, 0.1000],
                [0.1000, 0.1000, 0.8000]])
    """
    if identity_weight is None or length == 1:
        return torch.zeros(length, length)
    off = (1.0 - identity_weight) / (length - 1)
    eye = torch.eye(length)
    return torch.log(eye * identity_weight + (1.0 - eye) * off)


class SoftPermutation(nn.Module):
    """
    Learnable relaxation of a permutation matrix.

    matrix()[k, s] is the weight of forward position s at output slot k.
    Rows are probability vectors; with Sinkhorn the columns are too, up to
    the configured tolerance.
    """

    def __init__(
        self,
        length: int,
        config: SoftPermConfig,
        frozen_identity: bool = False,
        seed: int = 0,
    ):
        super().__init__()
        self.length = length
        self.config = config
        self.frozen_identity = frozen_identity
        if frozen_identity:
            self.register_buffer("logits", torch.zeros(length, length))
        else:
            generator = torch.Generator().manual_seed(seed)
            noise = torch.randn(length, length, generator=generator) * config.init_scale
            self.logits = nn.Parameter(initial_logits(length, config.identity_weight) + noise)

    def matrix(self) -> torch.Tensor:
        if self.frozen_identity:
            return torch.eye(self.length, dtype=self.logits.dtype, device=self.logits.device)
        if self.config.normalization == Normalization.ROW_SOFTMAX:
            return torch.softmax(self.logits, dim=1)
        return sinkhorn(self.logits, self.config.sinkhorn_iters)

    def column_error(self) -> float:
        with torch.no_grad():
            return float((self.matrix().sum(dim=0) - 1.0).abs().max().item())

    def row_entropies(self) -> torch.Tensor:
        with torch.no_grad():
            m = self.matrix().clamp_min(1e-12)
            return -(m * m.log()).sum(dim=1)


def _mixed_targets(
    model: DecoderTransformer,
    batch: EncodedBatch,
    soft: SoftPermutation,
    detach: bool = False,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Target distributions and input embeddings mixed by the soft matrix."""
    start, end = batch.target_start, batch.target_start + batch.target_len
    target_ids = batch.tokens[:, start:end]
    weights = soft.matrix()
    if detach:
        weights = weights.detach()
    one_hot = F.one_hot(target_ids, model.config.vocab_size).to(weights.dtype)
    probs = torch.einsum("ks,bsv->bkv", weights, one_hot)
    embeddings = torch.einsum("ks,bsd->bkd", weights, model.tok_emb(target_ids))
    return probs, embeddings


def attention_entropy(attentions: Sequence[torch.Tensor]) -> torch.Tensor:
    """
    Mean sparsity S = -(1/L') sum_ij a_ij ln a_ij, averaged over layers,
    heads and rows; differentiable.
    """
    values = []
    for attention in attentions:
        seq_len = attention.shape[-1]
        plogp = torch.where(attention > 0, attention * attention.clamp_min(1e-30).log(),
                            torch.zeros_like(attention))
        values.append(-plogp.sum(dim=(-1, -2)) / seq_len)
    return torch.stack(values).mean()


def train_soft_perm(
    model: DecoderTransformer,
    dataset: Dataset,
    vocab: Vocabulary,
    config: TrainConfig,
    soft_config: Optional[SoftPermConfig] = None,
    frozen_identity: bool = False,
) -> Tuple[TrainReport, SoftPermutation]:
    """
    Learn model parameters together with a soft permutation of the targets.

    Joint mode backpropagates the mixed-target loss into both. Alternating
    mode updates the model on that loss with the matrix held fixed, then
    updates the matrix alone to lower the attention entropy, every step.
    """
    soft_config = soft_config or SoftPermConfig()
    length = dataset.task.target_len
    soft = SoftPermutation(length, soft_config, frozen_identity=frozen_identity, seed=config.seed)
    batch = encode_dataset(dataset, identity(length), vocab)

    total_steps = steps_per_epoch(len(batch), config.batch_size) * config.epochs
    joint = soft_config.mode == SoftPermMode.JOINT
    extra = []
    if joint and not frozen_identity:
        extra = [{"params": [soft.logits], "weight_decay": 0.0, "lr": soft_config.lr}]
    optimizer, scheduler = build_optimizer(model, config, total_steps, extra_groups=extra)
    perm_optimizer = None
    if not joint and not frozen_identity:
        perm_optimizer = torch.optim.Adam([soft.logits], lr=soft_config.lr)

    report = TrainReport()
    started = time.perf_counter()
    warned = False
    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    step = 0
    for epoch in range(config.epochs):
        for index in _shuffled_batches(len(batch), config.batch_size, generator):
            minibatch = batch.select(index)
            lr = scheduler.get_last_lr()[0]

            probs, embeddings = _mixed_targets(model, minibatch, soft, detach=not joint)
            try:
                output = forward(model, minibatch, train=True,
                                 target_probs=probs, target_embeddings=embeddings)
            except NumericOverflowError:
                report.wall_clock_seconds = time.perf_counter() - started
                raise TrainingAbortedError(
                    f"soft permutation: numeric overflow at step {step}", partial_report=report
                )
            loss = output.loss
            if joint and soft_config.entropy_weight and not frozen_identity:
                rows = soft.matrix().clamp_min(1e-12)
                loss = loss + soft_config.entropy_weight * -(rows * rows.log()).sum(1).mean()

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            scheduler.step()
            report.step_losses.append(float(output.loss.item()))
            report.learning_rates.append(lr)

            if perm_optimizer is not None:
                report.stage2_entropy.append(
                    _entropy_step(model, minibatch, soft, perm_optimizer)
                )

            if (soft_config.normalization == Normalization.SINKHORN and not frozen_identity
                    and not warned and soft.column_error() > soft_config.tolerance):
                message = (
                    f"Sinkhorn did not converge within {soft_config.sinkhorn_iters} iterations "
                    f"(column error {soft.column_error():.2e}) at step {step}"
                )
                logger.warning(message)
                report.warnings.append(message)
                warned = True
            step += 1

        logger.info(
            f"soft permutation epoch {epoch + 1}/{config.epochs}: "
            f"loss={report.step_losses[-1]:.4f}"
        )

    report.wall_clock_seconds = time.perf_counter() - started
    return report, soft


def _entropy_step(
    model: DecoderTransformer,
    batch: EncodedBatch,
    soft: SoftPermutation,
    perm_optimizer: torch.optim.Optimizer,
) -> float:
    """One update of the soft matrix on attention entropy; model weights stay put."""
    for param in model.parameters():
        param.requires_grad_(False)
    try:
        model.eval()
        _, embeddings = _mixed_targets(model, batch, soft)
        _, attentions = model(batch.tokens, input_embeddings=_splice(model, batch, embeddings))
        objective = attention_entropy(attentions)
        perm_optimizer.zero_grad(set_to_none=True)
        objective.backward()
        perm_optimizer.step()
    finally:
        for param in model.parameters():
            param.requires_grad_(True)
    return float(objective.item())


def _splice(model: DecoderTransformer, batch: EncodedBatch, target_embeddings: torch.Tensor) -> torch.Tensor:
    embeddings = model.tok_emb(batch.tokens)
    start, end = batch.target_start, batch.target_start + batch.target_len
    return torch.cat([embeddings[:, :start], target_embeddings, embeddings[:, end:]], dim=1)


@torch.no_grad()
def fixed_order_entropy(
    model: DecoderTransformer,
    dataset: Dataset,
    perm: Permutation,
    vocab: Vocabulary,
    rows: int = 64,
) -> float:
    """The attention-entropy objective evaluated on a fixed hard order."""
    batch = encode_batch(dataset.examples[:rows], perm, vocab)
    output = forward(model, batch, train=False, capture_attention=True)
    return float(attention_entropy(output.attentions).item())
