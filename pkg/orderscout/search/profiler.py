"""
Loss profiling: train one fresh model on the union of permuted datasets,
then rank every candidate by validation loss on the frozen snapshot.
"""

import logging
import math
from dataclasses import replace
from typing import Optional, Protocol, Sequence

from ..models import (
    BudgetSummary,
    ConfigurationError,
    Dataset,
    LocalSearchConfig,
    LossProfile,
    LossProfileEntry,
    ModelConfig,
    Permutation,
    PermutationError,
    TrainConfig,
    Vocabulary,
)
from ..permutation import block_rotations, fixed_size_blocks
from ..trainer import permutation_losses, train_mixed
from ..transformer import build_model, save_checkpoint

logger = logging.getLogger(__name__)


class Profiler(Protocol):
    def profile(
        self, candidates: Sequence[Permutation], epochs: Optional[int] = None
    ) -> LossProfile:
        """
        Train on the mixture of `candidates`, then rank them by validation loss.

        Candidates may repeat; every copy keeps its own id and is scored on
        the same snapshot.
        """
        epochs = epochs or self.epochs
        candidates = list(candidates)
        if not candidates:
            raise ConfigurationError("no candidates to profile")
        if any(len(p) != len(candidates[0]) for p in candidates):
            raise PermutationError("all candidates must share one length")

        model = build_model(self.model_config, seed=self.train_config.seed)
        train_mixed(
            model, self.train_set, candidates, self.vocab,
            replace(self.train_config, epochs=epochs),
        )
        losses = permutation_losses(
            model, self.val_set, candidates, self.vocab, self.train_config.eval_batch_size
        )

        snapshot = None
        if self.snapshot_dir:
            path = f"{self.snapshot_dir}/profile_{self.calls:03d}.pt"
            snapshot = str(save_checkpoint(model, self.vocab, path, self.train_set.task))

        self.calls += 1
        self.candidates_profiled += len(candidates)
        result = rank_losses(candidates, losses, epochs, snapshot)
        logger.info(
            f"Profiled {len(candidates)} candidates: winner id {result.winner.perm_id} "
            f"loss={result.winner.loss:.4f}"
        )
        return result


def profile(
    candidates: Sequence[Permutation],
    train_set: Dataset,
    val_set: Dataset,
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epochs: int = 1,
) -> LossProfile:
    """One-shot loss profile of `candidates`."""
    return LossProfiler(train_set, val_set, vocab, model_config, train_config, epochs).profile(
        candidates
    )


def count_candidates(
    length: int, depth: int, local_config: Optional[LocalSearchConfig] = None
) -> BudgetSummary:
    """
    Exact number of candidates a hierarchical search will build.

    Global round k profiles |P_k| * k! candidates with |P_1| = T = (K+1)!
    and |P_k| = floor(T / k!). Local sweep l profiles the intra-block
    permutations of every length-l block (remainder block included) and
    then floor(L / l) rotations.

    Example:
        >>> count_candidates(13, 6).global_rounds[0]
        5040
    """
    if depth < 1:
        raise ConfigurationError("depth K must be >= 1")
    local_config = local_config or LocalSearchConfig()
    budget = math.factorial(depth + 1)

    global_rounds = []
    for k in range(1, depth + 1):
        survivors = budget // math.factorial(k)
        global_rounds.append(survivors * math.factorial(k))
    remaining = budget // math.factorial(depth + 1)
    final_profile = remaining if remaining > 1 else 0

    local_rounds = []
    skipped = []
    for block_len in local_config.block_lengths(length):
        if math.factorial(block_len) > local_config.factorial_cap:
            skipped.append(block_len)
            continue
        partition = fixed_size_blocks(length, block_len)
        intra = sum(math.factorial(size) for size in partition.sizes)
        local_rounds.append((block_len, intra, len(block_rotations(length, block_len))))

    return BudgetSummary(
        global_rounds=global_rounds,
        final_profile=final_profile,
        local_rounds=local_rounds,
        skipped_block_lens=skipped,
    )

