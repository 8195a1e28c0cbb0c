"""
Two-stage hierarchical permutation search.

The global stage stacks whole-block rearrangements on the surviving
candidates for k = 1..K blocks and prunes to floor(T / (k+1)!) after each
round. The local stage then refines the winner inside fixed-length blocks
and tries cyclic block rotations, for block lengths l = 2..floor(L/2).
"""

import logging
import math
from typing import Dict, List, Sequence, Tuple

from ..models import (
    GlobalSearchConfig,
    LocalSearchConfig,
    LossProfile,
    Permutation,
    SearchError,
    SearchTrace,
    TraceEntry,
)
from ..permutation import (
    block_perms,
    block_rotations,
    compose,
    fixed_size_blocks,
    identity,
    intra_block_perms,
    split_blocks,
)
from .profiler import Profiler

logger = logging.getLogger(__name__)

Origin = Tuple[Permutation, Permutation]


def _expand(
    bases: Sequence[Permutation], steps: Sequence[Permutation]
) -> Tuple[List[Permutation], Dict[Permutation, Origin], int]:
    """compose(base, step) for every pair, de-duplicated in build order."""
    origins: Dict[Permutation, Origin] = {}
    built = 0
    for base in bases:
        for step in steps:
            built += 1
            candidate = compose(base, step)
            origins.setdefault(candidate, (base, step))
    return list(origins), origins, built


def _profile_round(
    profiler: Profiler,
    stage: str,
    round_index: int,
    bases: Sequence[Permutation],
    steps: Sequence[Permutation],
    epochs: int,
) -> Tuple[LossProfile, TraceEntry]:
    candidates, origins, built = _expand(bases, steps)
    result = profiler.profile(candidates, epochs=epochs)
    winner = result.winner.permutation
    base, step = origins[winner]
    entry = TraceEntry(
        stage=stage,
        round=round_index,
        candidate_count=built,
        unique_count=len(candidates),
        base=base,
        step=step,
        winner=winner,
        loss=result.winner.loss,
    )
    logger.info(
        f"{stage} round {round_index}: {built} built / {len(candidates)} unique, "
        f"winner {winner} loss={result.winner.loss:.4f}"
    )
    return result, entry


def intra_block_candidates(length: int, block_len: int, cap: int) -> List[Permutation]:
    """Steps permuting one length-l block at a time, remainder block included."""
    partition = fixed_size_blocks(length, block_len)
    steps: List[Permutation] = []
    for index in range(partition.num_blocks):
        steps.extend(intra_block_perms(partition, index, cap))
    return steps


def global_stage(
    initial: Sequence[Permutation],
    config: GlobalSearchConfig,
    profiler: Profiler,
) -> Tuple[Permutation, SearchTrace]:
    """
    Block-level search over depths k = 1..K.

    Returns:
        (P_g, trace)

    Raises:
        SearchError: If a keep count reaches zero or K exceeds L
    """
    initial = list(initial)
    if not initial:
        raise SearchError("initial candidate set is empty")
    length = len(initial[0])
    budget = len(initial)
    trace = SearchTrace()
    if budget != config.budget:
        message = f"initial set has {budget} members; depth K={config.depth} expects T={config.budget}"
        logger.warning(message)
        trace.warnings.append(message)
    if config.depth > length:
        raise SearchError(f"depth K={config.depth} exceeds target length {length}")

    survivors = initial
    for k in range(1, config.depth + 1):
        keep = budget // math.factorial(k + 1)
        if keep == 0:
            raise SearchError("depth too large for budget")
        steps = block_perms(split_blocks(length, k), cap=math.factorial(k))
        result, entry = _profile_round(profiler, "global", k, survivors, steps, config.epochs)
        trace.entries.append(entry)
        survivors = [e.permutation for e in result.entries[:keep]]

    if len(survivors) > 1:
        result = profiler.profile(survivors, epochs=config.epochs)
        winner = result.winner.permutation
        trace.entries.append(TraceEntry(
            stage="global", round=config.depth + 1,
            candidate_count=len(survivors), unique_count=len(survivors),
            base=winner, step=identity(length), winner=winner,
            loss=result.winner.loss,
        ))
    else:
        winner = survivors[0]

    trace.global_winner = winner
    trace.final = winner
    return winner, trace


def local_stage(
    start: Permutation,
    config: LocalSearchConfig,
    profiler: Profiler,
) -> Tuple[Permutation, SearchTrace]:
    """
    Intra-block refinement followed by block rotations for each block length.

    Block lengths whose factorial exceeds config.factorial_cap are skipped
    with a warning.
    """
    trace = SearchTrace()
    current = start
    length = len(start)
    for round_index, block_len in enumerate(config.block_lengths(length), start=1):
        if math.factorial(block_len) > config.factorial_cap:
            message = f"skipping block length {block_len}: {block_len}! > {config.factorial_cap}"
            logger.warning(message)
            trace.warnings.append(message)
            continue

        steps = intra_block_candidates(length, block_len, config.factorial_cap)
        _, entry = _profile_round(profiler, f"local-intra-{block_len}", round_index,
                                  [current], steps, config.epochs)
        trace.entries.append(entry)
        current = entry.winner

        rotations = block_rotations(length, block_len)
        _, entry = _profile_round(profiler, f"local-rotate-{block_len}", round_index,
                                  [current], rotations, config.epochs)
        trace.entries.append(entry)
        current = entry.winner

    trace.final = current
    return current, trace


def hierarchical_search(
    initial: Sequence[Permutation],
    global_config: GlobalSearchConfig,
    local_config: LocalSearchConfig,
    profiler: Profiler,
) -> SearchTrace:
    """
    Run the global stage and refine its winner with the local stage.

    Returns:
        Combined trace with global_winner = P_g and final = P*
    """
    p_global, trace = global_stage(initial, global_config, profiler)
    _, local_trace = local_stage(p_global, local_config, profiler)
    trace.extend(local_trace)
    trace.global_winner = p_global
    logger.info(f"Search finished: P_g={p_global} P*={trace.final}")
    return trace


def replay_trace(trace: SearchTrace) -> Permutation:
    """Recompose the final order from the logged (base, step) choices."""
    if not trace.entries:
        raise SearchError("trace has no entries")
    current = None
    for entry in trace.entries:
        if compose(entry.base, entry.step) != entry.winner:
            raise SearchError(f"trace entry {entry.stage}/{entry.round} is inconsistent")
        current = entry.winner
    return current
