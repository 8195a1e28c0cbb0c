"""Loss profiling, hierarchical search and the evolutionary baseline."""

from .evolution import es_search, pmx, run_es, swap_mutation, tournament_select, training_fitness
from .hierarchical import (
    global_stage,
    hierarchical_search,
    intra_block_candidates,
    local_stage,
    replay_trace,
)
from .profiler import LossProfiler, Profiler, count_candidates, profile, rank_losses

__all__ = [
    'LossProfiler',
    'Profiler',
    'count_candidates',
    'es_search',
    'global_stage',
    'hierarchical_search',
    'intra_block_candidates',
    'local_stage',
    'pmx',
    'profile',
    'rank_losses',
    'replay_trace',
    'run_es',
    'swap_mutation',
    'tournament_select',
    'training_fitness',
]
