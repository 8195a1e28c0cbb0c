"""
Evolutionary-strategy baseline over target orders.

Individuals are permutations; fitness is the negative validation loss of a
model trained briefly on that order. Operators are k-tournament selection,
partially mapped crossover and swap mutation, with elitism.
"""

import logging
import math
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..models import (
    Dataset,
    EsConfig,
    EsResult,
    ModelConfig,
    Permutation,
    PermutationError,
    SearchError,
    TrainConfig,
    Vocabulary,
)
from ..permutation import random_permutation
from ..trainer import train, validation_loss
from ..transformer import build_model

logger = logging.getLogger(__name__)

FitnessFn = Callable[[Permutation], float]


# ============================================================================
# Operators
# ============================================================================

def pmx(parent1: Permutation, parent2: Permutation, rng: np.random.Generator) -> Permutation:
    """
    Partially mapped crossover.

    The child copies a random slice of parent1 and fills the rest from
    parent2, following the slice mapping to resolve clashes.
    """
    p1 = np.array(parent1.map)
    p2 = np.array(parent2.map)
    length = len(p1)
    if length < 2:
        return parent1
    i, j = sorted(int(v) for v in rng.choice(length, 2, replace=False))

    child = np.full(length, -1)
    child[i:j + 1] = p1[i:j + 1]
    for k in range(i, j + 1):
        if p2[k] not in child:
            slot = k
            while child[slot] != -1:
                slot = int(np.where(p2 == child[slot])[0][0])
            child[slot] = p2[k]
    for k in range(length):
        if child[k] == -1:
            child[k] = p2[k]
    return Permutation(tuple(int(v) for v in child))


def swap_mutation(perm: Permutation, rng: np.random.Generator) -> Permutation:
    """Exchange two distinct positions."""
    if len(perm) < 2:
        return perm
    i, j = (int(v) for v in rng.choice(len(perm), 2, replace=False))
    mapping = list(perm.map)
    mapping[i], mapping[j] = mapping[j], mapping[i]
    return Permutation(tuple(mapping))


def tournament_select(
    population: Sequence[Permutation],
    fitness: Sequence[float],
    size: int,
    rng: np.random.Generator,
) -> Permutation:
    """Fittest of `size` distinct random individuals; ties go to the lower index."""
    picks = sorted(int(v) for v in rng.choice(len(population), size, replace=False))
    best = max(picks, key=lambda i: (fitness[i], -i))
    return population[best]


# ============================================================================
# Search
# ============================================================================

def training_fitness(
    train_set: Dataset,
    val_set: Dataset,
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epochs: int = 1,
) -> FitnessFn:
    """Fitness = -validation loss after a short training run on one order."""
    config = replace(train_config, epochs=epochs)

    def fitness(perm: Permutation) -> float:
        model = build_model(model_config, seed=train_config.seed)
        train(model, train_set, perm, vocab, config)
        return -validation_loss(model, val_set, perm, vocab, train_config.eval_batch_size)

    return fitness


def _initial_population(length: int, size: int, rng: np.random.Generator) -> List[Permutation]:
    distinct = size if length > 12 else min(size, math.factorial(length))
    population: List[Permutation] = []
    seen = set()
    while len(population) < distinct:
        candidate = random_permutation(length, rng)
        if candidate not in seen:
            seen.add(candidate)
            population.append(candidate)
    while len(population) < size:
        population.append(random_permutation(length, rng))
    return population


def es_search(
    length: int,
    config: EsConfig,
    fitness_fn: FitnessFn,
) -> EsResult:
    """
    Evolve target orders for config.generations generations.

    Fitness values are cached per permutation. history[g] is the best fitness
    seen up to generation g (g = 0 is the initial population) and never
    decreases.

    Raises:
        SearchError: If an operator ever yields a non-bijection
    """
    rng = np.random.default_rng(config.seed)
    cache: Dict[Permutation, float] = {}

    def evaluate(perm: Permutation) -> float:
        if perm not in cache:
            cache[perm] = float(fitness_fn(perm))
        return cache[perm]

    population = _initial_population(length, config.population, rng)
    scores = [evaluate(p) for p in population]
    best_index = max(range(len(population)), key=lambda i: (scores[i], -i))
    best, best_fitness = population[best_index], scores[best_index]
    history = [best_fitness]
    mean_history = [float(np.mean(scores))]
    logger.info(f"ES generation 0: best fitness {best_fitness:.4f}")

    elite_count = min(config.elite_count, config.population)
    for generation in range(1, config.generations + 1):
        ranked = sorted(range(len(population)), key=lambda i: (-scores[i], i))
        next_population = [population[i] for i in ranked[:elite_count]]

        while len(next_population) < config.population:
            parent1 = tournament_select(population, scores, config.tournament_size, rng)
            parent2 = tournament_select(population, scores, config.tournament_size, rng)
            try:
                child = pmx(parent1, parent2, rng) if rng.random() < config.crossover_prob else parent1
                if rng.random() < config.mutation_prob:
                    child = swap_mutation(child, rng)
            except PermutationError as e:
                raise SearchError(f"invalid offspring in generation {generation}: {e}")
            next_population.append(child)

        population = next_population
        scores = [evaluate(p) for p in population]
        for i, score in enumerate(scores):
            if score > best_fitness:
                best, best_fitness = population[i], score
        history.append(best_fitness)
        mean_history.append(float(np.mean(scores)))
        logger.info(
            f"ES generation {generation}/{config.generations}: best fitness {best_fitness:.4f}, "
            f"{len(cache)} orders evaluated"
        )

    return EsResult(
        best=best,
        best_fitness=best_fitness,
        history=history,
        mean_history=mean_history,
        evaluations=len(cache),
    )


def run_es(
    train_set: Dataset,
    val_set: Dataset,
    vocab: Vocabulary,
    config: EsConfig,
    model_config: ModelConfig,
    train_config: TrainConfig,
    fitness_fn: Optional[FitnessFn] = None,
) -> EsResult:
    """es_search with the default training-based fitness."""
    fitness_fn = fitness_fn or training_fitness(
        train_set, val_set, vocab, model_config, train_config, config.fitness_epochs
    )
    return es_search(train_set.task.target_len, config, fitness_fn)
