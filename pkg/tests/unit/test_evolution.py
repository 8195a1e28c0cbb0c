"""
Unit tests for the evolutionary-strategy baseline.
"""

import numpy as np
import pytest

from orderscout.models import ConfigurationError, EsConfig, Permutation
from orderscout.permutation import identity, random_permutation, reverse
from orderscout.search import es_search, pmx, run_es, swap_mutation, tournament_select


def hamming(p, q):
    return sum(a != b for a, b in zip(p.map, q.map))


def negative_distance_to(target):
    """Fitness closure that also records every order it was asked about."""
    calls = []

    def fitness(perm):
        calls.append(perm)
        return -float(hamming(perm, target))

    fitness.calls = calls
    return fitness


class TestOperators:
    """Crossover, mutation and selection."""

    def test_pmx_children_are_permutations(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p1 = random_permutation(9, rng)
            p2 = random_permutation(9, rng)
            child = pmx(p1, p2, rng)
            assert sorted(child.map) == list(range(9))

    def test_pmx_of_identical_parents(self):
        rng = np.random.default_rng(1)
        p = Permutation((3, 0, 4, 1, 2))
        for _ in range(20):
            assert pmx(p, p, rng) == p

    def test_swap_changes_exactly_two_positions(self):
        rng = np.random.default_rng(2)
        p = Permutation((4, 2, 0, 1, 3, 5))
        for _ in range(50):
            mutated = swap_mutation(p, rng)
            assert sum(a != b for a, b in zip(p.map, mutated.map)) == 2

    def test_tournament_over_whole_population(self):
        """
        Given: A tournament as large as the population with tied best fitness
        When: tournament_select() is called
        Then: The tied individual with the lower index wins
        """
        population = [identity(3), reverse(3), Permutation((1, 0, 2))]
        rng = np.random.default_rng(0)
        assert tournament_select(population, [1.0, 3.0, 3.0], 3, rng) == reverse(3)

    def test_tournament_of_one_is_random(self):
        population = [identity(3), reverse(3)]
        rng = np.random.default_rng(0)
        picks = {tournament_select(population, [0.0, 1.0], 1, rng) for _ in range(50)}
        assert picks == set(population)


class TestEsSearch:
    """The generational loop."""

    @pytest.fixture
    def config(self):
        return EsConfig(population=8, generations=6, tournament_size=3, seed=5)

    def test_history_never_decreases(self, config):
        """
        Given: Fitness = -Hamming distance to a hidden order
        When: es_search() runs six generations
        Then: history has one value per generation plus the initial population
              and is non-decreasing
        """
        target = Permutation((2, 0, 5, 1, 4, 3))
        fitness = negative_distance_to(target)
        result = es_search(6, config, fitness)

        assert len(result.history) == 7
        assert all(b >= a for a, b in zip(result.history, result.history[1:]))
        assert result.history[-1] == result.best_fitness
        assert result.best_fitness == -float(hamming(result.best, target))
        assert len(result.mean_history) == 7

    def test_fitness_is_cached(self, config):
        fitness = negative_distance_to(identity(6))
        result = es_search(6, config, fitness)
        assert len(fitness.calls) == len(set(fitness.calls)) == result.evaluations

    def test_same_seed_same_result(self, config):
        a = es_search(6, config, negative_distance_to(identity(6)))
        b = es_search(6, config, negative_distance_to(identity(6)))
        assert a.best == b.best
        assert a.history == b.history

    def test_zero_generations(self):
        config = EsConfig(population=4, generations=0, tournament_size=2)
        result = es_search(5, config, negative_distance_to(identity(5)))
        assert len(result.history) == 1

    def test_population_larger_than_all_orders(self):
        # L = 3 has only six orders; the rest of the population repeats them
        config = EsConfig(population=10, generations=2, tournament_size=2)
        result = es_search(3, config, negative_distance_to(reverse(3)))
        assert result.evaluations <= 6
        assert result.best == reverse(3)

    def test_run_es_uses_task_length(self, tiny_splits, tiny_vocab, tiny_model_config,
                                     tiny_train_config):
        train_set, val_set, _ = tiny_splits
        fitness = negative_distance_to(identity(5))
        config = EsConfig(population=4, generations=1, tournament_size=2)
        result = run_es(train_set, val_set, tiny_vocab, config, tiny_model_config,
                        tiny_train_config, fitness_fn=fitness)
        assert len(result.best) == 5

    @pytest.mark.parametrize("kwargs", [
        {"population": 1},
        {"crossover_prob": 1.5},
        {"tournament_size": 40},
        {"generations": -1},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigurationError):
            EsConfig(**kwargs)
