"""
Pytest configuration and shared fixtures for OrderScout tests.

Provides tiny task specs, deterministic datasets, a tiny model config and a
fake profiler so that search logic can be tested without training.
"""

from typing import List, Optional, Sequence

import pytest

from orderscout.models import (
    LossProfile,
    ModelConfig,
    Permutation,
    TaskSpec,
    TrainConfig,
)
from orderscout.permutation import identity
from orderscout.search.profiler import rank_losses
from orderscout.taskgen import build_vocab, gen_splits
from orderscout.transformer import model_config_for


# ============================================================================
# Task and Data Fixtures
# ============================================================================

@pytest.fixture
def relu_task() -> TaskSpec:
    return TaskSpec.relu(5)


@pytest.fixture
def index_task() -> TaskSpec:
    return TaskSpec.index(5, 2)


@pytest.fixture
def prod_task() -> TaskSpec:
    """Two-digit operands, four target digits."""
    return TaskSpec.prod(2)


@pytest.fixture
def tiny_splits(relu_task):
    """(train, validation, eval) with 64 / 32 / 32 ReLU examples."""
    return gen_splits(relu_task, 64, 32, 32)


@pytest.fixture
def tiny_vocab(tiny_splits):
    return build_vocab(tiny_splits)


@pytest.fixture
def prod_splits(prod_task):
    return gen_splits(prod_task, 64, 32, 32)


@pytest.fixture
def prod_vocab(prod_splits):
    return build_vocab(prod_splits)


# ============================================================================
# Model and Training Fixtures
# ============================================================================

@pytest.fixture
def tiny_model_config(relu_task, tiny_vocab) -> ModelConfig:
    """One layer, d_emb 16, no dropout."""
    return model_config_for(relu_task, tiny_vocab, n_layers=1, d_emb=16, d_ffn=32, dropout=0.0)


@pytest.fixture
def prod_model_config(prod_task, prod_vocab) -> ModelConfig:
    return model_config_for(prod_task, prod_vocab, n_layers=1, d_emb=16, d_ffn=32, dropout=0.0)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(epochs=1, batch_size=16, lr_init=1e-3, seed=0)


# ============================================================================
# Fake Profiler
# ============================================================================

def hamming(p: Permutation, q: Permutation) -> int:
    return sum(a != b for a, b in zip(p.map, q.map))


class FakeProfiler:
    """
    Scores each candidate by its Hamming distance to a hidden target order.

    Records every candidate list it was asked to profile.
    """

    def __init__(self, target: Permutation):
        self.target = target
        self.calls: List[List[Permutation]] = []
        self.epochs_seen: List[Optional[int]] = []

    def profile(self, candidates: Sequence[Permutation], epochs: Optional[int] = None) -> LossProfile:
        candidates = list(candidates)
        self.calls.append(candidates)
        self.epochs_seen.append(epochs)
        losses = [float(hamming(c, self.target)) for c in candidates]
        return rank_losses(candidates, losses, epochs or 1)


@pytest.fixture
def fake_profiler_factory():
    """Factory: fake_profiler_factory(target) -> FakeProfiler."""
    return FakeProfiler


@pytest.fixture
def identity_profiler():
    """Fake profiler whose best order is the identity of length 6."""
    return FakeProfiler(identity(6))

