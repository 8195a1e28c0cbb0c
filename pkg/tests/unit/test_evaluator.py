"""
Unit tests for success-rate evaluation, attention sparsity and the sweeps.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from orderscout.evaluator import (
    attention_sparsity,
    capture_attention,
    eval_success,
    export_attention_csv,
    length_sweep,
    prod_digit_grid,
    rank_retrain_sweep,
)
from orderscout.models import (
    ConfigurationError,
    InvalidCaptureError,
    TaskKind,
    TrainConfig,
)
from orderscout.permutation import apply, identity, reverse
from orderscout.search import rank_losses
from orderscout.taskgen import gen_relu
from orderscout.transformer import AttentionCapture, build_model


def uniform_capture(layers=1, heads=1, rows=2, seq_len=6):
    maps = np.full((layers, heads, rows, seq_len, seq_len), 1.0 / seq_len)
    return AttentionCapture(maps=maps, source="uniform")


def one_hot_capture(seq_len=6):
    maps = np.zeros((1, 1, 1, seq_len, seq_len))
    maps[..., 0] = 1.0
    return AttentionCapture(maps=maps)


class TestEvalSuccess:
    """Exact-match success under a target order."""

    def test_counts_only_exact_matches(self, relu_task, tiny_splits, tiny_vocab, tiny_model_config):
        """
        Given: A decoder that answers correctly for inputs starting with a positive value
        When: eval_success() scores the reverse order
        Then: The success rate equals the fraction of such inputs
        """
        eval_set = tiny_splits[2]
        perm = reverse(5)

        def fake_decode(model, inputs, task, vocab):
            return [
                apply(perm, gen_relu(list(x))) if x[0] > 0 else gen_relu(list(x))[:4]
                for x in inputs
            ]

        model = build_model(tiny_model_config, seed=0)
        with patch("orderscout.evaluator.generate_batch", side_effect=fake_decode):
            report = eval_success(model, eval_set, perm, tiny_vocab, keep_transcripts=True,
                                  batch_size=10)

        expected = sum(e.x[0] > 0 for e in eval_set) / len(eval_set)
        assert report.success_rate == pytest.approx(expected)
        assert report.total == 32
        assert len(report.transcripts) == 32

    def test_untrained_model_rate_is_a_fraction(self, tiny_splits, tiny_vocab, tiny_model_config):
        model = build_model(tiny_model_config, seed=0)
        report = eval_success(model, tiny_splits[2], identity(5), tiny_vocab)
        assert 0.0 <= report.success_rate <= 1.0
        assert report.transcripts is None


class TestAttentionSparsity:
    """Mean attention entropy."""

    def test_uniform_rows_give_log_length(self):
        stats = attention_sparsity(uniform_capture(layers=2, heads=2, seq_len=6))
        assert stats.aggregate == pytest.approx(math.log(6))
        assert set(stats.per_head) == {(0, 0), (0, 1), (1, 0), (1, 1)}
        assert stats.seq_len == 6

    def test_one_hot_rows_give_zero(self):
        assert attention_sparsity(one_hot_capture()).aggregate == 0.0

    def test_filter_by_layer_and_head(self):
        stats = attention_sparsity(uniform_capture(layers=2, heads=2), layer=1, head=0)
        assert list(stats.per_head) == [(1, 0)]

    def test_unknown_head(self):
        with pytest.raises(ConfigurationError):
            attention_sparsity(uniform_capture(), head=3)

    def test_unnormalized_row_rejected(self):
        capture = uniform_capture()
        capture.maps[0, 0, 0, 2, :] = 0.5
        with pytest.raises(InvalidCaptureError, match="row not normalized"):
            attention_sparsity(capture)

    def test_wrong_shape_rejected(self):
        with pytest.raises(InvalidCaptureError):
            attention_sparsity(AttentionCapture(maps=np.ones((3, 3))))

    def test_real_capture_is_bounded(self, tiny_splits, tiny_vocab, tiny_model_config):
        """Causal rows can never be flatter than uniform over the full stream."""
        model = build_model(tiny_model_config, seed=0)
        capture = capture_attention(model, tiny_splits[2], identity(5), tiny_vocab, rows=8)
        stats = attention_sparsity(capture)
        assert 0.0 <= stats.aggregate <= math.log(capture.seq_len)
        assert "relu" in stats.source

    def test_export_one_csv_per_head(self, tmp_path):
        paths = export_attention_csv(uniform_capture(layers=2, heads=1), str(tmp_path))
        assert [p.name for p in paths] == ["attention_layer0_head0.csv", "attention_layer1_head0.csv"]
        assert np.loadtxt(paths[0], delimiter=",").shape == (6, 6)

    def test_capture_rows_must_be_positive(self, tiny_splits, tiny_vocab, tiny_model_config):
        model = build_model(tiny_model_config, seed=0)
        with pytest.raises(ConfigurationError):
            capture_attention(model, tiny_splits[2], identity(5), tiny_vocab, rows=0)


class TestDigitGrid:
    """Prod success by operand digit counts."""

    def test_grid_shape(self, prod_task, prod_vocab, prod_model_config):
        model = build_model(prod_model_config, seed=0)
        grid = prod_digit_grid(model, prod_task, prod_vocab, samples_per_cell=3)
        assert grid.shape == (2, 2)
        assert np.all((grid >= 0.0) & (grid <= 1.0))

    def test_zero_operands_with_a_perfect_decoder(self, prod_task, prod_vocab, prod_model_config):
        """
        Given: A decoder that always answers four zeros
        When: The grid is built with zero operands
        Then: Every cell succeeds
        """
        model = build_model(prod_model_config, seed=0)
        with patch("orderscout.evaluator.generate_batch",
                   side_effect=lambda m, inputs, task, vocab: [[0, 0, 0, 0] for _ in inputs]):
            grid = prod_digit_grid(model, prod_task, prod_vocab, samples_per_cell=2,
                                   zero_operands=True)
        assert np.all(grid == 1.0)

    def test_requires_prod_task(self, relu_task, tiny_vocab, tiny_model_config):
        model = build_model(tiny_model_config, seed=0)
        with pytest.raises(ConfigurationError, match="prod task"):
            prod_digit_grid(model, relu_task, tiny_vocab, samples_per_cell=1)

    def test_digits_beyond_padding(self, prod_task, prod_vocab, prod_model_config):
        model = build_model(prod_model_config, seed=0)
        with pytest.raises(ConfigurationError):
            prod_digit_grid(model, prod_task, prod_vocab, samples_per_cell=1, max_digits=3)


class TestSweeps:
    """Retraining sweeps on a tiny budget."""

    def test_rank_retrain_sweep(self, tiny_splits, tiny_vocab, tiny_model_config, tiny_train_config):
        train_set, _, eval_set = tiny_splits
        profile = rank_losses([identity(5), reverse(5)], [0.3, 0.1])
        points = rank_retrain_sweep(profile, train_set, eval_set, tiny_vocab,
                                    tiny_model_config, tiny_train_config, ranks=[1])
        assert len(points) == 1
        assert points[0].perm_id == 1
        assert 0.0 <= points[0].success <= 1.0

    def test_rank_out_of_range(self, tiny_splits, tiny_vocab, tiny_model_config, tiny_train_config):
        profile = rank_losses([identity(5)], [0.3])
        with pytest.raises(ConfigurationError):
            rank_retrain_sweep(profile, tiny_splits[0], tiny_splits[2], tiny_vocab,
                               tiny_model_config, tiny_train_config, ranks=[2])

    def test_length_sweep_curves(self):
        config = TrainConfig(epochs=1, batch_size=16, lr_init=1e-3)
        curves = length_sweep(TaskKind.RELU, [3, 4], config, train_size=32, eval_size=16)
        assert set(curves) == {"forward", "reverse"}
        assert [length for length, _ in curves["forward"]] == [3, 4]

    def test_prod_lengths_must_be_even(self):
        with pytest.raises(ConfigurationError):
            length_sweep(TaskKind.PROD, [5], TrainConfig(epochs=1))
