"""
Unit tests for the data models, config validation and exception hierarchy.
"""

import pytest

from orderscout.models import (
    BlockPartition,
    BudgetExceededError,
    ConfigurationError,
    EvalReport,
    GlobalSearchConfig,
    InvalidCaptureError,
    LocalSearchConfig,
    LossProfile,
    LossProfileEntry,
    ModelConfig,
    NumericOverflowError,
    OrderScoutError,
    PermSetKind,
    Permutation,
    PermutationError,
    PermutationSet,
    ReportError,
    SearchError,
    SoftPermConfig,
    TaskInputError,
    TrainConfig,
    TrainingAbortedError,
    Vocabulary,
    VocabularyError,
)


class TestExceptionHierarchy:
    """Every library error derives from OrderScoutError."""

    @pytest.mark.parametrize("error", [
        ConfigurationError, TaskInputError, PermutationError, BudgetExceededError,
        VocabularyError, NumericOverflowError, TrainingAbortedError, SearchError,
        InvalidCaptureError, ReportError,
    ])
    def test_is_orderscout_error(self, error):
        assert issubclass(error, OrderScoutError)

    def test_budget_error_is_a_permutation_error(self):
        assert issubclass(BudgetExceededError, PermutationError)

    def test_aborted_training_keeps_partial_report(self):
        error = TrainingAbortedError("stopped", partial_report={"steps": 3})
        assert error.partial_report == {"steps": 3}
        assert str(error) == "stopped"


class TestVocabulary:
    """Token table."""

    def test_ids_are_stable(self):
        vocab = Vocabulary([3, -1, 3, 0])
        assert vocab.values == (-1, 0, 3)
        assert vocab.encode([-1, 0, 3]) == [4, 5, 6]
        assert vocab.size == 7

    def test_specials_are_not_values(self):
        vocab = Vocabulary([1, 2])
        with pytest.raises(VocabularyError):
            vocab.value_of(Vocabulary.EOS)

    def test_dict_round_trip(self):
        vocab = Vocabulary(range(-9, 10))
        assert Vocabulary.from_dict(vocab.to_dict()) == vocab


class TestPermutationModels:
    """Permutation, PermutationSet and BlockPartition validation."""

    def test_identity_flag(self):
        assert Permutation((0, 1, 2)).is_identity
        assert not Permutation((1, 0, 2)).is_identity

    def test_empty_permutation(self):
        with pytest.raises(PermutationError):
            Permutation(())

    def test_mixed_lengths_rejected(self):
        with pytest.raises(PermutationError):
            PermutationSet((Permutation((0, 1)), Permutation((0, 1, 2))))

    def test_g_set_requires_identity_first(self):
        with pytest.raises(PermutationError):
            PermutationSet((Permutation((1, 0)), Permutation((0, 1))), PermSetKind.G)

    def test_index_of(self):
        s = PermutationSet((Permutation((0, 1)), Permutation((1, 0))))
        assert s.index_of(Permutation((1, 0))) == 1
        assert s.index_of(Permutation((0, 1, 2))) is None

    def test_partition_must_be_contiguous(self):
        with pytest.raises(PermutationError):
            BlockPartition(((0, 2), (3, 5)))


class TestConfigs:
    """__post_init__ validation of the typed configs."""

    def test_model_heads_divide_width(self):
        with pytest.raises(ConfigurationError):
            ModelConfig(vocab_size=10, max_seq_len=8, d_emb=10, n_heads=3)

    @pytest.mark.parametrize("kwargs", [
        {"lr_init": 0.0},
        {"epochs": 0},
        {"batch_size": 0},
        {"betas": (0.9, 1.0)},
        {"subsample_per_perm": -2},
    ])
    def test_train_config_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kwargs)

    def test_soft_perm_needs_iterations(self):
        with pytest.raises(ConfigurationError):
            SoftPermConfig(sinkhorn_iters=0)

    @pytest.mark.parametrize("weight", [0.0, 1.0, 1.5])
    def test_soft_perm_identity_weight_range(self, weight):
        with pytest.raises(ConfigurationError, match="identity_weight"):
            SoftPermConfig(identity_weight=weight)

    def test_global_budget_and_keep_counts(self):
        """
        Given: Depth K = 3
        When: The budget and keep counts are read
        Then: T = 24 and survivors shrink as floor(T / (k+1)!)
        """
        config = GlobalSearchConfig(depth=3)
        assert config.budget == 24
        assert [config.keep_count(k) for k in (1, 2, 3)] == [12, 4, 1]

    def test_local_block_lengths(self):
        assert LocalSearchConfig().block_lengths(13) == [2, 3, 4, 5, 6]
        assert LocalSearchConfig(max_block_len=3).block_lengths(13) == [2, 3]
        with pytest.raises(ConfigurationError):
            LocalSearchConfig(min_block_len=1)


class TestResults:
    """Result records."""

    def test_loss_profile_must_be_sorted(self):
        entries = [
            LossProfileEntry(0, Permutation((0, 1)), 0.5),
            LossProfileEntry(1, Permutation((1, 0)), 0.2),
        ]
        with pytest.raises(ValueError):
            LossProfile(entries=entries)

    def test_loss_profile_rejects_nan(self):
        with pytest.raises(ValueError):
            LossProfile(entries=[LossProfileEntry(0, Permutation((0, 1)), float("nan"))])

    def test_eval_report_counts(self):
        report = EvalReport(success_rate=0.5, passed=[True, False, True, False])
        assert (report.pass_count, report.total) == (2, 4)
        with pytest.raises(ValueError):
            EvalReport(success_rate=0.75, passed=[True, False])
