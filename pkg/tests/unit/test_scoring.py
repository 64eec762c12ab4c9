"""
Unit tests for filter scoring

Tests the Taylor score at next-layer input taps, its leave-one-out
exactness for linear rewards, and the baseline scorers.
"""

import math

import pytest
import torch

from lib.data.datasets import Batch
from lib.errors import NumericalError
from lib.netcore.structure import FilterRef
from lib.scoring.baselines import FPGMScorer, GBNScorer, L1Scorer, RandomScorer, ScorerFactory, TaylorScorer
from lib.scoring.table import ScoreTable
from lib.scoring.taylor import ABS_THEN_SUM, SUM_THEN_ABS, reduce_contribution, score_filters
from lib.search.candidates import rank_unit


def _batch(n: int = 8, size: int = 8, dtype=torch.float64, seed: int = 0) -> Batch:
    generator = torch.Generator().manual_seed(seed)
    return Batch(
        torch.randn(n, 3, size, size, generator=generator, dtype=dtype),
        torch.randint(0, 4, (n,), generator=generator),
        torch.arange(n),
    )


def _linear_reward(weights: torch.Tensor):
    def fn(logits, batch):
        return (logits * weights.to(logits)).sum()

    return fn


class TestTaylorScore:
    """Test suite for Taylor scores"""

    def test_linear_reward_matches_leave_one_out(self, linear_network):
        """Test score equals |R(f) - R(f with the channel zeroed)| for a linear reward"""
        batch = _batch()
        reward_fn = _linear_reward(torch.randn(8, 4, generator=torch.Generator().manual_seed(1)))
        table = score_filters(linear_network, reward_fn, [batch], batch_stats=False)

        with torch.no_grad():
            full = float(reward_fn(linear_network(batch.inputs), batch))
            for ref in linear_network.alive_filters():
                removed = float(reward_fn(linear_network.mask([ref])(batch.inputs), batch))
                assert abs(table[ref] - abs(full - removed)) <= 1e-6

    def test_scores_cover_alive_filters(self, toy_network):
        """Test one finite non-negative score per alive filter"""
        pruned = toy_network.mask([FilterRef(0, 1), FilterRef(1, 4)])
        batch = _batch(size=16, dtype=torch.float32)
        table = TaylorScorer().score(pruned, [batch], lambda logits, b: -torch.nn.functional.cross_entropy(logits, b.labels))

        assert len(table) == pruned.num_alive
        assert FilterRef(0, 1) not in table.entries
        assert all(math.isfinite(s) and s >= 0 for s in table.entries.values())

    def test_scores_average_over_batches(self, linear_network):
        """Test the table is the mean of the per-batch scores"""
        reward_fn = _linear_reward(torch.ones(8, 4))
        first, second = _batch(seed=1), _batch(seed=2)
        both = score_filters(linear_network, reward_fn, [first, second], batch_stats=False)
        a = score_filters(linear_network, reward_fn, [first], batch_stats=False)
        b = score_filters(linear_network, reward_fn, [second], batch_stats=False)

        assert both.batch_count == 2
        for ref in linear_network.alive_filters():
            assert both[ref] == pytest.approx(0.5 * (a[ref] + b[ref]), abs=1e-9)

    @pytest.mark.parametrize("scale", [4.0, 0.5])
    def test_deterministic_and_scale_covariant(self, toy_network, scale):
        """Test repeated scoring is identical and scaling the reward scales every score"""
        toy_network.module.eval()
        batch = _batch(size=16, dtype=torch.float32, seed=3)

        def reward_fn(logits, b):
            return -torch.nn.functional.cross_entropy(logits, b.labels)

        first = score_filters(toy_network, reward_fn, [batch], batch_stats=False)
        again = score_filters(toy_network, reward_fn, [batch], batch_stats=False)
        scaled = score_filters(toy_network, lambda logits, b: scale * reward_fn(logits, b), [batch], batch_stats=False)

        assert first.entries == again.entries
        for ref, value in first.entries.items():
            assert scaled[ref] == pytest.approx(scale * value, rel=1e-12)
        for unit in toy_network.alive_counts():
            assert rank_unit(scaled, unit) == rank_unit(first, unit)

    def test_reductions(self):
        """Test sum-then-abs never exceeds abs-then-sum"""
        grads = [torch.tensor([[[[1.0, -2.0]], [[3.0, 1.0]]]])]
        features = [torch.tensor([[[[1.0, 1.0]], [[1.0, -1.0]]]])]
        assert reduce_contribution(grads, features, SUM_THEN_ABS).tolist() == [1.0, 2.0]
        assert reduce_contribution(grads, features, ABS_THEN_SUM).tolist() == [3.0, 4.0]
        with pytest.raises(ValueError):
            reduce_contribution(grads, features, "max")

    def test_non_finite_reward(self, linear_network):
        """Test a NaN reward raises NumericalError naming the batch"""
        with pytest.raises(NumericalError):
            score_filters(linear_network, lambda logits, b: logits.sum() * float("nan"), [_batch()], batch_stats=False)

    def test_requires_batches(self, linear_network):
        """Test scoring with no batches is rejected"""
        with pytest.raises(ValueError):
            score_filters(linear_network, _linear_reward(torch.ones(8, 4)), [], batch_stats=False)

    def test_taylor_needs_reward(self, linear_network):
        """Test the Taylor scorer refuses to run without a reward function"""
        with pytest.raises(ValueError):
            TaylorScorer().score(linear_network, [_batch()])


class TestBaselineScorers:
    """Test suite for GBN, L1, FPGM and random scorers"""

    def test_l1_matches_weight_norms(self, toy_network):
        """Test L1 scores are the producer filter weight norms"""
        table = L1Scorer().score(toy_network)
        weight = toy_network.module.convs[1].weight.detach()
        assert table[FilterRef(1, 3)] == pytest.approx(float(weight[3].abs().sum()), rel=1e-6)
        assert table.method == "l1"

    def test_fpgm_scores_alive_filters(self, toy_network):
        """Test FPGM scores exist for alive filters and are non-negative"""
        pruned = toy_network.mask([FilterRef(0, 0)])
        table = FPGMScorer().score(pruned)
        assert len(table) == pruned.num_alive
        assert min(table.entries.values()) >= 0

    def test_gbn_uses_producer_taps(self, toy_network):
        """Test GBN scores every filter with the task loss"""
        table = GBNScorer(batch_stats=True).score(toy_network, [_batch(size=16, dtype=torch.float32)])
        assert table.method == "gbn"
        assert len(table) == toy_network.num_alive

    def test_random_scorer_seeded(self, toy_network):
        """Test random scores depend only on the seed"""
        assert RandomScorer(3).score(toy_network).entries == RandomScorer(3).score(toy_network).entries
        assert RandomScorer(3).score(toy_network).entries != RandomScorer(4).score(toy_network).entries

    def test_factory(self):
        """Test the factory builds every scorer and rejects unknown names"""
        assert ScorerFactory.available() == ["fpgm", "gbn", "l1", "random", "taylor"]
        assert isinstance(ScorerFactory.create("TAYLOR", reduction=ABS_THEN_SUM), TaylorScorer)
        with pytest.raises(ValueError, match="Unknown scorer"):
            ScorerFactory.create("hrank")


class TestScoreTable:
    """Test suite for score tables"""

    def test_csv_round_trip(self, tmp_path):
        """Test tables persist as layer/filter/score rows"""
        table = ScoreTable({FilterRef(0, 1): 0.5, FilterRef(1, 0): 2.0}, 1, "taylor")
        loaded = ScoreTable.from_csv(table.to_csv(tmp_path / "scores.csv"))
        assert loaded.entries == table.entries

    def test_for_unit_and_scaling(self):
        """Test per-unit views and positive scaling"""
        table = ScoreTable({FilterRef(0, 2): 0.1, FilterRef(0, 0): 0.3, FilterRef(1, 0): 1.0})
        assert table.for_unit(0) == [(0, 0.3), (2, 0.1)]
        assert table.units() == [0, 1]
        assert table.scaled(2.0)[FilterRef(1, 0)] == 2.0
