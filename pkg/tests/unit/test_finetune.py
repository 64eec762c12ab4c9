"""
Unit tests for fine-tuning

Tests the two-view distillation loss, the learning-rate schedule, the
training loops and final evaluation.
"""

import copy
import logging

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from lib.errors import ShapeMismatchError, TrainingDivergedError
from lib.finetune.evaluation import Evaluation, evaluate_network
from lib.finetune.loss import finetune_loss, loss_terms
from lib.finetune.trainer import lr_at, run_finetune, train_plain, warm_up
from lib.membank.bank import build_bank, qualifying_teachers
from lib.netcore.structure import FilterRef


def _logits(seed: int, n: int = 4, classes: int = 3) -> torch.Tensor:
    return torch.randn(n, classes, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


class TestFinetuneLoss:
    """Test suite for the two-view distillation loss"""

    @pytest.mark.parametrize("per_view", [False, True])
    def test_gradient_matches_finite_differences(self, per_view):
        """Test analytic gradients w.r.t. both views within 1e-4"""
        a, b, targets = _logits(0), _logits(1), _logits(2)
        labels = torch.tensor([0, 2, 1, 2])
        a.requires_grad_(True)
        b.requires_grad_(True)

        def total(x, y):
            return finetune_loss(x, y, labels, targets, kd_weight=0.7, temperature=2.0, per_view=per_view)

        grad_a, grad_b = torch.autograd.grad(total(a, b), (a, b))

        eps = 1e-6
        with torch.no_grad():
            for view, grad in ((0, grad_a), (1, grad_b)):
                for index in np.ndindex(*a.shape):
                    plus, minus = a.clone(), a.clone()
                    other = b.clone()
                    if view == 1:
                        plus, minus, other = b.clone(), b.clone(), a.clone()
                    plus[index] += eps
                    minus[index] -= eps
                    if view == 0:
                        numeric = (total(plus, other) - total(minus, other)) / (2 * eps)
                    else:
                        numeric = (total(other, plus) - total(other, minus)) / (2 * eps)
                    assert abs(float(numeric) - float(grad[index])) <= 1e-4

    def test_task_terms_are_summed(self):
        """Test the task loss is the sum of both views' cross-entropy"""
        a, b = _logits(3), _logits(4)
        labels = torch.tensor([1, 0, 2, 2])
        terms = loss_terms(a, b, labels, _logits(5))
        expected = F.cross_entropy(a, labels) + F.cross_entropy(b, labels)
        assert torch.allclose(terms.task, expected)

    def test_zero_weight_is_task_loss(self):
        """Test kd_weight = 0 leaves only the task terms"""
        a, b = _logits(6), _logits(7)
        labels = torch.tensor([0, 1, 2, 0])
        terms = loss_terms(a, b, labels, _logits(8), kd_weight=0.0)
        assert torch.equal(terms.total, terms.task)
        assert float(terms.kd) == 0.0

    def test_matching_targets_cost_nothing(self):
        """Test identical views equal to the targets have zero distillation loss"""
        a = _logits(9)
        terms = loss_terms(a, a.clone(), torch.tensor([0, 1, 2, 0]), a.clone())
        assert float(terms.kd) == pytest.approx(0.0, abs=1e-12)

    def test_temperature_scaling(self):
        """Test the distillation term carries the T^2 factor"""
        a, targets = _logits(10), _logits(11)
        labels = torch.tensor([0, 1, 2, 0])
        t = 3.0
        terms = loss_terms(a, a.clone(), labels, targets, temperature=t)
        log_q = F.log_softmax(targets / t, dim=1)
        log_p = F.log_softmax(a / t, dim=1)
        kl = (log_q.exp() * (log_q - log_p)).sum(dim=1).mean()
        assert float(terms.kd) == pytest.approx(float(kl) * t * t, rel=1e-9)

    def test_per_view_equals_mean_for_identical_views(self):
        """Test both distillation forms agree when the views coincide"""
        a, targets = _logits(12), _logits(13)
        labels = torch.tensor([2, 1, 0, 0])
        mean = loss_terms(a, a.clone(), labels, targets).kd
        per_view = loss_terms(a, a.clone(), labels, targets, per_view=True).kd
        assert float(mean) == pytest.approx(float(per_view), rel=1e-9)

    def test_shape_mismatch(self):
        """Test disagreeing views, labels or targets raise ShapeMismatchError"""
        a = _logits(0)
        labels = torch.tensor([0, 1, 2, 0])
        with pytest.raises(ShapeMismatchError):
            loss_terms(a, _logits(1, n=3), labels)
        with pytest.raises(ShapeMismatchError):
            loss_terms(a, _logits(1), labels[:3])
        with pytest.raises(ShapeMismatchError):
            loss_terms(a, _logits(1), labels, _logits(2, classes=5))


class TestSchedule:
    """Test suite for the step learning-rate schedule"""

    @pytest.mark.parametrize(
        "epoch,expected",
        [(0, 0.1), (29, 0.1), (30, 0.02), (60, 0.004), (99, 0.0008)],
    )
    def test_lr_at(self, epoch, expected):
        """Test lr decays by 0.2 at each passed milestone"""
        assert lr_at(epoch, 0.1, 0.2, (30, 60, 80)) == pytest.approx(expected)


class TestTrainingLoops:
    """Test suite for plain and distillation training"""

    def test_train_plain_updates_weights(self, toy_network, train_data, test_data):
        """Test one epoch changes weights and records history"""
        before = copy.deepcopy(toy_network.module.state_dict())
        result = train_plain(toy_network, train_data, epochs=1, batch_size=32, lr=0.05, test=test_data)

        assert len(result.history) == 1
        assert np.isfinite(result.final["train_loss"])
        assert 0.0 <= result.final["test_acc"] <= 1.0
        assert not result.network.module.training
        after = result.network.module.state_dict()
        assert not torch.equal(before["convs.0.weight"], after["convs.0.weight"])

    def test_masked_network_is_materialized(self, toy_network, train_data):
        """Test training a masked view trains the compact network"""
        pruned = toy_network.mask([FilterRef(0, 0), FilterRef(1, 3), FilterRef(1, 4)])
        result = train_plain(pruned, train_data, epochs=1, batch_size=64)
        assert result.network.module.widths == [7, 14]
        assert result.network.flops() == pruned.flops()

    def test_zero_epochs(self, toy_network, train_data):
        """Test zero epochs returns an unchanged copy"""
        result = train_plain(toy_network, train_data, epochs=0)
        assert result.history == []
        assert result.network.module is not toy_network.module
        for name, value in toy_network.module.state_dict().items():
            assert torch.equal(value, result.network.module.state_dict()[name])

    @pytest.mark.parametrize("loop", ["plain", "finetune"])
    def test_input_network_untouched(self, toy_network, train_data, loop):
        """Test training an unmasked network leaves the caller's weights as they were"""
        before = copy.deepcopy(toy_network.module.state_dict())
        if loop == "plain":
            result = train_plain(toy_network, train_data, epochs=1, batch_size=32, lr=0.05)
        else:
            result = run_finetune(toy_network, None, train_data, epochs=1, batch_size=32, milestones=())
        assert result.network.module is not toy_network.module
        for name, value in toy_network.module.state_dict().items():
            assert torch.equal(value, before[name])
        assert not torch.equal(result.network.module.state_dict()["convs.0.weight"], before["convs.0.weight"])

    def test_same_seed_same_weights(self, toy_network, train_data):
        """Test training is reproducible from the run seed"""
        twin = copy.deepcopy(toy_network)
        first = train_plain(toy_network, train_data, epochs=1, batch_size=32, seed=4)
        second = train_plain(twin, train_data, epochs=1, batch_size=32, seed=4)
        for name, value in first.network.module.state_dict().items():
            assert torch.equal(value, second.network.module.state_dict()[name])

    def test_divergence_raises(self, toy_network, train_data):
        """Test a non-finite loss raises TrainingDivergedError"""
        with pytest.raises(TrainingDivergedError):
            train_plain(toy_network, train_data, epochs=1, batch_size=32, lr=float("nan"))

    def test_warm_up_is_unaugmented(self, toy_network, splits):
        """Test warm-up returns an evaluation-mode network"""
        subset, _ = splits
        warmed = warm_up(toy_network, subset, epochs=1, batch_size=32)
        assert not warmed.module.training

    def test_finetune_with_bank(self, toy_network, train_data, test_data):
        """Test distillation from a bank records a positive KD loss"""
        toy_network.module.eval()
        teacher = copy.deepcopy(toy_network)
        bank = build_bank([(0, teacher)], train_data, batch_size=64, batch_stats=False)
        student = toy_network.mask([FilterRef(1, i) for i in range(4)])

        result = run_finetune(
            student, bank, train_data, epochs=1, batch_size=32, milestones=(), test=test_data
        )
        row = result.final
        assert row["kd_loss"] > 0
        assert row["qualifying_teachers"] == 1
        assert np.isfinite(row["student_loss"])
        assert result.network.module.widths == [8, 12]

    def test_finetune_without_bank(self, toy_network, train_data):
        """Test plain two-view fine-tuning has no distillation term"""
        result = run_finetune(toy_network, None, train_data, epochs=1, batch_size=64, milestones=())
        assert result.final["kd_loss"] == 0.0
        assert result.final["qualifying_teachers"] == 0

    def test_zero_kd_weight_reproduces_plain_finetune(self, toy_network, train_data):
        """Test kd_weight = 0 with a bank matches bank-free fine-tuning bit for bit"""
        toy_network.module.eval()
        bank = build_bank([(0, copy.deepcopy(toy_network))], train_data, batch_size=64, batch_stats=False)
        student = toy_network.mask([FilterRef(1, i) for i in range(4)])

        gated = run_finetune(student, bank, train_data, epochs=2, batch_size=32, milestones=(1,), kd_weight=0.0, seed=7)
        plain = run_finetune(student, None, train_data, epochs=2, batch_size=32, milestones=(1,), seed=7)

        for name, value in plain.network.module.state_dict().items():
            assert torch.equal(value, gated.network.module.state_dict()[name])
        assert [row["train_loss"] for row in gated.history] == [row["train_loss"] for row in plain.history]
        assert all(row["kd_loss"] == 0.0 for row in gated.history)

    def test_logged_teacher_count_matches_gating(self, toy_network, train_data, caplog):
        """Test each logged qualifying-teacher count equals the gating of the logged student loss"""
        toy_network.module.eval()
        teachers = [
            (0, copy.deepcopy(toy_network)),
            (1, toy_network.mask([FilterRef(1, i) for i in range(8)])),
            (2, toy_network.mask([FilterRef(0, i) for i in range(4)] + [FilterRef(1, i) for i in range(12)])),
        ]
        bank = build_bank(teachers, train_data, batch_size=64, batch_stats=False)
        student = toy_network.mask([FilterRef(1, i) for i in range(6)])

        with caplog.at_level(logging.INFO, logger="lib.finetune.trainer"):
            result = run_finetune(
                student, bank, train_data, epochs=3, batch_size=32, milestones=(), ema_decay=0.5, seed=1
            )

        logged = [
            record.metadata
            for record in caplog.records
            if record.getMessage().startswith("Fine-tune epoch")
        ]
        assert len(logged) == len(result.history) == 3
        for row in logged:
            assert 1 <= row["qualifying_teachers"] <= bank.k
            assert row["qualifying_teachers"] == len(qualifying_teachers(bank, row["student_loss"]))


class TestEvaluation:
    """Test suite for final evaluation"""

    def test_reductions_against_reference(self, toy_network, test_data, tmp_path):
        """Test FLOPs and parameter reductions are reported in percent"""
        toy_network.module.eval()
        pruned = toy_network.mask([FilterRef(1, i) for i in range(8)])
        evaluation = evaluate_network(pruned, test_data)

        assert evaluation.examples == len(test_data)
        assert evaluation.flops_reduction_pct == pytest.approx(100.0 * (1 - pruned.flops() / toy_network.flops()))
        assert 0 < evaluation.param_reduction_pct < 100
        assert Evaluation.load(evaluation.save(tmp_path / "evaluation.json")) == evaluation
