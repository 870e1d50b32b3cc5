import numpy as np
import pytest

from core.datamodel import ArtifactClass, LabelMode, PolypLabel
from core.errors import ConfigError, DivergenceError, MissingWeight
from core.losses import LossConfig
from core.toy.model import Architecture, ToyModel
from core.toy.scenes import generate_scenes
from core.toy.trainer import (TrainConfig, build_targets, check_head_isolation, evaluate_loss, loss_and_grads,
                              train)


@pytest.fixture(scope='module')
def scenes():
    return generate_scenes(32, base_seed=0)


@pytest.fixture
def model():
    return ToyModel.initialize(Architecture(), seed=0)


def _grads(model, scenes, cfg):
    targets = [build_targets(s, model.architecture) for s in scenes]
    return loss_and_grads(model, scenes, targets, cfg)


class TestTrainConfig:
    def test_rejects_zero_steps(self):
        with pytest.raises(ConfigError):
            TrainConfig(steps=0)

    def test_rejects_negative_learning_rate(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=-0.1)

    def test_rejects_empty_artifact_set(self):
        with pytest.raises(ConfigError):
            TrainConfig(included_artifacts=frozenset())


class TestTargets:
    def test_two_head_targets(self, scenes):
        targets = build_targets(scenes[0], Architecture())
        assert set(targets.heads) == {'polyp', 'artifact'}
        assert targets.heads['polyp'].y.shape == (192, 1)
        assert targets.heads['artifact'].y.shape == (192, 6)
        assert targets.heads['polyp'].norm >= 1.0

    def test_flat_targets_mark_included_columns(self, scenes):
        targets = build_targets(scenes[0], Architecture(mode=LabelMode.FLAT),
                                included_artifacts=frozenset({ArtifactClass.BLUR}))
        flat = targets.heads['flat']
        assert flat.y.shape == (192, 7)
        assert list(flat.active) == [True, True, False, False, False, False, False]


class TestGradients:
    def test_heads_are_isolated(self, model, scenes):
        assert check_head_isolation(model, scenes[:4], LossConfig(task_weights=(1, 1, 3))) == 0.0

    def test_isolation_needs_two_heads(self, scenes):
        flat = ToyModel.initialize(Architecture(mode=LabelMode.FLAT))
        with pytest.raises(ConfigError):
            check_head_isolation(flat, scenes[:2], LossConfig())

    def test_zero_polyp_weight_leaves_only_the_regularizer(self, model, scenes):
        _, grads = _grads(model, scenes[:4], LossConfig(task_weights=(1, 1, 0), reg_coeff=0.01))
        for name, value in model.params['polyp'].items():
            np.testing.assert_array_equal(grads['polyp'][name], 2.0 * 0.01 * value)

    def test_polyp_weight_scales_polyp_gradient(self, model, scenes):
        _, base = _grads(model, scenes[:4], LossConfig(task_weights=(1, 1, 1)))
        _, scaled = _grads(model, scenes[:4], LossConfig(task_weights=(1, 1, 3)))
        for name in ('W', 'b'):
            np.testing.assert_allclose(scaled['polyp'][name], 3.0 * base['polyp'][name], rtol=1e-10, atol=1e-14)

    def test_breakdown_matches_composite(self, model, scenes):
        cfg = LossConfig(task_weights=(2, 1, 3), reg_coeff=0.001)
        b = evaluate_loss(model, scenes[:4], cfg)
        expected = 3 * b.polyp + 1 * b.artifact + 2 * b.regression + 0.001 * b.regularizer
        assert b.total == pytest.approx(expected, rel=1e-12)

    def test_incomplete_class_weights(self, model, scenes):
        cfg = LossConfig(class_weights={PolypLabel.POLYP: 1.0})
        with pytest.raises(MissingWeight):
            _grads(model, scenes[:2], cfg)


class TestTrain:
    def test_loss_halves_and_heads_stay_isolated(self, model, scenes):
        cfg = TrainConfig(loss=LossConfig(task_weights=(1, 1, 3)), steps=500, learning_rate=0.01, batch_size=8)
        probe = scenes[:4]
        leaks = []

        def on_step(step, breakdown, current):
            if step % 100 == 0:
                leaks.append(check_head_isolation(current, probe, cfg.loss))

        initial = evaluate_loss(model, scenes, cfg.loss).total
        trained, trace = train(model, scenes, cfg, on_step=on_step)
        final = evaluate_loss(trained, scenes, cfg.loss).total

        assert len(trace) == 500
        assert final <= 0.5 * initial
        assert leaks == [0.0] * 5

    def test_returns_a_copy(self, model, scenes):
        before = model.params['shared']['W'].copy()
        train(model, scenes[:4], TrainConfig(steps=3, batch_size=2))
        np.testing.assert_array_equal(model.params['shared']['W'], before)

    def test_zero_learning_rate_changes_nothing(self, model, scenes):
        data = scenes[:4]
        trained, trace = train(model, data, TrainConfig(steps=5, learning_rate=0.0, batch_size=len(data)))
        for block, arrays in model.params.items():
            for name, value in arrays.items():
                np.testing.assert_array_equal(trained.params[block][name], value)
        assert [b.total for b in trace] == pytest.approx([trace[0].total] * 5, rel=1e-12)

    def test_same_seed_same_trace(self, model, scenes):
        cfg = TrainConfig(steps=20, batch_size=4, seed=3)
        _, first = train(model, scenes[:8], cfg)
        _, second = train(model, scenes[:8], cfg)
        assert [b.as_row() for b in first] == [b.as_row() for b in second]

    def test_divergence(self, model, scenes):
        cfg = TrainConfig(loss=LossConfig(reg_coeff=0.01), steps=5, learning_rate=1e308, batch_size=2)
        with np.errstate(all='ignore'):
            with pytest.raises(DivergenceError):
                train(model, scenes[:4], cfg)

    def test_empty_data(self, model):
        with pytest.raises(ConfigError):
            train(model, [], TrainConfig(steps=1))

    def test_mode_mismatch(self, model, scenes):
        with pytest.raises(ConfigError):
            train(model, scenes[:2], TrainConfig(steps=1, mode=LabelMode.FLAT))

    def test_flat_mode_trains(self, scenes):
        flat = ToyModel.initialize(Architecture(mode=LabelMode.FLAT), seed=1)
        cfg = TrainConfig(steps=50, batch_size=4, mode=LabelMode.FLAT)
        initial = evaluate_loss(flat, scenes[:8], cfg.loss).total
        trained, _ = train(flat, scenes[:8], cfg)
        assert evaluate_loss(trained, scenes[:8], cfg.loss).total < initial
