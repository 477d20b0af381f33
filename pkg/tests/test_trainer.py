import numpy as np
import pytest

from mmdisaster import trainer
from mmdisaster.embedders import Embedded
from mmdisaster.errors import ConfigError
from mmdisaster.gradcheck import max_relative_error
from mmdisaster.model import ModelConfig, cross_entropy, forward, forward_with_masks, init_params
from mmdisaster.tensor_core import finite_diff_grad, make_rng
from mmdisaster.trainer import AdamState, TrainConfig, adam_step, backward, batch_loss_and_grad, train


def random_problem(cfg, seed):
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed).map(lambda m: m + 0.2 * rng.standard_normal(m.shape))
    emb = Embedded(rng.standard_normal(cfg.d_t), rng.standard_normal(cfg.d_i), rng.standard_normal(cfg.d_g))
    return params, emb, int(rng.integers(cfg.num_classes))


def numeric_grads(params, emb, label, cfg, masks=None, eps=1e-5):
    out = {}
    for name, value in params.items():
        def f(m, name=name):
            trial = params.copy()
            setattr(trial, name, m)
            return cross_entropy(forward_with_masks(emb, trial, cfg, masks).y_hat, label)
        out[name] = finite_diff_grad(f, value, eps)
    return out


class TestBackward:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences(self, small_cfg, seed):
        params, emb, label = random_problem(small_cfg, seed)
        g = backward(forward(emb, params, small_cfg), params, label)
        for name, num in numeric_grads(params, emb, label, small_cfg).items():
            assert max_relative_error(getattr(g, name), num) < 1e-4, name

    def test_train_mode_masks_are_differentiated(self, small_cfg):
        params, emb, label = random_problem(small_cfg, 42)
        trace = forward(emb, params, small_cfg, "train", make_rng(3))
        g = backward(trace, params, label)
        for name, num in numeric_grads(params, emb, label, small_cfg, trace.dropout_masks).items():
            assert max_relative_error(getattr(g, name), num) < 1e-4, name

    def test_one_hot_prediction_zero_head_gradient(self, small_cfg):
        params, emb, _ = random_problem(small_cfg, 1)
        params.w_c = np.zeros_like(params.w_c)
        params.b_c = np.array([[1000.0, 0.0, 0.0]])
        g = backward(forward(emb, params, small_cfg), params, 0)
        assert np.max(np.abs(g.w_c)) < 1e-9 and np.max(np.abs(g.b_c)) < 1e-9

    def test_dead_value_path(self, small_cfg):
        params, emb, label = random_problem(small_cfg, 2)
        params.w_v = np.zeros_like(params.w_v)
        g = backward(forward(emb, params, small_cfg), params, label)
        np.testing.assert_array_equal(g.w_a, 0.0)
        np.testing.assert_array_equal(g.b_a, 0.0)

    def test_batch_gradient_is_mean(self, small_cfg):
        problems = [random_problem(small_cfg, s) for s in range(6)]
        params = problems[0][0]
        embs = [p[1] for p in problems]
        labels = [p[2] for p in problems]
        _, batch_g, _ = batch_loss_and_grad(embs, labels, params, small_cfg)
        per = [backward(forward(e, params, small_cfg), params, y) for e, y in zip(embs, labels)]
        for name, m in batch_g.items():
            np.testing.assert_allclose(m, np.mean([getattr(g, name) for g in per], axis=0), atol=1e-10, rtol=0)

    def test_label_range(self, small_cfg):
        params, emb, _ = random_problem(small_cfg, 3)
        with pytest.raises(ConfigError):
            backward(forward(emb, params, small_cfg), params, 3)


class TestAdam:
    def test_zero_gradient_fixed_point(self, small_cfg):
        params = init_params(small_cfg, 0)
        cfg = TrainConfig(weight_decay=0.0)
        new, state = adam_step(params, params.zeros_like(), AdamState.zeros(params), cfg)
        for name, m in params.items():
            np.testing.assert_array_equal(getattr(new, name), m)
        assert state.t == 1

    def test_first_step_is_signed_lr(self, small_cfg):
        rng = np.random.default_rng(0)
        params = init_params(small_cfg, 0)
        grads = params.map(lambda m: rng.standard_normal(m.shape))
        cfg = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
        new, _ = adam_step(params, grads, AdamState.zeros(params), cfg)
        for name, m in params.items():
            delta = getattr(new, name) - m
            np.testing.assert_allclose(delta, -1e-3 * np.sign(getattr(grads, name)), atol=1e-6, rtol=0)

    def test_decay_only(self, small_cfg):
        params = init_params(small_cfg, 0)
        cfg = TrainConfig(learning_rate=1e-4, weight_decay=0.01)
        new, _ = adam_step(params, params.zeros_like(), AdamState.zeros(params), cfg)
        for name, m in params.items():
            np.testing.assert_array_equal(getattr(new, name), m * (1 - 1e-4 * 0.01))

    def test_moments_track_gradients(self, small_cfg):
        params = init_params(small_cfg, 0)
        grads = params.map(lambda m: np.full(m.shape, -2.0))
        _, state = adam_step(params, grads, AdamState.zeros(params), TrainConfig())
        np.testing.assert_allclose(state.m.w_q, -0.2)
        np.testing.assert_allclose(state.v.w_q, 0.004)

    @pytest.mark.parametrize("kwargs", [{"learning_rate": 0}, {"batch_size": 0}, {"weight_decay": 1.0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class TestTrain:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.weight_decay) == (1e-4, 32, 50, 0.01)
        assert (cfg.beta1, cfg.beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)

    def test_single_class_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(num_classes=1)

    def test_empty_and_bad_labels(self, small_cfg):
        with pytest.raises(ConfigError):
            train([], [], small_cfg, TrainConfig())
        _, emb, _ = random_problem(small_cfg, 0)
        with pytest.raises(ConfigError):
            train([emb], [5], small_cfg, TrainConfig())

    def test_default_config_fits_separable_set(self, clean_dataset, embedders):
        embs = [embedders.embed(s) for s in clean_dataset.samples]
        _, history = train(embs, clean_dataset.labels, ModelConfig(3), TrainConfig(seed=0))
        assert len(history) == 50
        assert history[-1].train_accuracy >= 0.95

    def test_same_seed_same_history(self, clean_dataset, embedders):
        embs = [embedders.embed(s) for s in clean_dataset.samples]
        runs = [train(embs, clean_dataset.labels, ModelConfig(3, d=16), TrainConfig(epochs=3, seed=4))[1]
                for _ in range(2)]
        assert [r.to_json() for r in runs[0]] == [r.to_json() for r in runs[1]]

    def test_zero_epochs_returns_init(self, small_cfg):
        _, emb, _ = random_problem(small_cfg, 0)
        params, history = train([emb], [0], small_cfg, TrainConfig(epochs=0, seed=3))
        assert history == []
        np.testing.assert_array_equal(params.w_q, init_params(small_cfg, 3).w_q)

    def test_fixed_batch_descent(self, small_cfg):
        problems = [random_problem(small_cfg, s) for s in range(8)]
        embs, labels = [p[1] for p in problems], [p[2] for p in problems]
        params = init_params(small_cfg, 0)
        state = AdamState.zeros(params)
        cfg = TrainConfig(learning_rate=1e-2)
        start, _, _ = batch_loss_and_grad(embs, labels, params, small_cfg)
        for _ in range(200):
            _, g, _ = batch_loss_and_grad(embs, labels, params, small_cfg)
            params, state = adam_step(params, g, state, cfg)
        end, _, _ = batch_loss_and_grad(embs, labels, params, small_cfg)
        assert end < start

    def test_each_epoch_is_a_permutation(self, small_cfg, monkeypatch):
        problems = [random_problem(small_cfg, s) for s in range(7)]
        embs, labels = [p[1] for p in problems], [p[2] for p in problems]
        seen = []
        real = trainer.batch_loss_and_grad

        def spy(batch_embs, *args, **kwargs):
            seen.extend(id(e) for e in batch_embs)
            return real(batch_embs, *args, **kwargs)

        monkeypatch.setattr(trainer, "batch_loss_and_grad", spy)
        train(embs, labels, small_cfg, TrainConfig(epochs=3, batch_size=3))
        ids = sorted(id(e) for e in embs)
        for epoch in range(3):
            assert sorted(seen[epoch * 7:(epoch + 1) * 7]) == ids
        assert seen[:7] != seen[7:14]
