import math

import numpy as np
import pytest

from decohd.data import make_synthetic
from decohd.encoding import EncoderConfig, RandomProjectionEncoder, Standardizer
from decohd.model import ModelConfig, ModelParams, init_params, materialize_projectors
from decohd.ops import rng_from_seed
from decohd.training import (
    AdamW,
    Gradients,
    TrainConfig,
    TrainingDiverged,
    adamw_step,
    backward,
    batch_loss,
    cross_entropy,
    evaluate,
    train,
)
from tests.conftest import random_small_instance


def finite_difference_grads(h, y, params, projectors, eps=1e-4):
    """Central differences on every latent and head entry."""
    d_latents = [np.zeros_like(a) for a in params.latents]
    for li, lat in enumerate(params.latents):
        it = np.nditer(lat, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = lat[i]
            lat[i] = orig + eps
            lp = batch_loss(h, y, params, projectors)
            lat[i] = orig - eps
            lm = batch_loss(h, y, params, projectors)
            lat[i] = orig
            d_latents[li][i] = (lp - lm) / (2 * eps)
    d_head = np.zeros_like(params.head)
    it = np.nditer(params.head, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = params.head[i]
        params.head[i] = orig + eps
        lp = batch_loss(h, y, params, projectors)
        params.head[i] = orig - eps
        lm = batch_loss(h, y, params, projectors)
        params.head[i] = orig
        d_head[i] = (lp - lm) / (2 * eps)
    return Gradients(d_latents=d_latents, d_head=d_head)


def max_relative_error(analytic: Gradients, numeric: Gradients) -> float:
    worst = 0.0
    for a, n in zip(analytic.d_latents + [analytic.d_head], numeric.d_latents + [numeric.d_head]):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


class TestCrossEntropy:
    def test_uniform_two_class(self):
        assert cross_entropy(np.array([0.0, 0.0]), 0) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_log_sum_exp_stability(self):
        loss = cross_entropy(np.array([1000.0, 0.0]), 0)
        assert 0.0 <= loss < 1e-300

    def test_direct_softmax_oracle(self):
        # 64-bit direct computation: -log(e^3 / (e^1 + e^2 + e^3))
        expected = -math.log(math.exp(3.0) / (math.exp(1.0) + math.exp(2.0) + math.exp(3.0)))
        assert cross_entropy(np.array([1.0, 2.0, 3.0]), 2) == pytest.approx(expected, rel=1e-12)
        assert cross_entropy(np.array([1.0, 2.0, 3.0]), 2) == pytest.approx(0.40761, abs=5e-6)

    def test_bad_label(self):
        with pytest.raises(ValueError, match="label"):
            cross_entropy(np.array([0.0, 1.0]), 2)


class TestBackward:
    def test_head_residuals_sum_to_zero(self, rng):
        cfg, params, projectors, h, y = random_small_instance(rng)
        g = backward(h, y, params, projectors)
        np.testing.assert_allclose(g.d_head.sum(axis=0), 0.0, atol=1e-10)

    def test_matches_finite_differences(self, rng):
        for _ in range(5):
            cfg, params, projectors, h, y = random_small_instance(rng)
            analytic = backward(h, y, params, projectors)
            numeric = finite_difference_grads(h, y, params, projectors)
            assert max_relative_error(analytic, numeric) < 1e-4

    def test_zero_input_zero_gradients(self, rng):
        cfg, params, projectors, h, y = random_small_instance(rng)
        g = backward(np.zeros_like(h), y, params, projectors)
        # u = 0 annihilates everything except the (constant-logit) softmax,
        # whose head gradient is t == 0.
        np.testing.assert_array_equal(g.d_head, np.zeros_like(g.d_head))
        for d in g.d_latents:
            np.testing.assert_array_equal(d, np.zeros_like(d))


class TestAdamW:
    def _params(self):
        return ModelParams(latents=[np.array([[1.0, -2.0]])], head=np.array([[0.5], [0.25]]))

    def _zero_grads(self, params):
        return Gradients(
            d_latents=[np.zeros_like(a) for a in params.latents],
            d_head=np.zeros_like(params.head),
        )

    def test_zero_grad_no_decay_fixed_point(self):
        params = self._params()
        before = params.copy()
        opt = AdamW(learning_rate=0.1, weight_decay=0.0)
        for _ in range(3):
            opt.step(params, self._zero_grads(params))
        assert params.head.tobytes() == before.head.tobytes()
        assert params.latents[0].tobytes() == before.latents[0].tobytes()

    def test_first_step_matches_reference_recurrence(self, rng):
        # 64-bit reference implementation of the published update
        params = self._params()
        g = Gradients(d_latents=[rng.standard_normal((1, 2))], d_head=rng.standard_normal((2, 1)))
        lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8

        def reference(p, grad, t=1):
            m = (1 - b1) * grad
            v = (1 - b2) * grad * grad
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            return p - lr * m_hat / (np.sqrt(v_hat) + eps)

        expected_lat = reference(params.latents[0], g.d_latents[0])
        expected_head = reference(params.head, g.d_head)
        out = adamw_step(params, g, AdamW(learning_rate=lr, betas=(b1, b2), eps=eps))
        np.testing.assert_allclose(out.latents[0], expected_lat, rtol=1e-12)
        np.testing.assert_allclose(out.head, expected_head, rtol=1e-12)
        # and the direction is sign-like: g / (|g| + eps) up to bias correction
        step_dir = (params.latents[0] - out.latents[0]) / lr
        np.testing.assert_allclose(step_dir, np.sign(g.d_latents[0]), atol=1e-3)

    def test_decoupled_decay_shrinks(self):
        params = self._params()
        opt = AdamW(learning_rate=0.1, weight_decay=0.5)
        expected = params.head * (1.0 - 0.1 * 0.5) ** 2
        opt.step(params, self._zero_grads(params))
        opt.step(params, self._zero_grads(params))
        np.testing.assert_allclose(params.head, expected, rtol=1e-12)

    def test_decay_group_flags(self):
        params = self._params()
        before = params.copy()
        opt = AdamW(learning_rate=0.1, weight_decay=0.5, decay_latents=False)
        opt.step(params, self._zero_grads(params))
        assert params.latents[0].tobytes() == before.latents[0].tobytes()
        assert params.head.tobytes() != before.head.tobytes()


def _blob_setup(num_classes=2, dim=512, latent_dim=64, channels=(2,), separation=10.0, seed=3):
    train_ds, test_ds = make_synthetic(num_classes, 8, 100, separation=separation, seed=seed)
    enc = RandomProjectionEncoder(EncoderConfig(num_features=8, dim=dim, seed=11))
    # raw (uncentered) encoding: scores are even functions of h, and
    # centering two balanced blobs would fold them onto each other
    ident = Standardizer.identity(8)
    h_train = enc.encode_batch(train_ds.features, ident)
    h_test = enc.encode_batch(test_ds.features, ident)
    cfg = ModelConfig(
        channels_per_layer=channels, latent_dim=latent_dim, dim=dim,
        num_classes=num_classes, seed=5,
    )
    return cfg, h_train, train_ds.labels, h_test, test_ds.labels


class TestTrain:
    def test_synthetic_separability(self):
        cfg, h_tr, y_tr, h_te, y_te = _blob_setup()
        tcfg = TrainConfig(epochs=50, batch_size=200, microbatch_size=128,
                           learning_rate=0.05, dtype="float64", eval_every=50)
        result = train(cfg, tcfg, h_tr, y_tr, h_te, y_te)
        projectors = materialize_projectors(cfg, dtype=np.float64)
        assert evaluate(result.params, projectors, h_tr, y_tr) >= 0.99
        assert result.history[-1].mean_loss < result.history[0].mean_loss

    def test_zero_epochs_returns_init(self):
        cfg, h_tr, y_tr, _, _ = _blob_setup()
        tcfg = TrainConfig(epochs=0, dtype="float64")
        result = train(cfg, tcfg, h_tr, y_tr)
        ref = init_params(cfg, tcfg.sigma_init, dtype=np.float64)
        assert result.params.head.tobytes() == ref.head.tobytes()
        for a, b in zip(result.params.latents, ref.latents):
            assert a.tobytes() == b.tobytes()

    def test_bit_identical_reruns(self):
        cfg, h_tr, y_tr, _, _ = _blob_setup()
        tcfg = TrainConfig(epochs=5, batch_size=64, microbatch_size=32, dtype="float32")
        a = train(cfg, tcfg, h_tr, y_tr).params
        b = train(cfg, tcfg, h_tr, y_tr).params
        assert a.head.tobytes() == b.head.tobytes()
        for la, lb in zip(a.latents, b.latents):
            assert la.tobytes() == lb.tobytes()

    def test_frozen_matrices_untouched(self):
        cfg, h_tr, y_tr, _, _ = _blob_setup()
        before = [p.tobytes() for p in materialize_projectors(cfg, dtype=np.float64)]
        train(cfg, TrainConfig(epochs=3, dtype="float64"), h_tr, y_tr)
        after = [p.tobytes() for p in materialize_projectors(cfg, dtype=np.float64)]
        assert before == after

    def test_microbatch_invariance(self):
        cfg, h_tr, y_tr, _, _ = _blob_setup()
        h = h_tr[:256]
        y = y_tr[:256]
        base = dict(epochs=1, batch_size=256, learning_rate=0.01, dtype="float64")
        split = train(cfg, TrainConfig(microbatch_size=128, **base), h, y).params
        whole = train(cfg, TrainConfig(microbatch_size=256, **base), h, y).params
        np.testing.assert_allclose(split.head, whole.head, rtol=1e-6)
        for a, b in zip(split.latents, whole.latents):
            np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-12)

    def test_divergence_aborts_with_checkpoint(self):
        cfg, h_tr, y_tr, _, _ = _blob_setup()
        tcfg = TrainConfig(epochs=50, learning_rate=1e18, dtype="float32")
        with pytest.raises(TrainingDiverged) as excinfo:
            train(cfg, tcfg, h_tr, y_tr)
        assert excinfo.value.last_good is not None
        assert np.isfinite(excinfo.value.last_good.head).all()

    def test_running_history_columns(self):
        cfg, h_tr, y_tr, h_te, y_te = _blob_setup()
        tcfg = TrainConfig(epochs=3, learning_rate=0.01, dtype="float64", eval_every=2)
        result = train(cfg, tcfg, h_tr, y_tr, h_te, y_te)
        assert [h.epoch for h in result.history] == [0, 1, 2]
        assert math.isnan(result.history[0].test_accuracy)
        assert not math.isnan(result.history[1].test_accuracy)
        assert all(h.wall_seconds >= 0 for h in result.history)


class TestGradientAccumulationMatchesBackward:
    def test_one_step_equals_explicit_backward(self, rng):
        # one full-batch step of train() must equal AdamW applied to
        # backward()'s gradients
        cfg, params, projectors, h, y = random_small_instance(rng)
        tcfg = TrainConfig(
            epochs=1, batch_size=len(y), microbatch_size=len(y),
            learning_rate=1e-3, weight_decay=5e-5, dtype="float64",
        )
        result = train(cfg, tcfg, h, y, init=params)
        grads = backward(h, y, params, projectors)
        opt = AdamW(learning_rate=1e-3, weight_decay=5e-5)
        expected = adamw_step(params, grads, opt)
        np.testing.assert_allclose(result.params.head, expected.head, rtol=1e-12)
        for a, b in zip(result.params.latents, expected.latents):
            np.testing.assert_allclose(a, b, rtol=1e-12)
