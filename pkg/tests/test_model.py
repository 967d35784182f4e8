import numpy as np
import pytest
from scipy.special import softmax

from priormix.core.errors import DimensionMismatch, MagicMismatch, ParseError
from priormix.learning import model as mlp
from priormix.learning.model import MlpModel, backward, ce_loss_matrix, forward, predict, zo_loss_matrix
from priormix.utils.checkpoint_utils import load_checkpoint, save_checkpoint


class TestInit:
    def test_deterministic(self):
        a = mlp.init((16, 128, 128, 10), rng_seed=5)
        b = mlp.init((16, 128, 128, 10), rng_seed=5)
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_biases_zero_and_weights_bounded(self):
        model = mlp.init((16, 128, 10), rng_seed=5)
        for b in model.biases:
            assert np.all(b == 0.0)
        assert np.abs(model.weights[0]).max() <= 1 / np.sqrt(16)
        assert np.abs(model.weights[1]).max() <= 1 / np.sqrt(128)

    def test_zero_input_gives_zero_logits(self):
        model = mlp.init((16, 128, 128, 10), rng_seed=5)
        np.testing.assert_array_equal(forward(model, np.zeros((3, 16))), np.zeros((3, 10)))

    def test_preset_dims(self):
        assert mlp.preset_dims(3, 16, 10) == (16, 128, 10)
        assert mlp.preset_dims(5, 784, 10, width=64) == (784, 64, 64, 64, 10)


class TestForward:
    def test_linear_layer(self):
        W = np.array([[1.0, -2.0, 0.5], [3.0, 0.0, 1.0]])
        model = MlpModel(layer_dims=(2, 3), weights=(W,), biases=(np.zeros(3),))
        x = np.array([[2.0, -1.0]])
        np.testing.assert_allclose(forward(model, x), x @ W)

    def test_rows_are_independent(self, small_model, rng):
        X = rng.normal(size=(6, 4))
        full = forward(small_model, X)
        for i in range(6):
            np.testing.assert_allclose(forward(small_model, X[i:i + 1])[0], full[i])

    def test_dimension_mismatch(self, small_model):
        with pytest.raises(DimensionMismatch):
            forward(small_model, np.zeros((2, 5)))


class TestLosses:
    def test_uniform_logits(self):
        np.testing.assert_allclose(ce_loss_matrix(np.zeros((1, 10))), np.log(10.0))

    def test_saturated_logits(self):
        losses = ce_loss_matrix(np.array([[30.0, -30.0]]))
        assert losses[0, 0] == pytest.approx(0.0, abs=1e-20)
        assert losses[0, 1] == pytest.approx(60.0)

    def test_matches_naive_formula(self, rng):
        logits = rng.normal(scale=3.0, size=(20, 5))
        naive = -np.log(np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True))
        np.testing.assert_allclose(ce_loss_matrix(logits), naive, atol=1e-12)

    def test_zero_one(self):
        np.testing.assert_array_equal(zo_loss_matrix(np.array([[3.0, 1.0, 2.0]])), [[0, 1, 1]])
        np.testing.assert_array_equal(zo_loss_matrix(np.array([[5.0, 5.0, 0.0]])), [[0, 1, 1]])

    def test_predict_is_one_based(self):
        model = MlpModel(layer_dims=(2, 2), weights=(np.eye(2),), biases=(np.zeros(2),))
        np.testing.assert_array_equal(predict(model, np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])),
                                      [1, 2, 1])


class TestBackward:
    def test_zero_upstream(self, small_model, rng):
        X = rng.normal(size=(5, 4))
        grads = backward(small_model, X, np.zeros((5, 3)))
        for g in grads.parameters():
            assert np.all(g == 0.0)

    def test_matches_finite_differences(self, small_model, rng, finite_difference, grad_relative_error):
        model = small_model.with_parameters(
            [p + rng.normal(scale=0.1, size=p.shape) for p in small_model.parameters()])
        X = rng.normal(size=(16, 4))
        upstream = rng.normal(size=(16, 3))

        def objective(m):
            return float(np.sum(upstream * ce_loss_matrix(forward(m, X))))

        analytic = backward(model, X, upstream).parameters()
        numeric = finite_difference(objective, model)
        assert grad_relative_error(analytic, numeric) < 1e-4

    def test_linear_in_upstream(self, small_model, rng):
        X = rng.normal(size=(7, 4))
        upstream = rng.normal(size=(7, 3))
        base = backward(small_model, X, upstream).parameters()
        scaled = backward(small_model, X, -2.5 * upstream).parameters()
        for g, h in zip(base, scaled):
            np.testing.assert_allclose(h, -2.5 * g, atol=1e-12)

    def test_logit_gradient(self, rng):
        model = MlpModel(layer_dims=(3, 3), weights=(rng.normal(size=(3, 3)),), biases=(np.zeros(3),))
        X = rng.normal(size=(4, 3))
        upstream = rng.normal(size=(4, 3))
        p = softmax(forward(model, X), axis=1)
        delta = upstream.sum(axis=1, keepdims=True) * p - upstream
        np.testing.assert_allclose(backward(model, X, upstream).biases[0], delta.sum(axis=0))

    def test_upstream_shape(self, small_model):
        with pytest.raises(DimensionMismatch):
            backward(small_model, np.zeros((2, 4)), np.zeros((3, 3)))


class TestCheckpoint:
    def test_restores_parameters(self, tmp_path):
        model = mlp.init((5, 7, 3), rng_seed=2)
        path = save_checkpoint(model, tmp_path / "model.ckpt")
        assert path.read_bytes()[:4] == b"PMLP"
        restored = load_checkpoint(path)
        assert restored.layer_dims == (5, 7, 3)
        for p, q in zip(model.parameters(), restored.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(MagicMismatch):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = save_checkpoint(mlp.init((5, 7, 3), rng_seed=2), tmp_path / "model.ckpt")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ParseError):
            load_checkpoint(path)
