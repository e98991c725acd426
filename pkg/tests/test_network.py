import numpy as np
import pytest

from benchmark.spb_encoders import PeConfig, SpeLayerParams, encoder_trainables, spe_apply
from benchmark.spb_network import (
    ACTIVATION_KINDS, MlpConfig, MlpParams, activation, activation_derivative,
    backward, finite_diff_gradient, forward, init_params
)
from conftest import build_model, central_difference, model_gradients, model_loss


def _half_square(outputs: np.ndarray) -> float:
    return 0.5 * float(np.sum(outputs ** 2))


class TestActivations:

    def test_values(self):
        z = np.array([-1.0, 0.0, 1.25])
        np.testing.assert_allclose(activation("relu", z), [0.0, 0.0, 1.25])
        np.testing.assert_allclose(activation("sine", z), np.sin(z))
        np.testing.assert_allclose(activation("sawtooth", z), [0.0, 0.0, 0.25])
        np.testing.assert_allclose(activation("periodic_relu", z), [np.sin(-1.0), 0.0, 1.25 + np.sin(1.25)])
        np.testing.assert_allclose(activation("identity", z), z)

    @pytest.mark.parametrize("kind", ACTIVATION_KINDS)
    def test_derivatives(self, kind: str):
        # away from kinks and jumps
        z = np.array([-2.3, -0.7, 0.4, 1.6, 2.2])
        h = 1e-6
        numeric = (activation(kind, z + h) - activation(kind, z - h)) / (2.0 * h)
        np.testing.assert_allclose(activation_derivative(kind, z), numeric, rtol=1e-6, atol=1e-8)


class TestConfig:

    def test_schedule(self):
        cfg = MlpConfig(layer_widths=[4, 8, 8, 1], first_activation="sine", hidden_activation="relu")
        assert cfg.schedule() == ["sine", "relu", "identity"]
        assert MlpConfig(layer_widths=[4, 1]).schedule() == ["identity"]

    @pytest.mark.parametrize("cfg", [
        MlpConfig(layer_widths=[4]),
        MlpConfig(layer_widths=[4, 0, 1]),
        MlpConfig(layer_widths=[4, 8, 1], hidden_activation="tanh"),
        MlpConfig(layer_widths=[4, 8, 1], init_scheme="xavier"),
    ])
    def test_rejects_invalid(self, cfg: MlpConfig):
        errors: list[str] = []
        assert init_params(errors, cfg) is None
        assert errors


class TestInitialization:

    def test_deterministic(self):
        cfg = MlpConfig(layer_widths=[6, 16, 16, 2], seed=9)
        a, b = init_params([], cfg), init_params([], cfg)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_siren_bounds(self):
        cfg = MlpConfig(layer_widths=[10, 64, 64, 1], first_activation="sine",
                        hidden_activation="sine", init_scheme="siren")
        params = init_params([], cfg)
        assert np.all(np.abs(params.weights[0]) <= 1.0 / 10)
        assert np.all(np.abs(params.weights[1]) <= np.sqrt(6.0 / 64))
        assert all(np.all(bias == 0.0) for bias in params.biases)

    def test_he_scale(self):
        params = init_params([], MlpConfig(layer_widths=[200, 300, 1], seed=1))
        assert np.std(params.weights[0]) == pytest.approx(np.sqrt(2.0 / 200), rel=0.05)


class TestForward:

    def test_single_affine_layer(self):
        params = MlpParams(weights=[np.array([[1.0, 2.0], [0.0, -1.0], [3.0, 1.0]])],
                           biases=[np.array([0.5, 0.0, -1.0])],
                           activations=["identity"])
        out, _ = forward([], params, np.array([[1.0, 1.0], [2.0, 0.0]]))
        np.testing.assert_array_equal(out, [[3.5, -1.0, 3.0], [2.5, 0.0, 5.0]])

    def test_sine_first_layer_is_a_dense_sinusoidal_layer(self):
        cfg = MlpConfig(layer_widths=[8, 6, 1], first_activation="sine", init_scheme="siren", seed=3)
        params = init_params([], cfg)
        params.biases[0] = np.random.default_rng(0).normal(size=6)
        features = np.random.default_rng(1).uniform(-1, 1, size=(5, 8))
        _, cache = forward([], params, features)
        layer = SpeLayerParams(mode="dense", W=params.weights[0], phase=params.biases[0], inner_pe=PeConfig(L=4))
        np.testing.assert_array_equal(cache.activations[1], spe_apply([], features, layer))

    def test_rejects_input_width(self):
        errors: list[str] = []
        params = init_params([], MlpConfig(layer_widths=[3, 4, 1]))
        out, cache = forward(errors, params, np.ones((2, 5)))
        assert out is None and cache is None and errors

    def test_reports_non_finite(self):
        errors: list[str] = []
        params = init_params([], MlpConfig(layer_widths=[1, 4, 1]))
        params.weights[0][:] = 1e308
        out, _ = forward(errors, params, np.array([[1e308]]))
        assert out is None and errors


class TestBackward:

    @pytest.mark.parametrize("first", ACTIVATION_KINDS)
    @pytest.mark.parametrize("hidden", ACTIVATION_KINDS)
    def test_matches_finite_differences(self, first: str, hidden: str):
        cfg = MlpConfig(layer_widths=[3, 5, 4, 2], first_activation=first, hidden_activation=hidden,
                        init_scheme="siren" if first == "sine" else "he", seed=17)
        params = init_params([], cfg)
        batch = np.random.default_rng(17).uniform(-1.0, 1.0, size=(4, 3))
        out, cache = forward([], params, batch)
        grads, _ = backward([], params, cache, out)
        numeric = finite_diff_gradient([], params, batch, _half_square, step=1e-7)
        for analytic, estimate in zip(grads.arrays(), numeric.arrays()):
            np.testing.assert_allclose(analytic, estimate, rtol=1e-4, atol=1e-6)

    def test_input_gradient(self):
        params = init_params([], MlpConfig(layer_widths=[3, 8, 1], first_activation="sine",
                                           init_scheme="siren", seed=2))
        batch = np.random.default_rng(2).uniform(-1.0, 1.0, size=(4, 3))
        out, cache = forward([], params, batch)
        _, input_grad = backward([], params, cache, out)
        for index in [(0, 0), (1, 2), (3, 1)]:
            numeric = central_difference(batch, index, lambda: _half_square(forward([], params, batch)[0]))
            assert input_grad[index] == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    def test_zero_output_gradient(self):
        params = init_params([], MlpConfig(layer_widths=[3, 4, 1]))
        out, cache = forward([], params, np.ones((2, 3)))
        grads, input_grad = backward([], params, cache, np.zeros_like(out))
        assert all(np.all(array == 0.0) for array in grads.arrays())
        assert np.all(input_grad == 0.0)

    def test_sine_gradient_at_zero_is_the_weight_row(self):
        params = MlpParams(weights=[np.array([[0.5, -1.0]]), np.array([[1.0]])],
                           biases=[np.array([-0.35]), np.zeros(1)],
                           activations=["sine", "identity"])
        out, cache = forward([], params, np.array([[0.3, -0.2]]))
        _, input_grad = backward([], params, cache, np.ones_like(out))
        np.testing.assert_allclose(input_grad, params.weights[0], rtol=1e-12)

    def test_rejects_mismatched_cache(self):
        errors: list[str] = []
        params = init_params([], MlpConfig(layer_widths=[3, 4, 1]))
        out, cache = forward([], params, np.ones((2, 3)))
        assert backward(errors, params, cache, np.ones((5, 1))) == (None, None)
        assert errors


class TestFiniteDifferences:

    def test_quadratic(self):
        params = MlpParams(weights=[np.array([[1.5]])], biases=[np.zeros(1)], activations=["identity"])
        numeric = finite_diff_gradient([], params, np.array([[2.0]]), _half_square, step=1e-3)
        # d/dw 0.5 (w x)^2 = w x^2
        assert numeric.weights[0][0, 0] == pytest.approx(6.0, abs=1e-6)

    def test_rejects_zero_step(self):
        errors: list[str] = []
        params = init_params([], MlpConfig(layer_widths=[1, 1]))
        assert finite_diff_gradient(errors, params, np.ones((1, 1)), _half_square, step=0.0) is None
        assert errors


@pytest.mark.parametrize(("kind", "params", "input_dim"), [
    ("spe-diagonal", {"L": 3}, 1),
    ("spe-diagonal", {"L": 2}, 2),
    ("ape", {"K": 3}, 1),
    ("ape", {"K": 2}, 2),
    ("hash", {"levels": 2, "table-size": 16}, 2),
])
def test_encoder_gradients_through_the_network(kind: str, params: dict, input_dim: int):
    """Encoder trainables receive exact gradients through the full model."""
    encoder, mlp = build_model(kind=kind, params=params, input_dim=input_dim, hidden=[6],
                               first_activation="sine", hidden_activation="sine", seed=5)
    rng = np.random.default_rng(5)
    coords = rng.uniform(0.0, 1.0, size=(8, input_dim))
    targets = rng.normal(size=(8, 1))
    _, encoder_grads = model_gradients(encoder, mlp, coords, targets)

    for name, array in encoder_trainables(encoder).items():
        indices = list(np.ndindex(array.shape))
        for index in indices[::max(1, len(indices) // 12)]:
            numeric = central_difference(array, index, lambda: model_loss(encoder, mlp, coords, targets), step=1e-6)
            assert encoder_grads[name][index] == pytest.approx(numeric, rel=1e-4, abs=1e-9), (name, index)


def test_dense_spe_network_gradients():
    encoder, mlp = build_model(kind="spe", params={"L": 3}, input_dim=1, hidden=[5, 5],
                               first_activation="sine", hidden_activation="sine", seed=8)
    rng = np.random.default_rng(8)
    coords = rng.uniform(0.0, 1.0, size=(10, 1))
    targets = rng.normal(size=(10, 1))
    grads, encoder_grads = model_gradients(encoder, mlp, coords, targets)
    assert encoder_grads == {}
    for index in np.ndindex(mlp.weights[0].shape):
        numeric = central_difference(mlp.weights[0], index, lambda: model_loss(encoder, mlp, coords, targets),
                                     step=1e-6)
        assert grads.weights[0][index] == pytest.approx(numeric, rel=1e-4, abs=1e-9)
