import copy
from collections.abc import Callable
import numpy as np
import pytest
from numpy.typing import NDArray

from benchmark import spb_common
from benchmark.spb_encoders import EncoderSpec, EncoderState, build_encoder, encode, encode_backward
from benchmark.spb_network import MlpConfig, MlpParams, backward, forward, init_params
from benchmark.spb_training import mse_loss

# a 1D experiment small enough to train in well under a second
TINY_SIGNAL_SCHEME: dict = {
    "dataset": {"kind": "signal1d", "seed": 0, "n-samples": 32, "n-modes": 2, "max-frequency": 4},
    "encoder": {"kind": "pe", "L": 4},
    "model": {"hidden-widths": [16, 16]},
    "optim": {"iterations": 20, "eval-every": 5}
}

# the 2D counterpart, on an 8x8 synthetic image
TINY_IMAGE_SCHEME: dict = {
    "dataset": {"kind": "image2d", "seed": 0, "size": 8},
    "encoder": {"kind": "pe", "L": 3},
    "model": {"hidden-widths": [16]},
    "optim": {"iterations": 10, "eval-every": 5},
    "wdpr-levels": 2
}


@pytest.fixture
def signal_scheme() -> dict:
    return copy.deepcopy(TINY_SIGNAL_SCHEME)


@pytest.fixture
def image_scheme() -> dict:
    return copy.deepcopy(TINY_IMAGE_SCHEME)


@pytest.fixture(autouse=True)
def run_params(monkeypatch: pytest.MonkeyPatch) -> None:
    # run parameters are module globals; no test leaks its changes
    for name in ["TRAIN_ITERATIONS", "TRAIN_EVAL_EVERY", "TRAIN_LEARNING_RATE",
                 "TRAIN_SINE_LEARNING_RATE", "COMPARE_MAX_WORKERS", "DIVERGENCE_THRESHOLD"]:
        monkeypatch.setattr(spb_common, name, getattr(spb_common, name))


def model_loss(encoder: EncoderState,
               params: MlpParams,
               coords: NDArray,
               targets: NDArray) -> float:

    features, _ = encode(state=encoder,
                         coords=coords)
    outputs, _ = forward([], params, features)
    loss, _ = mse_loss([], outputs, targets)
    return loss


def model_gradients(encoder: EncoderState,
                    params: MlpParams,
                    coords: NDArray,
                    targets: NDArray) -> tuple[MlpParams, dict[str, NDArray]]:
    """
    Analytic gradients of the MSE through network and encoder, as the training loop computes them.
    """
    features, enc_cache = encode(state=encoder,
                                 coords=coords)
    outputs, cache = forward([], params, features)
    _, grad_out = mse_loss([], outputs, targets)
    grads, input_grad = backward([], params, cache, grad_out)
    return grads, encode_backward(state=encoder,
                                  cache=enc_cache,
                                  grad_features=input_grad)


def central_difference(array: NDArray,
                       index: tuple,
                       loss: Callable[[], float],
                       step: float = 1e-5) -> float:

    original: float = array[index]
    array[index] = original + step
    plus: float = loss()
    array[index] = original - step
    minus: float = loss()
    array[index] = original
    return (plus - minus) / (2.0 * step)


def build_model(kind: str,
                params: dict,
                input_dim: int,
                hidden: list[int],
                first_activation: str,
                hidden_activation: str,
                seed: int) -> tuple[EncoderState, MlpParams]:

    encoder: EncoderState = build_encoder(errors=[],
                                          spec=EncoderSpec(kind=kind,
                                                           params={**params, "seed": seed}),
                                          input_dim=input_dim)
    mlp: MlpParams = init_params(errors=[],
                                 cfg=MlpConfig(layer_widths=[encoder.output_dim, *hidden, 1],
                                               first_activation=first_activation,
                                               hidden_activation=hidden_activation,
                                               init_scheme="siren" if first_activation == "sine" else "he",
                                               seed=seed))
    return encoder, mlp
