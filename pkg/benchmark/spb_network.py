import sys
import numpy as np
from collections.abc import Callable
from dataclasses import dataclass
from numpy.typing import NDArray
from pypomes_core import exc_format, str_sanitize, validate_format_error
from typing import Final

# activation kinds, and the two initialization schemes
ACTIVATION_KINDS: Final[tuple[str, ...]] = (
    "relu", "sine", "sawtooth", "periodic_relu", "identity"
)
INIT_SCHEMES: Final[tuple[str, ...]] = ("siren", "he")


def activation(kind: str,
               z: NDArray) -> NDArray:

    match kind:
        case "relu":
            return np.maximum(z, 0.0)
        case "sine":
            return np.sin(z)
        case "sawtooth":
            return z - np.floor(z)
        case "periodic_relu":
            return np.maximum(z, 0.0) + np.sin(z)
    return z


def activation_derivative(kind: str,
                          z: NDArray) -> NDArray:

    match kind:
        case "relu":
            return np.where(z > 0.0, 1.0, 0.0)
        case "sine":
            return np.cos(z)
        case "sawtooth":
            # slope 1 everywhere, integers included
            return np.ones_like(z)
        case "periodic_relu":
            return np.where(z > 0.0, 1.0, 0.0) + np.cos(z)
    return np.ones_like(z)


@dataclass
class MlpConfig:
    layer_widths: list[int]
    hidden_activation: str = "relu"
    first_activation: str = "relu"
    init_scheme: str = "he"
    seed: int = 0

    def schedule(self) -> list[str]:
        """
        Activation per affine layer: first, then hidden, with an identity regression head.
        """
        depth: int = len(self.layer_widths) - 1
        if depth == 1:
            return ["identity"]
        return [self.first_activation] + [self.hidden_activation] * (depth - 2) + ["identity"]


@dataclass
class MlpParams:
    weights: list[NDArray]
    biases: list[NDArray]
    activations: list[str]

    def arrays(self) -> list[NDArray]:
        result: list[NDArray] = []
        for weight, bias in zip(self.weights, self.biases):
            result.extend([weight, bias])
        return result

    def copy(self) -> "MlpParams":
        return MlpParams(weights=[w.copy() for w in self.weights],
                         biases=[b.copy() for b in self.biases],
                         activations=list(self.activations))

    def zeros_like(self) -> "MlpParams":
        return MlpParams(weights=[np.zeros_like(w) for w in self.weights],
                         biases=[np.zeros_like(b) for b in self.biases],
                         activations=list(self.activations))


@dataclass
class ForwardCache:
    # activations[0] is the input batch; activations[k+1] = act(pre_activations[k])
    pre_activations: list[NDArray]
    activations: list[NDArray]


def assert_config(errors: list[str],
                  cfg: MlpConfig) -> None:

    if len(cfg.layer_widths) < 2 or any(width < 1 for width in cfg.layer_widths):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, cfg.layer_widths,
                                            "at least two positive widths required", "@layer-widths"))
    for attr, kind in [("hidden-activation", cfg.hidden_activation),
                       ("first-activation", cfg.first_activation)]:
        if kind not in ACTIVATION_KINDS:
            # 142: Invalid value {}: {}
            errors.append(validate_format_error(142, kind,
                                                f"must be one of {','.join(ACTIVATION_KINDS)}", f"@{attr}"))
    if cfg.init_scheme not in INIT_SCHEMES:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, cfg.init_scheme,
                                            f"must be one of {','.join(INIT_SCHEMES)}", "@init-scheme"))


def init_params(errors: list[str],
                cfg: MlpConfig) -> MlpParams | None:
    """
    Initialize weights and biases, deterministically for a given seed.

    Under *siren*, layer 0 draws from U(-1/fan_in, 1/fan_in), deeper sine layers from
    U(-sqrt(6/fan_in), sqrt(6/fan_in)), and the remaining layers use He initialization.
    Under *he*, every layer draws from N(0, 2/fan_in). Biases start at zero.

    :param errors: incidental errors
    :param cfg: the network configuration
    :return: the parameters, or *None* on error
    """
    # initialize the return variable
    result: MlpParams | None = None

    op_errors: list[str] = []
    assert_config(errors=op_errors,
                  cfg=cfg)
    if op_errors:
        errors.extend(op_errors)
        return result

    rng: np.random.Generator = np.random.default_rng(cfg.seed)
    schedule: list[str] = cfg.schedule()
    weights: list[NDArray] = []
    biases: list[NDArray] = []
    for layer, kind in enumerate(schedule):
        fan_in: int = cfg.layer_widths[layer]
        shape: tuple[int, int] = (cfg.layer_widths[layer + 1], fan_in)
        if cfg.init_scheme == "siren" and layer == 0:
            weight: NDArray = rng.uniform(-1.0 / fan_in, 1.0 / fan_in, size=shape)
        elif cfg.init_scheme == "siren" and kind == "sine":
            bound: float = np.sqrt(6.0 / fan_in)
            weight = rng.uniform(-bound, bound, size=shape)
        else:
            weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        weights.append(weight)
        biases.append(np.zeros(shape[0]))

    result = MlpParams(weights=weights,
                       biases=biases,
                       activations=schedule)
    return result


def forward(errors: list[str],
            params: MlpParams,
            batch: NDArray) -> tuple[NDArray | None, ForwardCache | None]:

    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != params.weights[0].shape[1]:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, batch.shape[1],
                                            f"network expects {params.weights[0].shape[1]} inputs", "@batch"))
        return None, None

    cache: ForwardCache = ForwardCache(pre_activations=[],
                                       activations=[batch])
    current: NDArray = batch
    for layer, (weight, bias, kind) in enumerate(zip(params.weights, params.biases, params.activations)):
        with np.errstate(over="ignore", invalid="ignore"):
            pre: NDArray = current @ weight.T + bias
        if not np.all(np.isfinite(pre)):
            # 101: {}
            errors.append(validate_format_error(101, f"non-finite pre-activation at layer {layer}"))
            return None, None
        current = activation(kind=kind,
                             z=pre)
        cache.pre_activations.append(pre)
        cache.activations.append(current)

    return current, cache


def backward(errors: list[str],
             params: MlpParams,
             cache: ForwardCache,
             output_gradient: NDArray) -> tuple[MlpParams | None, NDArray | None]:
    """
    Reverse-mode gradients of the forward map.

    :param errors: incidental errors
    :param params: the parameters used in the forward pass
    :param cache: the forward cache
    :param output_gradient: gradient of the objective with respect to the outputs
    :return: the parameter gradients and the gradient with respect to the input batch
    """
    if len(cache.pre_activations) != len(params.weights) or \
       output_gradient.shape != cache.activations[-1].shape:
        # 101: {}
        errors.append(validate_format_error(101, "forward cache does not match the parameters or gradient"))
        return None, None

    grads: MlpParams = params.zeros_like()
    upstream: NDArray = output_gradient
    try:
        for layer in reversed(range(len(params.weights))):
            grad_pre: NDArray = upstream * activation_derivative(kind=params.activations[layer],
                                                                 z=cache.pre_activations[layer])
            grads.weights[layer] = grad_pre.T @ cache.activations[layer]
            grads.biases[layer] = grad_pre.sum(axis=0)
            upstream = grad_pre @ params.weights[layer]
    except Exception as e:
        exc_err: str = str_sanitize(exc_format(exc=e,
                                               exc_info=sys.exc_info()))
        # 102: Unexpected error: {}
        errors.append(validate_format_error(102, exc_err))
        return None, None

    return grads, upstream


def finite_diff_gradient(errors: list[str],
                         params: MlpParams,
                         batch: NDArray,
                         loss_fn: Callable[[NDArray], float],
                         step: float = 1e-5) -> MlpParams | None:
    """
    Central-difference estimate of d loss_fn(forward(batch)) / d params, entry by entry.
    """
    if not step > 0.0:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, step, "must be positive", "@step"))
        return None

    result: MlpParams = params.zeros_like()
    perturbed: MlpParams = params.copy()
    for array, grad in zip(perturbed.arrays(), result.arrays()):
        for index in np.ndindex(array.shape):
            original: float = array[index]
            array[index] = original + step
            plus, _ = forward(errors, perturbed, batch)
            array[index] = original - step
            minus, _ = forward(errors, perturbed, batch)
            array[index] = original
            if plus is None or minus is None:
                return None
            grad[index] = (loss_fn(plus) - loss_fn(minus)) / (2.0 * step)

    return result
