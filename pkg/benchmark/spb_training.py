import sys
import time
import numpy as np
from dataclasses import dataclass, field
from logging import Logger, DEBUG, INFO
from numpy.typing import NDArray
from pypomes_core import exc_format, str_sanitize, validate_format_error
from typing import Final

from benchmark import spb_common
from benchmark.spb_encoders import (
    EncoderSpec, EncoderState, build_encoder, encode, encode_backward, encoder_trainables
)
from benchmark.spb_network import (
    MlpConfig, MlpParams, backward, forward, init_params
)
from benchmark.steps.spb_dataset import Dataset

OPTIMIZERS: Final[tuple[str, ...]] = ("adam", "sgd")


@dataclass
class OptimConfig:
    algorithm: str = "adam"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    iterations: int = 2000
    eval_every: int = 50
    seed: int = 0
    # 0 trains on the full batch
    batch_size: int = 0


@dataclass
class RecordRow:
    iteration: int
    train_loss: float
    test_loss: float
    wall_seconds: float | None = None


@dataclass
class TrainRecord:
    rows: list[RecordRow] = field(default_factory=list)
    diverged: bool = False
    diagnostic: str | None = None

    @property
    def final_train_loss(self) -> float:
        return self.rows[-1].train_loss

    @property
    def final_test_loss(self) -> float:
        return self.rows[-1].test_loss


@dataclass
class TrainedModel:
    model_cfg: MlpConfig
    params: MlpParams
    encoder: EncoderState


def mse_loss(errors: list[str],
             pred: NDArray,
             target: NDArray) -> tuple[float | None, NDArray | None]:
    """
    Mean squared error over all components, and its gradient 2(pred-target)/N.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, pred.shape,
                                            f"does not match target shape {target.shape}", "@pred"))
        return None, None
    if pred.size == 0:
        # 101: {}
        errors.append(validate_format_error(101, "empty batch"))
        return None, None

    diff: NDArray = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def assert_optim_config(errors: list[str],
                        cfg: OptimConfig) -> None:

    if cfg.algorithm not in OPTIMIZERS:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, cfg.algorithm,
                                            f"must be one of {','.join(OPTIMIZERS)}", "@algorithm"))
    if not cfg.learning_rate > 0.0:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, cfg.learning_rate, "must be positive", "@learning-rate"))
    for attr, value in [("beta1", cfg.adam_beta1), ("beta2", cfg.adam_beta2)]:
        if not 0.0 < value < 1.0:
            # 151: Invalid value {}: must be in the range {}
            errors.append(validate_format_error(151, value, "(0, 1)", f"@{attr}"))
    if not cfg.adam_eps > 0.0:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, cfg.adam_eps, "must be positive", "@eps"))
    if cfg.iterations < 0 or cfg.eval_every < 1 or cfg.batch_size < 0:
        # 101: {}
        errors.append(validate_format_error(101, "iterations must be >= 0, eval-every >= 1, batch-size >= 0"))


class Optimizer:
    """
    Adam or plain SGD over a fixed list of arrays, updated in place.
    """

    def __init__(self,
                 cfg: OptimConfig,
                 arrays: list[NDArray]) -> None:
        self.cfg: OptimConfig = cfg
        self.arrays: list[NDArray] = arrays
        self.first: list[NDArray] = [np.zeros_like(array) for array in arrays]
        self.second: list[NDArray] = [np.zeros_like(array) for array in arrays]
        self.steps: int = 0

    def step(self,
             grads: list[NDArray]) -> None:

        self.steps += 1
        cfg: OptimConfig = self.cfg
        if cfg.algorithm == "sgd":
            for array, grad in zip(self.arrays, grads):
                array -= cfg.learning_rate * grad
            return

        correction1: float = 1.0 - cfg.adam_beta1 ** self.steps
        correction2: float = 1.0 - cfg.adam_beta2 ** self.steps
        for array, grad, first, second in zip(self.arrays, grads, self.first, self.second):
            first *= cfg.adam_beta1
            first += (1.0 - cfg.adam_beta1) * grad
            second *= cfg.adam_beta2
            second += (1.0 - cfg.adam_beta2) * grad ** 2
            array -= cfg.learning_rate * (first / correction1) / (np.sqrt(second / correction2) + cfg.adam_eps)


def predict(model: TrainedModel,
            coords: NDArray) -> NDArray | None:

    features, _ = encode(state=model.encoder,
                         coords=coords)
    outputs, _ = forward([], model.params, features)
    return outputs


def _loss_on(model: TrainedModel,
             coords: NDArray,
             targets: NDArray) -> float:

    outputs: NDArray = predict(model=model,
                               coords=coords)
    if outputs is None:
        return float("nan")
    return float(np.mean((outputs - targets) ** 2))


def _ordered_grads(names: list[str],
                   mlp_grads: MlpParams,
                   encoder_grads: dict[str, NDArray]) -> list[NDArray]:
    return mlp_grads.arrays() + [encoder_grads[name] for name in names]


def train(errors: list[str],
          model_cfg: MlpConfig,
          encoder_spec: EncoderSpec,
          dataset: Dataset,
          optim_cfg: OptimConfig,
          logger: Logger = None) -> tuple[TrainedModel | None, TrainRecord | None]:
    """
    Train the encoder's trainables jointly with the network, deterministically.

    The record holds the initial evaluation, one row every *eval_every* iterations, and the final
    iteration. A non-finite loss, or one above the divergence threshold, stops the run: the partial
    record is returned with *diverged* set and an error is reported.

    :param errors: incidental errors
    :param model_cfg: the network configuration, its first width matching the encoder output
    :param encoder_spec: the encoder specification
    :param dataset: the data, with its train/test partition
    :param optim_cfg: the optimizer configuration
    :param logger: optional logger
    :return: the trained model and its record, or *None*s on error
    """
    # assert the preconditions
    op_errors: list[str] = []
    assert_optim_config(errors=op_errors,
                        cfg=optim_cfg)
    if not dataset.train_mask.any() or dataset.train_mask.all():
        # 101: {}
        op_errors.append(validate_format_error(101, "dataset needs non-empty train and test partitions"))
    encoder: EncoderState | None = None
    if not op_errors:
        encoder = build_encoder(errors=op_errors,
                                spec=encoder_spec,
                                input_dim=dataset.coords.shape[1],
                                logger=logger)
    if encoder and model_cfg.layer_widths[0] != encoder.output_dim:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, model_cfg.layer_widths[0],
                                               f"encoder emits {encoder.output_dim} features", "@layer-widths"))
    params: MlpParams | None = None
    if not op_errors:
        params = init_params(errors=op_errors,
                             cfg=model_cfg)
    if op_errors:
        errors.extend(op_errors)
        return None, None

    model: TrainedModel = TrainedModel(model_cfg=model_cfg,
                                       params=params,
                                       encoder=encoder)
    train_coords, train_targets = dataset.coords[dataset.train_mask], dataset.targets[dataset.train_mask]
    test_coords, test_targets = dataset.coords[~dataset.train_mask], dataset.targets[~dataset.train_mask]

    trainables: dict[str, NDArray] = encoder_trainables(state=encoder)
    names: list[str] = list(trainables)
    optimizer: Optimizer = Optimizer(cfg=optim_cfg,
                                     arrays=params.arrays() + [trainables[name] for name in names])
    rng: np.random.Generator = np.random.default_rng(optim_cfg.seed)
    record: TrainRecord = TrainRecord()
    started: float = time.perf_counter()

    def evaluate(iteration: int) -> None:
        row: RecordRow = RecordRow(iteration=iteration,
                                   train_loss=_loss_on(model, train_coords, train_targets),
                                   test_loss=_loss_on(model, test_coords, test_targets),
                                   wall_seconds=time.perf_counter() - started)
        record.rows.append(row)
        spb_common.log(logger=logger,
                       level=DEBUG,
                       msg=f"Iteration {iteration}: train {row.train_loss:.6e}, test {row.test_loss:.6e}")

    spb_common.log(logger=logger,
                   level=INFO,
                   msg=f"Training started, encoder {encoder_spec.label()}, "
                       f"widths {model_cfg.layer_widths}, {optim_cfg.algorithm} "
                       f"lr {optim_cfg.learning_rate}, {optim_cfg.iterations} iterations")
    evaluate(iteration=0)
    for iteration in range(1, optim_cfg.iterations + 1):
        coords, targets = train_coords, train_targets
        if 0 < optim_cfg.batch_size < len(train_coords):
            picks: NDArray = rng.choice(len(train_coords), size=optim_cfg.batch_size, replace=False)
            coords, targets = train_coords[picks], train_targets[picks]

        try:
            features, enc_cache = encode(state=encoder,
                                         coords=coords)
            step_errors: list[str] = []
            outputs, cache = forward(step_errors, params, features)
            loss: float | None = None
            if outputs is not None:
                loss, grad_out = mse_loss(step_errors, outputs, targets)
            if loss is None or not np.isfinite(loss) or loss > spb_common.DIVERGENCE_THRESHOLD:
                record.diverged = True
                record.diagnostic = (f"diverged at iteration {iteration}: loss {loss}"
                                     + (f" ({step_errors[0]})" if step_errors else ""))
                break
            mlp_grads, input_grad = backward(step_errors, params, cache, grad_out)
            if mlp_grads is None:
                record.diverged = True
                record.diagnostic = f"backward failed at iteration {iteration}: {step_errors}"
                break
            encoder_grads: dict[str, NDArray] = encode_backward(state=encoder,
                                                                cache=enc_cache,
                                                                grad_features=input_grad)
            optimizer.step(grads=_ordered_grads(names=names,
                                                mlp_grads=mlp_grads,
                                                encoder_grads=encoder_grads))
        except Exception as e:
            record.diverged = True
            record.diagnostic = str_sanitize(exc_format(exc=e,
                                                        exc_info=sys.exc_info()))
            break

        if iteration % optim_cfg.eval_every == 0 or iteration == optim_cfg.iterations:
            evaluate(iteration=iteration)

    if record.diverged:
        err_msg: str = validate_format_error(101, f"Training aborted, {record.diagnostic}")
        spb_common.log_error(errors=errors,
                             err_msg=err_msg,
                             logger=logger)
    else:
        spb_common.log(logger=logger,
                       level=INFO,
                       msg=f"Training finished, final train loss {record.final_train_loss:.6e}, "
                           f"test loss {record.final_test_loss:.6e}")
    return model, record


def iterations_to_threshold(record: TrainRecord,
                            threshold: float) -> int | None:
    """
    The first recorded iteration whose train loss is at or below *threshold*, if any.
    """
    for row in record.rows:
        if row.train_loss <= threshold:
            return row.iteration
    return None
