from logging import Logger
from pathlib import Path
from pypomes_core import (
    env_get_str, validate_float, validate_int, validate_format_error
)

# run parameters
TRAIN_ITERATIONS: int = 2000
TRAIN_EVAL_EVERY: int = 50
TRAIN_LEARNING_RATE: float = 1e-3
TRAIN_SINE_LEARNING_RATE: float = 1e-4
COMPARE_MAX_WORKERS: int = 1
DIVERGENCE_THRESHOLD: float = 1e6

# default output directory, overridable by environment
OUTPUT_DIR: Path = Path(env_get_str(key="SPB_OUTPUT_DIR") or "output")


def get_run_params() -> dict:

    return {
        "iterations": TRAIN_ITERATIONS,
        "eval-every": TRAIN_EVAL_EVERY,
        "learning-rate": TRAIN_LEARNING_RATE,
        "sine-learning-rate": TRAIN_SINE_LEARNING_RATE,
        "max-workers": COMPARE_MAX_WORKERS,
        "divergence-threshold": DIVERGENCE_THRESHOLD
    }


def set_run_params(errors: list[str],
                   scheme: dict,
                   logger: Logger) -> None:

    # validate the optional 'iterations' parameter
    iterations: int = validate_int(errors=errors,
                                   scheme=scheme,
                                   attr="iterations",
                                   min_val=0,
                                   max_val=1000000,
                                   logger=logger)
    # was it obtained ?
    if iterations is not None:
        # yes, set the corresponding global parameter
        global TRAIN_ITERATIONS
        TRAIN_ITERATIONS = iterations

    # validate the optional 'eval-every' parameter
    eval_every: int = validate_int(errors=errors,
                                   scheme=scheme,
                                   attr="eval-every",
                                   min_val=1,
                                   max_val=1000000,
                                   logger=logger)
    if eval_every:
        global TRAIN_EVAL_EVERY
        TRAIN_EVAL_EVERY = eval_every

    # validate the optional learning rates
    learning_rate: float = validate_float(errors=errors,
                                          scheme=scheme,
                                          attr="learning-rate",
                                          min_val=1e-8,
                                          max_val=1.0,
                                          logger=logger)
    if learning_rate:
        global TRAIN_LEARNING_RATE
        TRAIN_LEARNING_RATE = learning_rate
    sine_rate: float = validate_float(errors=errors,
                                      scheme=scheme,
                                      attr="sine-learning-rate",
                                      min_val=1e-8,
                                      max_val=1.0,
                                      logger=logger)
    if sine_rate:
        global TRAIN_SINE_LEARNING_RATE
        TRAIN_SINE_LEARNING_RATE = sine_rate

    # validate the optional 'max-workers' parameter
    workers: int = validate_int(errors=errors,
                                scheme=scheme,
                                attr="max-workers",
                                min_val=1,
                                max_val=64,
                                logger=logger)
    if workers:
        global COMPARE_MAX_WORKERS
        COMPARE_MAX_WORKERS = workers

    # validate the optional 'divergence-threshold' parameter
    threshold: float = validate_float(errors=errors,
                                      scheme=scheme,
                                      attr="divergence-threshold",
                                      min_val=1.0,
                                      max_val=1e300,
                                      logger=logger)
    if threshold:
        global DIVERGENCE_THRESHOLD
        DIVERGENCE_THRESHOLD = threshold


def assert_run_params(errors: list[str]) -> None:

    if TRAIN_ITERATIONS < 0 or TRAIN_ITERATIONS > 1000000:
        # 151: Invalid value {}: must be in the range {}
        errors.append(validate_format_error(151, TRAIN_ITERATIONS,
                                            [0, 1000000], "@iterations"))
    if TRAIN_EVAL_EVERY < 1:
        # 151: Invalid value {}: must be in the range {}
        errors.append(validate_format_error(151, TRAIN_EVAL_EVERY,
                                            [1, 1000000], "@eval-every"))
    if COMPARE_MAX_WORKERS < 1 or COMPARE_MAX_WORKERS > 64:
        # 151: Invalid value {}: must be in the range {}
        errors.append(validate_format_error(151, COMPARE_MAX_WORKERS,
                                            [1, 64], "@max-workers"))


def log(logger: Logger,
        level: int,
        msg: str) -> None:

    if logger:
        match level:
            case 10:    # DEBUG
                logger.debug(msg)
            case 20:    # INFO
                logger.info(msg)
            case 30:    # WARNING
                logger.warning(msg)
            case 40:    # ERROR
                logger.error(msg)
            case 50:    # CRITICAL
                logger.critical(msg)


def log_error(errors: list[str],
              err_msg: str,
              logger: Logger) -> None:
    """
    Log *err_msg* and add it to *errors*.

    :param errors: incidental errors
    :param err_msg: the error message
    :param logger: the logger object
    """
    if logger:
        logger.error(err_msg)
    if isinstance(errors, list):
        errors.append(err_msg)
