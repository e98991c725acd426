import csv
import io
import json
import sys
import numpy as np
from logging import Logger, DEBUG
from numpy.typing import NDArray
from pathlib import Path
from pypomes_core import exc_format, str_sanitize, validate_format_error
from typing import Any, Final

from benchmark import spb_common
from benchmark.spb_encoders import EncoderSpec, EncoderState, build_encoder, encoder_trainables
from benchmark.spb_network import MlpConfig, MlpParams
from benchmark.spb_theory import SpectrumEntry
from benchmark.spb_training import TrainRecord, TrainedModel
from benchmark.spb_validator import assert_report
from benchmark.steps.spb_dataset import Dataset
from benchmark.steps.spb_evaluate import report_value

CHECKPOINT_FORMAT: Final[str] = "spebench-checkpoint"
CHECKPOINT_VERSION: Final[int] = 1


def save_text(errors: list[str],
              text: str,
              path: Path | str,
              logger: Logger = None) -> bool:

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except Exception as e:
        exc_err: str = str_sanitize(exc_format(exc=e,
                                               exc_info=sys.exc_info()))
        # 102: Unexpected error: {}
        errors.append(validate_format_error(102, exc_err))
        return False

    spb_common.log(logger=logger,
                   level=DEBUG,
                   msg=f"Wrote {path}")
    return True


def _csv(header: list[str],
         rows: list[list[Any]]) -> str:
    # floats in shortest round-trip form
    buffer: io.StringIO = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([["" if value is None else repr(value) if isinstance(value, float) else value
                       for value in row] for row in rows])
    return buffer.getvalue()


def save_checkpoint(errors: list[str],
                    model: TrainedModel,
                    path: Path | str,
                    logger: Logger = None) -> bool:
    """
    Write the network and encoder parameters as JSON; float64 values survive the round trip exactly.
    """
    cfg: MlpConfig = model.model_cfg
    content: dict = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": {
            "layer-widths": list(cfg.layer_widths),
            "hidden-activation": cfg.hidden_activation,
            "first-activation": cfg.first_activation,
            "init-scheme": cfg.init_scheme,
            "seed": cfg.seed
        },
        "encoder": {
            "kind": model.encoder.spec.kind,
            "params": model.encoder.spec.params,
            "input-dim": model.encoder.input_dim
        },
        "params": {
            "weights": [weight.tolist() for weight in model.params.weights],
            "biases": [bias.tolist() for bias in model.params.biases],
            "activations": list(model.params.activations)
        },
        "encoder-params": {name: array.tolist()
                           for name, array in encoder_trainables(state=model.encoder).items()}
    }
    return save_text(errors=errors,
                     text=json.dumps(content),
                     path=path,
                     logger=logger)


def load_checkpoint(errors: list[str],
                    path: Path | str,
                    logger: Logger = None) -> TrainedModel | None:
    """
    Read a checkpoint written by *save_checkpoint*.

    :param errors: incidental errors
    :param path: the checkpoint file
    :param logger: optional logger
    :return: the model, or *None* on error
    """
    # initialize the return variable
    result: TrainedModel | None = None

    try:
        content: dict = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, str(path), f"unreadable checkpoint: {e}", "@checkpoint"))
        return result

    if not isinstance(content, dict) or content.get("format") != CHECKPOINT_FORMAT or \
       content.get("version") != CHECKPOINT_VERSION:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, str(path),
                                            f"not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} file", "@checkpoint"))
        return result

    try:
        model: dict = content["model"]
        encoder_info: dict = content["encoder"]
        encoder: EncoderState = build_encoder(errors=errors,
                                              spec=EncoderSpec(kind=encoder_info["kind"],
                                                               params=encoder_info["params"]),
                                              input_dim=encoder_info["input-dim"],
                                              logger=logger)
        if encoder is None:
            return result
        trainables: dict[str, NDArray] = encoder_trainables(state=encoder)
        for name, values in content["encoder-params"].items():
            trainables[name][...] = np.asarray(values, dtype=np.float64)
        params: MlpParams = MlpParams(weights=[np.asarray(weight, dtype=np.float64)
                                               for weight in content["params"]["weights"]],
                                      biases=[np.asarray(bias, dtype=np.float64)
                                              for bias in content["params"]["biases"]],
                                      activations=list(content["params"]["activations"]))
        result = TrainedModel(model_cfg=MlpConfig(layer_widths=model["layer-widths"],
                                                  hidden_activation=model["hidden-activation"],
                                                  first_activation=model["first-activation"],
                                                  init_scheme=model["init-scheme"],
                                                  seed=model["seed"]),
                              params=params,
                              encoder=encoder)
    except (KeyError, TypeError, ValueError) as e:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, str(path), f"malformed checkpoint: {e!r}", "@checkpoint"))
        return None

    spb_common.log(logger=logger,
                   level=DEBUG,
                   msg=f"Loaded checkpoint {path}, encoder {encoder.spec.label()}")
    return result


def save_record_csv(errors: list[str],
                    record: TrainRecord,
                    path: Path | str,
                    logger: Logger = None) -> bool:

    rows: list[list[Any]] = [[row.iteration, row.train_loss, row.test_loss] for row in record.rows]
    return save_text(errors=errors,
                     text=_csv(header=["iteration", "train_loss", "test_loss"],
                               rows=rows),
                     path=path,
                     logger=logger)


def sanitize_report(report: Any) -> Any:
    """
    Replace non-finite floats throughout *report* by their sentinels.
    """
    if isinstance(report, dict):
        return {key: sanitize_report(value) for key, value in report.items()}
    if isinstance(report, list):
        return [sanitize_report(value) for value in report]
    if isinstance(report, float):
        return report_value(report)
    return report


def save_report(errors: list[str],
                report: dict,
                path: Path | str,
                logger: Logger = None) -> bool:

    content: dict = sanitize_report(report)
    op_errors: list[str] = []
    assert_report(errors=op_errors,
                  report=content)
    if op_errors:
        errors.extend(op_errors)
        return False
    return save_text(errors=errors,
                     text=json.dumps(content, indent=2) + "\n",
                     path=path,
                     logger=logger)


def save_prediction_csv(errors: list[str],
                        dataset: Dataset,
                        prediction: NDArray,
                        path: Path | str,
                        logger: Logger = None) -> bool:
    """
    Plot data: coordinates, target and prediction per sample, and a *train* flag.
    """
    dims: int = dataset.coords.shape[1]
    header: list[str] = ["x", "y", "z"][:dims] if dims <= 3 else [f"x{i}" for i in range(dims)]
    if dataset.channels == 1:
        header.extend(["target", "prediction"])
    else:
        header.extend(f"target_{c}" for c in range(dataset.channels))
        header.extend(f"prediction_{c}" for c in range(dataset.channels))
    header.append("train")

    table: NDArray = np.concatenate([dataset.coords, dataset.targets, prediction], axis=1)
    rows: list[list[Any]] = [values + [int(flag)]
                             for values, flag in zip(table.tolist(), dataset.train_mask.tolist())]
    return save_text(errors=errors,
                     text=_csv(header=header,
                               rows=rows),
                     path=path,
                     logger=logger)


def save_spectrum_csv(errors: list[str],
                      spectrum: list[SpectrumEntry],
                      path: Path | str,
                      logger: Logger = None) -> bool:

    return save_text(errors=errors,
                     text=_csv(header=["component", "octave", "omega_star"],
                               rows=[list(entry) for entry in spectrum]),
                     path=path,
                     logger=logger)


def save_rows_csv(errors: list[str],
                  rows: list[dict],
                  path: Path | str,
                  logger: Logger = None) -> bool:
    """
    Flatten report rows into CSV columns; nested fields become *field.key* columns.
    """
    flat_rows: list[dict[str, Any]] = []
    for row in rows:
        flat: dict[str, Any] = {}
        for key, value in sanitize_report(row).items():
            if isinstance(value, dict):
                flat.update({f"{key}.{sub}": sub_value for sub, sub_value in value.items()})
            else:
                flat[key] = value
        flat_rows.append(flat)
    header: list[str] = list(dict.fromkeys(key for flat in flat_rows for key in flat))
    return save_text(errors=errors,
                     text=_csv(header=header,
                               rows=[[flat.get(key) for key in header] for flat in flat_rows]),
                     path=path,
                     logger=logger)
