import math
import numpy as np
from logging import Logger, DEBUG
from numpy.typing import NDArray
from pypomes_core import validate_format_error
from typing import Any

from benchmark import spb_common
from benchmark.spb_encoders import ADAPTIVE_KINDS
from benchmark.spb_metrics import ImageBuffer, SSIM_WINDOW, image_from_array, power_ratio, psnr, rwde, ssim, wdpr
from benchmark.spb_theory import SpectrumEntry, ape_spectrum, learned_spectrum, spectrum_energy_fraction
from benchmark.spb_training import TrainRecord, TrainedModel, iterations_to_threshold, predict
from benchmark.spb_validator import ExperimentSpec
from benchmark.steps.spb_dataset import Dataset


def model_spectrum(errors: list[str],
                   model: TrainedModel) -> list[SpectrumEntry] | None:
    """
    The learned spectrum of an SPE (dense or diagonal) or APE model, descending by w*.
    """
    match model.encoder.spec.kind:
        case "spe":
            return learned_spectrum(W=model.params.weights[0],
                                    cfg=model.encoder.pe)
        case "spe-diagonal":
            return learned_spectrum(W=model.encoder.spe.W,
                                    cfg=model.encoder.pe)
        case "ape":
            return ape_spectrum(omegas=model.encoder.ape.omegas)
    # 101: {}
    errors.append(validate_format_error(101, f"encoder has no learned spectrum ({model.encoder.spec.kind})"))
    return None


def report_value(value: float | None) -> float | str | None:
    """
    JSON-safe metric value: infinities become *"inf"*, NaN becomes *"failed"*.
    """
    if value is None or isinstance(value, str):
        return value
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "failed"
    return value


def spectrum_summary(spectrum: list[SpectrumEntry],
                     max_octave: int) -> dict[str, Any]:

    octaves: list[int] = [entry.octave for entry in spectrum]
    return {
        "components": len(spectrum),
        "max-omega-star": spectrum[0].omega_star if spectrum else 0.0,
        "mean-omega-star": float(np.mean([entry.omega_star for entry in spectrum])) if spectrum else 0.0,
        "dominant-octave": max(set(octaves), key=octaves.count) if octaves else None,
        "max-octave": max_octave,
        "spectrum-energy-fraction": spectrum_energy_fraction(spectrum=spectrum,
                                                             max_octave=max_octave)
    }


def _image_metrics(errors: list[str],
                   spec: ExperimentSpec,
                   dataset: Dataset,
                   prediction: NDArray,
                   row: dict[str, Any]) -> None:
    # pixel-level metrics on the test partition, image-level metrics on the full rendering
    test: NDArray = ~dataset.train_mask
    if "psnr" in spec.metrics:
        row["psnr"] = report_value(psnr(errors,
                                        image_from_array(dataset.targets[None, test]),
                                        image_from_array(prediction[None, test])))
    truth: ImageBuffer = dataset.as_image()
    rendered: ImageBuffer = dataset.as_image(values=prediction)
    if "ssim" in spec.metrics:
        row["ssim"] = report_value(ssim(errors, truth, rendered,
                                        window=min(SSIM_WINDOW, dataset.width, dataset.height)))
    if "wdpr" in spec.metrics:
        row["wdpr"] = {}
        row["power-ratio"] = {}
        for level in range(1, spec.wdpr_levels + 1):
            # levels the image size cannot support are reported as failed
            level_errors: list[str] = []
            value: float | None = wdpr(level_errors, truth, rendered, level)
            ratio: float | None = power_ratio(level_errors, truth, rendered, level)
            row["wdpr"][str(level)] = "failed" if value is None else report_value(value)
            row["power-ratio"][str(level)] = "failed" if ratio is None else report_value(ratio)
    if "rwde" in spec.metrics:
        rwde_errors: list[str] = []
        value = rwde(rwde_errors,
                     image_from_array(dataset.targets[None, dataset.train_mask]),
                     image_from_array(prediction[None, test]),
                     image_from_array(dataset.targets[None, test]))
        if value is not None:
            row["rwde"] = value
        else:
            row["rwde"] = "perfect" if any("perfect" in err for err in rwde_errors) else "failed"


def evaluate_experiment(errors: list[str],
                        spec: ExperimentSpec,
                        dataset: Dataset,
                        model: TrainedModel,
                        record: TrainRecord,
                        logger: Logger = None) -> dict[str, Any]:
    """
    Assemble the report row of one trained experiment.

    Losses and iterations-to-threshold come from the record. Image tasks add test-pixel PSNR,
    full-image SSIM, per-level WDPR and power ratio, and RWDE over the pixel distributions.
    Adaptive encoders add a learned-spectrum summary.

    :param errors: incidental errors
    :param spec: the experiment
    :param dataset: the data the model was trained on
    :param model: the trained model
    :param record: the training record
    :param logger: optional logger
    :return: the report row
    """
    threshold: float = spec.threshold if spec.threshold is not None else record.final_train_loss
    row: dict[str, Any] = {
        "name": spec.name,
        "encoder": spec.encoder.label(),
        "seed": spec.model.seed,
        "status": "diverged" if record.diverged else "ok",
        "final-train-loss": report_value(record.final_train_loss),
        "final-test-loss": report_value(record.final_test_loss),
        "threshold": report_value(threshold),
        "iterations-to-threshold": iterations_to_threshold(record=record,
                                                           threshold=threshold)
    }
    if record.diverged:
        row["diagnostic"] = record.diagnostic
        return row

    if dataset.kind == "image2d":
        prediction: NDArray = predict(model=model,
                                      coords=dataset.coords)
        _image_metrics(errors=errors,
                       spec=spec,
                       dataset=dataset,
                       prediction=prediction,
                       row=row)

    if "spectrum" in spec.metrics and model.encoder.spec.kind in ADAPTIVE_KINDS:
        spectrum: list[SpectrumEntry] = model_spectrum(errors=errors,
                                                       model=model)
        row["spectrum"] = spectrum_summary(spectrum=spectrum,
                                           max_octave=model.encoder.pe.L if model.encoder.pe else len(spectrum))

    spb_common.log(logger=logger,
                   level=DEBUG,
                   msg=f"Evaluated {spec.name}: {row}")
    return row
