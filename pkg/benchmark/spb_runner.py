import copy
import re
import statistics
from logging import Logger, INFO, WARNING
from multiprocessing import Pool
from numpy.typing import NDArray
from pathlib import Path
from pypomes_core import validate_format_error
from typing import Any

from benchmark import spb_common
from benchmark.spb_encoders import EncoderSpec
from benchmark.spb_metrics import ImageBuffer
from benchmark.spb_network import MlpConfig
from benchmark.spb_training import TrainRecord, TrainedModel, iterations_to_threshold, predict, train
from benchmark.spb_validator import DatasetSpec, ExperimentSpec, build_experiment_spec
from benchmark.steps.spb_dataset import Dataset, gen_image_2d, gen_signal_1d, image_dataset, load_image
from benchmark.steps.spb_evaluate import evaluate_experiment, model_spectrum
from benchmark.steps.spb_persist import (
    save_checkpoint, save_prediction_csv, save_record_csv, save_report, save_rows_csv, save_spectrum_csv
)

REPORT_FORMAT: str = "spebench-report"

# columns summarized per encoder in a comparison
MEDIAN_FIELDS: tuple[str, ...] = ("final-train-loss", "final-test-loss", "psnr", "ssim", "rwde")


def build_dataset(errors: list[str],
                  spec: DatasetSpec,
                  logger: Logger = None) -> Dataset | None:

    params: dict = spec.params
    if spec.kind == "signal1d":
        return gen_signal_1d(errors=errors,
                             seed=params["seed"],
                             n_samples=params["n-samples"],
                             n_modes=params["n-modes"],
                             max_frequency=params["max-frequency"])
    if "path" in params:
        return load_image(errors=errors,
                          path=params["path"],
                          train_stride=params["train-stride"],
                          logger=logger)
    img: ImageBuffer = gen_image_2d(errors=errors,
                                    seed=params["seed"],
                                    size=params["size"],
                                    channels=params["channels"])
    return image_dataset(errors=errors,
                         img=img,
                         train_stride=params["train-stride"]) if img else None


def _persist(errors: list[str],
             spec: ExperimentSpec,
             dataset: Dataset,
             model: TrainedModel,
             record: TrainRecord,
             row: dict,
             output_dir: Path,
             logger: Logger) -> None:
    # the artifacts of one run, all under output_dir
    save_report(errors=errors,
                report={"format": REPORT_FORMAT,
                        "kind": "experiment",
                        "spec": spec.to_scheme(),
                        "rows": [row]},
                path=output_dir / "report.json",
                logger=logger)
    save_record_csv(errors=errors,
                    record=record,
                    path=output_dir / "record.csv",
                    logger=logger)
    save_checkpoint(errors=errors,
                    model=model,
                    path=output_dir / "checkpoint.json",
                    logger=logger)
    if not record.diverged:
        prediction: NDArray = predict(model=model,
                                      coords=dataset.coords)
        save_prediction_csv(errors=errors,
                            dataset=dataset,
                            prediction=prediction,
                            path=output_dir / "prediction.csv",
                            logger=logger)
        if "spectrum" in row:
            save_spectrum_csv(errors=errors,
                              spectrum=model_spectrum(errors=errors,
                                                      model=model),
                              path=output_dir / "spectrum.csv",
                              logger=logger)


def execute_experiment(errors: list[str],
                       spec: ExperimentSpec,
                       output_dir: Path | str | None,
                       logger: Logger = None) -> tuple[dict | None, TrainRecord | None]:
    """
    Build the data, train, evaluate and optionally persist one experiment.

    :param errors: incidental errors
    :param spec: the experiment
    :param output_dir: where to write the artifacts, or *None* to skip persistence
    :param logger: optional logger
    :return: the report row and the training record, or *None*s if the run could not start
    """
    dataset: Dataset = build_dataset(errors=errors,
                                     spec=spec.dataset,
                                     logger=logger)
    if not dataset:
        return None, None

    model_cfg: MlpConfig = spec.model.mlp_config(encoder=spec.encoder,
                                                 input_dim=dataset.coords.shape[1],
                                                 output_dim=dataset.targets.shape[1])
    model, record = train(errors=errors,
                          model_cfg=model_cfg,
                          encoder_spec=spec.encoder,
                          dataset=dataset,
                          optim_cfg=spec.optim,
                          logger=logger)
    if not model:
        return None, None

    row: dict = evaluate_experiment(errors=errors,
                                    spec=spec,
                                    dataset=dataset,
                                    model=model,
                                    record=record,
                                    logger=logger)
    if output_dir is not None:
        _persist(errors=errors,
                 spec=spec,
                 dataset=dataset,
                 model=model,
                 record=record,
                 row=row,
                 output_dir=Path(output_dir),
                 logger=logger)
    return row, record


def run_experiment(errors: list[str],
                   spec: ExperimentSpec,
                   output_dir: Path | str | None,
                   logger: Logger = None) -> dict | None:
    """
    Run one experiment, persisting its report, record, checkpoint and plot data under *output_dir*.

    A diverged run still yields its row (status *diverged*), with the diagnostic added to *errors*.
    """
    spb_common.log(logger=logger,
                   level=INFO,
                   msg=f"Experiment {spec.name} started")
    row, _ = execute_experiment(errors=errors,
                                spec=spec,
                                output_dir=output_dir,
                                logger=logger)
    if row:
        spb_common.log(logger=logger,
                       level=INFO,
                       msg=f"Experiment {spec.name} finished, status {row['status']}")
    return row


def safe_name(name: str) -> str:
    # a single path segment: separators and other specials collapse to underscores
    return re.sub(r"[^A-Za-z0-9.\-]+", "_", name)


def run_label(encoder: EncoderSpec,
              seed: int) -> str:
    return safe_name(encoder.label()) + f"/seed-{seed}"


def _run_job(spec: ExperimentSpec,
             output_dir: str | None) -> tuple[dict | None, TrainRecord | None, list[str]]:
    # worker entry point, logging stays in the parent
    errors: list[str] = []
    row, record = execute_experiment(errors=errors,
                                     spec=spec,
                                     output_dir=output_dir)
    return row, record, errors


def _median(values: list[Any]) -> float | None:
    numbers: list[float] = [value for value in values
                            if isinstance(value, int | float) and not isinstance(value, bool)]
    return statistics.median(numbers) if numbers else None


def compare_encodings(errors: list[str],
                      base_scheme: dict,
                      encoders: list[EncoderSpec],
                      seeds: list[int],
                      output_dir: Path | str | None,
                      max_workers: int = None,
                      logger: Logger = None) -> dict | None:
    """
    Run every encoder against every seed on the same base experiment and tabulate the results.

    Each encoder replaces the base scheme's encoder section, so encoder-dependent defaults (first
    activation, initialization, learning rate) follow the encoder. One seed drives data, encoder,
    weights and batches. Failed runs become *failed* rows. Iterations-to-threshold is measured at the
    base threshold if given, else at the weakest encoder's median final train loss.

    :param errors: incidental errors
    :param base_scheme: the base experiment scheme
    :param encoders: the encoders to compare
    :param seeds: the seeds, at least one
    :param output_dir: where to write the comparison and per-run artifacts, or *None*
    :param max_workers: concurrent runs (defaults to the *max-workers* run parameter)
    :param logger: optional logger
    :return: the comparison report, or *None* on error
    """
    # initialize the return variable
    result: dict | None = None

    op_errors: list[str] = []
    if not encoders:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, encoders, "at least one encoder required", "@encoders"))
    if not seeds:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, seeds, "at least one seed required", "@seeds"))
    specs: list[ExperimentSpec] = []
    for encoder in encoders:
        scheme: dict = copy.deepcopy(base_scheme)
        scheme["encoder"] = {"kind": encoder.kind, **encoder.params}
        spec: ExperimentSpec = build_experiment_spec(errors=op_errors,
                                                     scheme=scheme)
        if spec:
            specs.extend(spec.with_seed(seed) for seed in sorted(seeds))
    if op_errors:
        errors.extend(op_errors)
        return result

    workers: int = max_workers or spb_common.COMPARE_MAX_WORKERS
    jobs: list[tuple[ExperimentSpec, str | None]] = [
        (spec, None if output_dir is None else str(Path(output_dir, "runs", run_label(encoder=spec.encoder,
                                                                                        seed=spec.model.seed))))
        for spec in specs
    ]
    spb_common.log(logger=logger,
                   level=INFO,
                   msg=f"Comparison started: {len(encoders)} encoders x {len(seeds)} seeds, {workers} workers")
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=min(workers, len(jobs))) as pool:
            outcomes: list[tuple] = pool.starmap(_run_job, jobs)
    else:
        outcomes = [_run_job(*job) for job in jobs]

    # assemble the rows in job order: encoder order, then ascending seed
    rows: list[dict] = []
    records: list[TrainRecord | None] = []
    for (spec, _), (row, record, run_errors) in zip(jobs, outcomes):
        if row is None or row["status"] != "ok":
            diagnostic: str = "; ".join(run_errors) or "run failed"
            spb_common.log(logger=logger,
                           level=WARNING,
                           msg=f"Run {run_label(spec.encoder, spec.model.seed)} failed: {diagnostic}")
            row = {"name": spec.name,
                   "encoder": spec.encoder.label(),
                   "seed": spec.model.seed,
                   "status": "failed",
                   "diagnostic": diagnostic}
        rows.append(row)
        records.append(record)

    labels: list[str] = list(dict.fromkeys(row["encoder"] for row in rows))
    medians: dict[str, dict] = {}
    for label in labels:
        group: list[dict] = [row for row in rows if row["encoder"] == label and row["status"] == "ok"]
        medians[label] = {field: _median([row.get(field) for row in group]) for field in MEDIAN_FIELDS}
        medians[label]["runs"] = len(group)

    threshold: float | None = specs[0].threshold
    if threshold is None:
        finals: list[float] = [median["final-train-loss"] for median in medians.values()
                               if median["final-train-loss"] is not None]
        threshold = max(finals) if finals else None
    for row, record in zip(rows, records):
        if row["status"] == "ok" and threshold is not None:
            row["threshold"] = threshold
            row["iterations-to-threshold"] = iterations_to_threshold(record=record,
                                                                     threshold=threshold)
    for label in labels:
        medians[label]["iterations-to-threshold"] = _median([row.get("iterations-to-threshold")
                                                             for row in rows
                                                             if row["encoder"] == label and row["status"] == "ok"])

    result = {
        "format": REPORT_FORMAT,
        "kind": "comparison",
        "spec": base_scheme,
        "encoders": labels,
        "seeds": sorted(seeds),
        "threshold": threshold,
        "rows": rows,
        "medians": medians
    }
    if output_dir is not None:
        save_report(errors=errors,
                    report=result,
                    path=Path(output_dir, "report.json"),
                    logger=logger)
        save_rows_csv(errors=errors,
                      rows=rows,
                      path=Path(output_dir, "rows.csv"),
                      logger=logger)
    spb_common.log(logger=logger,
                   level=INFO,
                   msg=f"Comparison finished: {sum(row['status'] == 'ok' for row in rows)}/{len(rows)} runs ok")
    return result


def format_table(report: dict) -> str:
    """
    Fixed-width text rendering of a comparison: per-seed rows, then per-encoder medians.
    """
    def cell(value: Any) -> str:
        if isinstance(value, float):
            return f"{value:.4e}"
        return "-" if value is None else str(value)

    columns: list[str] = ["encoder", "seed", "status", "final-train-loss", "final-test-loss",
                          "iterations-to-threshold", "psnr", "ssim"]
    table: list[list[str]] = [columns]
    table.extend([cell(row.get(column)) for column in columns] for row in report["rows"])
    table.extend([label, "median", f"{median['runs']} ok"] +
                 [cell(median.get(column)) for column in columns[3:]]
                 for label, median in report["medians"].items())
    widths: list[int] = [max(len(line[index]) for line in table) for index in range(len(columns))]
    lines: list[str] = ["  ".join(text.ljust(width) for text, width in zip(line, widths)).rstrip()
                        for line in table]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"
