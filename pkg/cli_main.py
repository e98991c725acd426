import argparse
import json
import os
import sys
from pathlib import Path
from typing import Final

os.environ["PYPOMES_APP_PREFIX"] = "SPB"
os.environ["SPB_VALIDATION_MSG_PREFIX"] = ""

# ruff: noqa: E402
from pypomes_logging import (
    PYPOMES_LOGGER, logging_log_info, logging_log_error
)  # noqa: PyPep8

from benchmark import (
    spb_common, spb_metrics, spb_runner, spb_theory, spb_validator
)  # noqa: PyPep8
from benchmark.spb_encoders import EncoderSpec  # noqa: PyPep8
from benchmark.spb_training import TrainedModel  # noqa: PyPep8
from benchmark.steps import (
    spb_dataset, spb_evaluate, spb_persist
)  # noqa: PyPep8

# exit codes
EXIT_OK: Final[int] = 0
EXIT_FAILURE: Final[int] = 1
EXIT_USAGE: Final[int] = 2


class UsageError(Exception):
    pass


def _schema_keys() -> str:
    # dotted keys accepted by --override, derived from the experiment schema
    keys: list[str] = []
    for key, value in spb_validator.SCHEMA.items():
        if isinstance(value, dict):
            keys.extend(f"{key}.{sub}" for sub in value)
        else:
            keys.append(key)
    return "override keys: " + ", ".join(keys)


def _print_errors(errors: list[str]) -> None:
    for error in errors:
        print(f"error: {error}", file=sys.stderr)
        logging_log_error(msg=error)


def _load_scheme(args: argparse.Namespace) -> dict:
    # the JSON config, with overrides applied
    scheme: dict = {}
    if args.config:
        try:
            scheme = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as e:
            raise UsageError(f"cannot read config {args.config}: {e.strerror}") from e
        except ValueError as e:
            raise UsageError(f"config {args.config} is not valid JSON: {e}") from e
    errors: list[str] = []
    scheme = spb_validator.apply_overrides(errors=errors,
                                           scheme=scheme,
                                           overrides=args.override or [])
    if errors:
        raise UsageError("; ".join(errors))
    return scheme


def cmd_gen_data(args: argparse.Namespace) -> int:

    errors: list[str] = []
    output_dir: Path = Path(args.output_dir)
    if args.kind == "signal1d":
        dataset: spb_dataset.Dataset = spb_dataset.gen_signal_1d(errors=errors,
                                                                 seed=args.seed,
                                                                 n_samples=args.n_samples,
                                                                 n_modes=args.n_modes,
                                                                 max_frequency=args.max_frequency)
        path: Path = output_dir / f"signal1d-seed{args.seed}.csv"
        if dataset:
            spb_dataset.save_signal_csv(errors=errors,
                                        dataset=dataset,
                                        path=path,
                                        logger=PYPOMES_LOGGER)
    else:
        img: spb_metrics.ImageBuffer = spb_dataset.gen_image_2d(errors=errors,
                                                                seed=args.seed,
                                                                size=args.size,
                                                                channels=args.channels)
        path = output_dir / f"image2d-seed{args.seed}.{'pgm' if args.channels == 1 else 'ppm'}"
        if img:
            spb_dataset.save_image(errors=errors,
                                   img=img,
                                   path=path,
                                   logger=PYPOMES_LOGGER)
    if errors:
        _print_errors(errors)
        return EXIT_FAILURE
    print(path)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:

    scheme: dict = _load_scheme(args)
    errors: list[str] = []
    spec: spb_validator.ExperimentSpec = spb_validator.build_experiment_spec(errors=errors,
                                                                             scheme=scheme)
    if not spec:
        _print_errors(errors)
        return EXIT_USAGE

    output_dir: Path = Path(args.output_dir, spb_runner.safe_name(spec.name))
    row: dict = spb_runner.run_experiment(errors=errors,
                                          spec=spec,
                                          output_dir=output_dir,
                                          logger=PYPOMES_LOGGER)
    if row:
        print(f"experiment:       {spec.name}")
        print(f"status:           {row['status']}")
        print(f"final train loss: {row['final-train-loss']}")
        print(f"final test loss:  {row['final-test-loss']}")
        print(f"artifacts:        {output_dir}")
    if errors or not row or row["status"] != "ok":
        _print_errors(errors)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:

    tokens: list[str] = [token for group in args.encoders for token in group.split(",") if token.strip()]
    if not tokens:
        raise UsageError("the encoder list is empty")
    scheme: dict = _load_scheme(args)
    errors: list[str] = []
    encoders: list[EncoderSpec] = []
    for token in tokens:
        encoder: EncoderSpec = spb_validator.parse_encoder_token(errors=errors,
                                                                 token=token)
        if encoder:
            encoders.append(encoder)
    if errors:
        raise UsageError("; ".join(errors))

    output_dir: Path = Path(args.output_dir)
    report: dict = spb_runner.compare_encodings(errors=errors,
                                                base_scheme=scheme,
                                                encoders=encoders,
                                                seeds=args.seeds,
                                                output_dir=output_dir,
                                                max_workers=args.workers,
                                                logger=PYPOMES_LOGGER)
    if not report:
        _print_errors(errors)
        return EXIT_USAGE

    table: str = spb_runner.format_table(report=report)
    spb_persist.save_text(errors=errors,
                          text=table,
                          path=output_dir / "table.txt",
                          logger=PYPOMES_LOGGER)
    print(table, end="")
    if errors or any(row["status"] != "ok" for row in report["rows"]):
        _print_errors(errors)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_spectrum(args: argparse.Namespace) -> int:

    errors: list[str] = []
    model: TrainedModel = spb_persist.load_checkpoint(errors=errors,
                                                      path=args.checkpoint,
                                                      logger=PYPOMES_LOGGER)
    if not model:
        _print_errors(errors)
        return EXIT_USAGE
    spectrum: list[spb_theory.SpectrumEntry] = spb_evaluate.model_spectrum(errors=errors,
                                                                           model=model)
    if spectrum is None:
        _print_errors(errors)
        return EXIT_FAILURE

    path: Path = Path(args.output_dir, "spectrum.csv")
    spb_persist.save_spectrum_csv(errors=errors,
                                  spectrum=spectrum,
                                  path=path,
                                  logger=PYPOMES_LOGGER)
    print(f"{'component':>9}  {'octave':>6}  omega_star")
    for entry in spectrum:
        print(f"{entry.component:>9}  {entry.octave:>6}  {entry.omega_star:.6e}")
    if errors:
        _print_errors(errors)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_theory_check(args: argparse.Namespace) -> int:

    checks: list[dict] = spb_theory.run_theory_checks(seed=args.seed,
                                                      logger=PYPOMES_LOGGER)
    for check in checks:
        status: str = "PASS" if check["passed"] else "FAIL"
        print(f"{status}  {check['name']:<34} worst {check['worst-error']:.3e}  tolerance {check['tolerance']:.1e}")
    return EXIT_OK if all(check["passed"] for check in checks) else EXIT_FAILURE


def cmd_metrics(args: argparse.Namespace) -> int:

    errors: list[str] = []
    images: list[spb_metrics.ImageBuffer] = [spb_dataset.read_image(errors=errors,
                                                                    path=path,
                                                                    logger=PYPOMES_LOGGER)
                                             for path in args.images]
    if errors:
        _print_errors(errors)
        return EXIT_USAGE

    report: dict = spb_metrics.metrics_report(errors=errors,
                                              y_true=images[0],
                                              y_syn=images[1],
                                              y_train=images[2] if len(images) > 2 else None,
                                              levels=args.levels)
    if errors:
        _print_errors(errors)
        return EXIT_FAILURE
    print(json.dumps(spb_persist.sanitize_report(report), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:

    parser: argparse.ArgumentParser = argparse.ArgumentParser(
        prog="spebench",
        description="Sinusoidal positional encoding toolkit and benchmark harness"
    )
    parser.add_argument("--output-dir",
                        default=str(spb_common.OUTPUT_DIR),
                        help="where all outputs are written (env SPB_OUTPUT_DIR, default 'output')")
    subparsers = parser.add_subparsers(dest="command",
                                       required=True)

    gen_data = subparsers.add_parser("gen-data",
                                     help="write a synthetic 1D signal (CSV) or test image (PGM/PPM)")
    gen_data.add_argument("--kind", choices=spb_dataset.DATASET_KINDS, default="signal1d")
    gen_data.add_argument("--seed", type=int, default=0)
    gen_data.add_argument("--n-samples", type=int, default=256)
    gen_data.add_argument("--n-modes", type=int, default=4)
    gen_data.add_argument("--max-frequency", type=int, default=64)
    gen_data.add_argument("--size", type=int, default=64)
    gen_data.add_argument("--channels", type=int, choices=[1, 3], default=1)
    gen_data.set_defaults(handler=cmd_gen_data)

    for name, handler, text in [("train", cmd_train, "train one experiment and persist its artifacts"),
                                ("compare", cmd_compare, "compare encoders across seeds")]:
        sub: argparse.ArgumentParser = subparsers.add_parser(name,
                                                             help=text,
                                                             epilog=_schema_keys())
        sub.add_argument("--config", help="ExperimentSpec JSON file")
        sub.add_argument("--override", action="append", metavar="KEY=VALUE",
                         help="dotted-key override, e.g. optim.iterations=0 (repeatable)")
        sub.set_defaults(handler=handler)
        if name == "compare":
            sub.add_argument("--encoders", action="append", default=[], metavar="LIST",
                             help="comma-separated kind[:key=value;...] entries, e.g. pe,spe:L=12")
            sub.add_argument("--seeds", type=lambda text: [int(seed) for seed in text.split(",")],
                             default=[0], help="comma-separated seeds")
            sub.add_argument("--workers", type=int, default=None,
                             help="concurrent runs (default: the max-workers run parameter)")

    spectrum = subparsers.add_parser("spectrum",
                                     help="learned spectrum of an SPE or APE checkpoint")
    spectrum.add_argument("--checkpoint", required=True)
    spectrum.set_defaults(handler=cmd_spectrum)

    theory = subparsers.add_parser("theory-check",
                                   help="numerical checks of the encoding theory")
    theory.add_argument("--seed", type=int, default=0)
    theory.set_defaults(handler=cmd_theory_check)

    metrics = subparsers.add_parser("metrics",
                                    help="PSNR, SSIM, WDPR and power ratio of TRUE vs SYN; RWDE with TRAIN")
    metrics.add_argument("images", nargs="+", metavar="IMAGE",
                         help="TRUE SYN [TRAIN], PGM or PPM")
    metrics.add_argument("--levels", type=int, default=3)
    metrics.set_defaults(handler=cmd_metrics)

    return parser


def main(argv: list[str] = None) -> int:
    """
    Run one subcommand; returns 0 on success, 1 on a check or run failure, 2 on a usage or config error.
    """
    parser: argparse.ArgumentParser = build_parser()
    try:
        args: argparse.Namespace = parser.parse_args(argv)
        if args.command == "metrics" and len(args.images) not in (2, 3):
            parser.error("metrics takes two or three images")
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging_log_info(msg=f"Command {args.command}: {argv if argv is not None else sys.argv[1:]}")
    try:
        return args.handler(args)
    except UsageError as e:
        _print_errors([str(e)])
        return EXIT_USAGE


if __name__ == "__main__":

    sys.exit(main())
