import json
import os
import sys
from flask import (
    Blueprint, Flask, Response, jsonify, request, send_from_directory
)
from flask_cors import CORS
from flask_swagger_ui import get_swaggerui_blueprint
from pathlib import Path
from typing import Final

os.environ["PYPOMES_APP_PREFIX"] = "SPB"
os.environ["SPB_VALIDATION_MSG_PREFIX"] = ""

# ruff: noqa: E402
from pypomes_core import (
    get_versions, exc_format, str_as_list, validate_format_error, validate_format_errors, validate_int, validate_str
)  # noqa: PyPep8
from pypomes_http import (
    http_get_parameter, http_get_parameters
)  # noqa: PyPep8
from pypomes_logging import (
    PYPOMES_LOGGER,
    logging_send_entries, logging_log_info, logging_log_error
)  # noqa: PyPep8

from benchmark import (
    spb_common, spb_metrics, spb_runner, spb_theory, spb_validator
)  # noqa: PyPep8
from benchmark.spb_encoders import EncoderSpec  # noqa: PyPep8
from benchmark.steps import (
    spb_dataset, spb_persist
)  # noqa: PyPep8

# establish the current version
APP_VERSION: Final[str] = "1.0.0"

# create the Flask application
app: Flask = Flask(__name__)

# support cross-origin resource sharing
CORS(app)

# configure jsonify() with 'ensure_ascii=False'
app.config["JSON_AS_ASCII"] = False

# make SpeBench's API available as a Swagger app
swagger_blueprint: Blueprint = get_swaggerui_blueprint(
    base_url="/swagger",
    api_url="/swagger/spebench.json",
    config={"defaultModelsExpandDepth": -1}
)
app.register_blueprint(swagger_blueprint)


@app.route("/swagger/spebench.json")
def swagger() -> Response:
    """
    Entry point for the microservice providing OpenAPI specifications in the Swagger standard.

    By default, the browser is instructed to save the file, instead of displaying its contents.

    This parameter can optionally be provided to indicate otherwise:
        - attach=<1|t|true|0|f|false>: 'true' if not specified

    :return: the requested OpenAPI specifications
    """
    # define the treatment to be given to the file by the client
    param: str = http_get_parameter(request, "attach")
    attach: bool = not isinstance(param, str) or param.lower() in ["1", "t", "true"]

    return send_from_directory(directory=Path(Path.cwd(), "swagger"),
                               path="spebench.json",
                               as_attachment=attach)


@app.route(rule="/version",
           methods=["GET"])
def version() -> Response:
    """
    Obtain the current version of *SpeBench*, along with the *PyPomes* modules in use.

    :return: the versions in execution
    """
    # register the request
    logging_log_info(msg=f"Request {request.path}")

    versions: dict = get_versions()
    versions["SpeBench"] = APP_VERSION

    # assign to the return variable
    result: Response = jsonify(versions)

    # log the response
    logging_log_info(msg=f"Response {request.path}: {result}")

    return result


@app.route(rule="/get-log",
           methods=["GET"])
def get_log() -> Response:
    """
    Entry point for obtaining the execution log of the system.

    The query parameters are optional, and are used to filter the records to be returned:
        - *attach*: whether browser should display or persist file (defaults to True - persist it)
        - *level*: <log-level>
        - *from-datetime*: <YYYYMMDDhhmmss>
        - *to-datetime*: <YYYYMMDDhhmmss>
        - *last-days*: <n>
        - *last-hours*: <n>

    :return: the requested log data
    """
    # register the request
    req_query: str = request.query_string.decode()
    logging_log_info(msg=f"Request {request.path}?{req_query}")

    # run the request
    result: Response = logging_send_entries(request=request)

    # log the response
    logging_log_info(msg=f"Response {request.path}?{req_query}: {result}")

    return result


@app.route(rule="/run-params",
           methods=["GET", "PATCH"])
def handle_run_params() -> Response:
    """
    Entry point for inspecting and configuring the run parameters.

    For configuring, these are the accepted parameters:
        - *iterations*: default number of optimizer steps (defaults to 2000)
        - *eval-every*: default evaluation interval, in steps (defaults to 50)
        - *learning-rate*: default Adam/SGD learning rate (defaults to 1e-3)
        - *sine-learning-rate*: default learning rate for sine-first networks (defaults to 1e-4)
        - *max-workers*: concurrent runs in a comparison (defaults to 1)
        - *divergence-threshold*: training loss above which a run is declared diverged (defaults to 1e6)

    :return: the operation outcome
    """
    # initialize the errors list
    errors: list[str] = []

    # retrieve the input parameters
    scheme: dict = http_get_parameters(request=request)

    reply: dict | None = None
    match request.method:
        case "GET":
            reply = spb_common.get_run_params()
        case "PATCH":
            spb_common.set_run_params(errors=errors,
                                      scheme=scheme,
                                      logger=PYPOMES_LOGGER)
            if not errors:
                spb_common.assert_run_params(errors=errors)
            if not errors:
                reply = {"status": "Configuration updated"}

    # build the response
    result: Response = _build_response(errors=errors,
                                       reply=reply)
    # log the response
    logging_log_info(msg=f"Response {request.path}?{scheme}: {result}")

    return result


@app.route(rule="/theory-check",
           methods=["GET"])
def theory_check() -> Response:
    """
    Run the numerical checks of the encoding theory.

    The optional parameter *seed* (defaults to 0) drives the randomized checks.

    :return: the checks, with an overall *passed* flag
    """
    # initialize the errors list
    errors: list[str] = []

    # retrieve the input parameters
    scheme: dict = http_get_parameters(request=request)

    reply: dict | None = None
    seed: int = validate_int(errors=errors,
                             scheme=scheme,
                             attr="seed",
                             min_val=0,
                             max_val=spb_validator.SEED_MAX)
    if not errors:
        checks: list[dict] = spb_theory.run_theory_checks(seed=seed or 0,
                                                          logger=PYPOMES_LOGGER)
        reply = {
            "passed": all(check["passed"] for check in checks),
            "checks": spb_persist.sanitize_report(checks)
        }

    # build the response
    result: Response = _build_response(errors=errors,
                                       reply=reply)
    # log the response
    logging_log_info(msg=f"Response {request.path}?{scheme}: {result}")

    return result


@app.route(rule="/metrics",
           methods=["POST"])
def compute_metrics() -> Response:
    """
    Compute the image metrics of a synthesis against its ground truth.

    These are the expected parameters:
        - *true*: path of the ground-truth image (PGM or PPM)
        - *synthesis*: path of the synthesized image
        - *train*: optional path of the training-view image, enabling RWDE
        - *levels*: wavelet levels for WDPR and power ratio (defaults to 3)

    :return: PSNR, SSIM, WDPR and power ratio per level, and RWDE
    """
    # initialize the errors list
    errors: list[str] = []

    # retrieve the input parameters
    scheme: dict = http_get_parameters(request=request)

    reply: dict | None = None
    for attr in ["true", "synthesis"]:
        validate_str(errors=errors,
                     scheme=scheme,
                     attr=attr,
                     required=True)
    levels: int = validate_int(errors=errors,
                               scheme=scheme,
                               attr="levels",
                               min_val=1,
                               max_val=16)

    if not errors:
        images: dict[str, spb_metrics.ImageBuffer] = {}
        for attr in ["true", "synthesis", "train"]:
            if scheme.get(attr):
                images[attr] = spb_dataset.read_image(errors=errors,
                                                      path=scheme[attr],
                                                      logger=PYPOMES_LOGGER)
        if not errors:
            report: dict = spb_metrics.metrics_report(errors=errors,
                                                      y_true=images["true"],
                                                      y_syn=images["synthesis"],
                                                      y_train=images.get("train"),
                                                      levels=levels or 3)
            if report:
                reply = spb_persist.sanitize_report(report)

    # build the response
    result: Response = _build_response(errors=errors,
                                       reply=reply)
    # log the response
    logging_log_info(msg=f"Response {request.path}?{scheme}: {result}")

    return result


@app.route(rule="/train",
           methods=["POST"])
def train_experiment() -> Response:
    """
    Train one experiment and persist its artifacts.

    The request body is an experiment scheme (sections *dataset*, *encoder*, *model*, *optim*,
    plus *name*, *metrics*, *threshold* and *wdpr-levels*), and optionally:
        - *output-dir*: where to write the artifacts (defaults to the configured output directory)

    :return: the experiment's report row
    """
    # initialize the errors list
    errors: list[str] = []

    # retrieve the input parameters
    scheme: dict = http_get_parameters(request=request)
    output_dir: str | None = scheme.pop("output-dir", None)

    reply: dict | None = None
    spec: spb_validator.ExperimentSpec = spb_validator.build_experiment_spec(errors=errors,
                                                                             scheme=scheme)
    if spec:
        row: dict = spb_runner.run_experiment(errors=errors,
                                              spec=spec,
                                              output_dir=Path(output_dir or spb_common.OUTPUT_DIR,
                                                              spb_runner.run_label(encoder=spec.encoder,
                                                                                   seed=spec.model.seed)),
                                              logger=PYPOMES_LOGGER)
        if row:
            reply = spb_persist.sanitize_report(row)

    # build the response
    result: Response = _build_response(errors=errors,
                                       reply=reply)
    # log the response
    logging_log_info(msg=f"Response {request.path}?{scheme}: {result}")

    return result


@app.route(rule="/compare",
           methods=["POST"])
def compare_encodings() -> Response:
    """
    Compare encoders across seeds on a common base experiment.

    The request body is the base experiment scheme (its *encoder* section is replaced per entry), plus:
        - *encoders*: list of entries *kind[:key=value;...]*, or a comma-separated string of them
        - *seeds*: list of seeds (defaults to [0])
        - *workers*: concurrent runs (defaults to the *max-workers* run parameter)
        - *output-dir*: where to write the comparison (defaults to the configured output directory)

    :return: the comparison report
    """
    # initialize the errors list
    errors: list[str] = []

    # retrieve the input parameters
    scheme: dict = http_get_parameters(request=request)
    base_scheme: dict = {key: value for key, value in scheme.items()
                         if key not in ["encoders", "seeds", "workers", "output-dir"]}

    reply: dict | None = None
    tokens: list[str] = scheme.get("encoders") or []
    if isinstance(tokens, str):
        tokens = str_as_list(tokens) or []
    encoders: list[EncoderSpec] = []
    for token in tokens:
        encoder: EncoderSpec = spb_validator.parse_encoder_token(errors=errors,
                                                                 token=str(token).strip())
        if encoder:
            encoders.append(encoder)
    seeds: list[int] = scheme.get("seeds", [0])
    if not isinstance(seeds, list) or \
       not all(isinstance(seed, int) and not isinstance(seed, bool) for seed in seeds):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, seeds, "must be a list of integers", "@seeds"))
    workers: int = validate_int(errors=errors,
                                scheme=scheme,
                                attr="workers",
                                min_val=1,
                                max_val=64)

    if not errors:
        report: dict = spb_runner.compare_encodings(errors=errors,
                                                    base_scheme=base_scheme,
                                                    encoders=encoders,
                                                    seeds=seeds,
                                                    output_dir=scheme.get("output-dir") or spb_common.OUTPUT_DIR,
                                                    max_workers=workers,
                                                    logger=PYPOMES_LOGGER)
        if report:
            reply = spb_persist.sanitize_report(report)

    # build the response
    result: Response = _build_response(errors=errors,
                                       reply=reply)
    # log the response
    logging_log_info(msg=f"Response {request.path}?{scheme}: {result}")

    return result


@app.errorhandler(code_or_exception=Exception)
def handle_exception(exc: Exception) -> Response:
    """
    Handle exceptions raised when responding to requests, but not handled.

    :return: status 500, with JSON containing the errors.
    """
    # import the needed exception
    from werkzeug.exceptions import NotFound

    # declare the return variable
    result: Response

    # is the exception an instance of werkzeug.exceptions.NotFound ?
    if isinstance(exc, NotFound):
        # yes, disregard it (with status 'No content')
        result = Response(status=204)
    else:
        # no, report the problem
        err_msg: str = exc_format(exc=exc,
                                  exc_info=sys.exc_info())
        logging_log_error(msg=f"{err_msg}")
        reply: dict = {
            "errors": [err_msg]
        }
        json_str: str = json.dumps(obj=reply,
                                   ensure_ascii=False)
        result = Response(response=json_str,
                          status=500,
                          mimetype="application/json")

    return result


def _build_response(errors: list[str],
                    reply: dict) -> Response:

    # declare the return variable
    result: Response

    if len(errors) == 0:
        # 'reply' might be None
        result = jsonify(reply)
    else:
        reply_err: dict = {"errors": validate_format_errors(errors=errors)}
        if isinstance(reply, dict):
            reply_err.update(reply)
        result = jsonify(reply_err)
        result.status_code = 400

    return result


if __name__ == "__main__":

    app.run(host="0.0.0.0",
            port=5000,
            debug=True)
