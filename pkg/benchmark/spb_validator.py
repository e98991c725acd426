import copy
import json
import math
from dataclasses import dataclass, field
from pypomes_core import validate_float, validate_format_error, validate_int, validate_str
from typing import Any, Final

from benchmark import spb_common
from benchmark.spb_encoders import ENCODER_KINDS, EncoderSpec, encoder_output_dim
from benchmark.spb_network import ACTIVATION_KINDS, INIT_SCHEMES, MlpConfig
from benchmark.spb_training import OPTIMIZERS, OptimConfig
from benchmark.steps.spb_dataset import DATASET_KINDS

METRIC_KINDS: Final[tuple[str, ...]] = ("psnr", "ssim", "wdpr", "rwde", "spectrum")

# report values that stand in for numbers
REPORT_SENTINELS: Final[tuple[str, ...]] = ("inf", "failed", "perfect")

# report fields holding numbers (or sentinels, or null when not applicable)
REPORT_NUMERIC_KEYS: Final[tuple[str, ...]] = (
    "final-train-loss", "final-test-loss", "psnr", "ssim", "rwde",
    "iterations-to-threshold", "threshold", "spectrum-energy-fraction"
)

SEED_MAX: Final[int] = 2 ** 32 - 1

# accepted keys per ExperimentSpec section, as (type, min, max)
SCHEMA: Final[dict[str, Any]] = {
    "name": (str, None, None),
    "threshold": (float, 0.0, 1e300),
    "metrics": (list, None, None),
    "wdpr-levels": (int, 1, 16),
    "dataset": {
        "kind": (str, None, None),
        "seed": (int, 0, SEED_MAX),
        "n-samples": (int, 1, 10000000),
        "n-modes": (int, 1, 100000),
        "max-frequency": (int, 1, 10000000),
        "path": (str, None, None),
        "size": (int, 1, 8192),
        "channels": (int, 1, 3),
        "train-stride": (int, 1, 8192)
    },
    "encoder": {
        "kind": (str, None, None),
        "L": (int, 1, 4096),
        "p": (float, 0.0, 64.0),
        "sigma": (float, 1e-12, 1e12),
        "seed": (int, 0, SEED_MAX),
        "K": (int, 1, 4096),
        "levels": (int, 1, 64),
        "table-size": (int, 2, 2 ** 30),
        "features": (int, 1, 1024),
        "base-resolution": (int, 1, 2 ** 20),
        "growth-factor": (float, 1e-12, 1e6)
    },
    "model": {
        "hidden-widths": (list, None, None),
        "hidden-activation": (str, None, None),
        "first-activation": (str, None, None),
        "init-scheme": (str, None, None),
        "seed": (int, 0, SEED_MAX)
    },
    "optim": {
        "algorithm": (str, None, None),
        "learning-rate": (float, 1e-12, 1e3),
        "beta1": (float, 0.0, 1.0),
        "beta2": (float, 0.0, 1.0),
        "eps": (float, 1e-300, 1.0),
        "iterations": (int, 0, 100000000),
        "eval-every": (int, 1, 100000000),
        "seed": (int, 0, SEED_MAX),
        "batch-size": (int, 0, 1000000000)
    }
}


@dataclass
class DatasetSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class ModelSpec:
    hidden_widths: list[int] = field(default_factory=lambda: [256, 256, 256])
    hidden_activation: str = "relu"
    first_activation: str = "relu"
    init_scheme: str = "he"
    seed: int = 0

    def mlp_config(self,
                   encoder: EncoderSpec,
                   input_dim: int,
                   output_dim: int) -> MlpConfig:
        return MlpConfig(layer_widths=[encoder_output_dim(spec=encoder,
                                                          input_dim=input_dim),
                                       *self.hidden_widths, output_dim],
                         hidden_activation=self.hidden_activation,
                         first_activation=self.first_activation,
                         init_scheme=self.init_scheme,
                         seed=self.seed)


@dataclass
class ExperimentSpec:
    name: str
    dataset: DatasetSpec
    encoder: EncoderSpec
    model: ModelSpec
    optim: OptimConfig
    metrics: list[str] = field(default_factory=lambda: list(METRIC_KINDS))
    threshold: float | None = None
    wdpr_levels: int = 3

    def to_scheme(self) -> dict:
        """
        The hyphenated-key scheme this spec was built from, with every default made explicit.
        """
        result: dict = {
            "name": self.name,
            "metrics": list(self.metrics),
            "wdpr-levels": self.wdpr_levels,
            "dataset": {"kind": self.dataset.kind, **self.dataset.params},
            "encoder": {"kind": self.encoder.kind, **self.encoder.params},
            "model": {
                "hidden-widths": list(self.model.hidden_widths),
                "hidden-activation": self.model.hidden_activation,
                "first-activation": self.model.first_activation,
                "init-scheme": self.model.init_scheme,
                "seed": self.model.seed
            },
            "optim": {
                "algorithm": self.optim.algorithm,
                "learning-rate": self.optim.learning_rate,
                "beta1": self.optim.adam_beta1,
                "beta2": self.optim.adam_beta2,
                "eps": self.optim.adam_eps,
                "iterations": self.optim.iterations,
                "eval-every": self.optim.eval_every,
                "seed": self.optim.seed,
                "batch-size": self.optim.batch_size
            }
        }
        if self.threshold is not None:
            result["threshold"] = self.threshold
        return result

    def with_seed(self,
                  seed: int) -> "ExperimentSpec":
        # one seed drives the synthetic data, the encoder, the weights and the batches
        result: ExperimentSpec = copy.deepcopy(self)
        if "path" not in result.dataset.params:
            result.dataset.params["seed"] = seed
        result.encoder.params["seed"] = seed
        result.model.seed = seed
        result.optim.seed = seed
        return result




def _validate_attr(errors: list[str],
                   scheme: dict,
                   attr: str,
                   rule: tuple) -> Any:

    # initialize the return variable
    result: Any = None

    kind, min_val, max_val = rule
    if kind is int:
        result = validate_int(errors=errors,
                              scheme=scheme,
                              attr=attr,
                              min_val=min_val,
                              max_val=max_val)
    elif kind is float:
        # JSON integers are accepted where floats are expected
        value: Any = scheme.get(attr)
        if isinstance(value, int) and not isinstance(value, bool):
            scheme = {attr: float(value)}
        result = validate_float(errors=errors,
                                scheme=scheme,
                                attr=attr,
                                min_val=min_val,
                                max_val=max_val)
        if result is not None and not math.isfinite(result):
            # 142: Invalid value {}: {}
            errors.append(validate_format_error(142, result, "must be finite", f"@{attr}"))
            result = None
    elif kind is str:
        result = validate_str(errors=errors,
                              scheme=scheme,
                              attr=attr)
    else:
        result = scheme.get(attr)
        if not isinstance(result, list):
            # 142: Invalid value {}: {}
            errors.append(validate_format_error(142, result, "must be a list", f"@{attr}"))
            result = None

    return result


def assert_section(errors: list[str],
                   scheme: Any,
                   section: str = None) -> dict | None:
    """
    Validate one ExperimentSpec section, or the top level when *section* is omitted.

    Unknown keys are rejected; known values go through the typed validators with their bounds.
    Nested sections are passed through unchecked, for their own builders to validate.

    :param errors: incidental errors
    :param scheme: the section
    :param section: the section name
    :return: the validated values, or *None* on error
    """
    if not isinstance(scheme, dict):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, scheme, "must be an object", f"@{section or 'experiment'}"))
        return None

    rules: dict = SCHEMA[section] if section else SCHEMA
    op_errors: list[str] = []
    result: dict = {}
    for key, value in scheme.items():
        rule: Any = rules.get(key)
        if rule is None:
            # 142: Invalid value {}: {}
            op_errors.append(validate_format_error(142, key, "unknown key",
                                                   f"@{section}.{key}" if section else f"@{key}"))
        elif isinstance(rule, dict):
            result[key] = value
        else:
            valid: Any = _validate_attr(errors=op_errors,
                                        scheme=scheme,
                                        attr=key,
                                        rule=rule)
            if valid is not None:
                result[key] = valid

    if op_errors:
        errors.extend(op_errors)
        return None
    return result


def _assert_choice(errors: list[str],
                   value: str,
                   choices: tuple[str, ...],
                   attr: str) -> None:

    if value not in choices:
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, value,
                                            f"must be one of {','.join(choices)}", f"@{attr}"))


def build_dataset_spec(errors: list[str],
                       scheme: dict) -> DatasetSpec | None:

    params: dict = assert_section(errors=errors,
                                  scheme=scheme,
                                  section="dataset")
    if params is None:
        return None
    kind: str = params.pop("kind", "signal1d")
    op_errors: list[str] = []
    _assert_choice(errors=op_errors,
                   value=kind,
                   choices=DATASET_KINDS,
                   attr="dataset.kind")
    if op_errors:
        errors.extend(op_errors)
        return None

    if kind == "signal1d":
        params.setdefault("seed", 0)
        params.setdefault("n-samples", 256)
        params.setdefault("n-modes", 4)
        params.setdefault("max-frequency", 64)
    else:
        params.setdefault("train-stride", 2)
        if "path" not in params:
            params.setdefault("seed", 0)
            params.setdefault("size", 64)
            params.setdefault("channels", 1)
    return DatasetSpec(kind=kind,
                       params=params)


def build_encoder_spec(errors: list[str],
                       scheme: dict) -> EncoderSpec | None:

    params: dict = assert_section(errors=errors,
                                  scheme=scheme,
                                  section="encoder")
    if params is None:
        return None
    kind: str = params.pop("kind", None)
    op_errors: list[str] = []
    _assert_choice(errors=op_errors,
                   value=kind,
                   choices=ENCODER_KINDS,
                   attr="encoder.kind")
    if op_errors:
        errors.extend(op_errors)
        return None

    return EncoderSpec(kind=kind,
                       params=params)


def _parse_scalar(text: str) -> Any:
    # JSON literal when possible, bare string otherwise
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_encoder_token(errors: list[str],
                        token: str) -> EncoderSpec | None:
    """
    Parse *kind[:key=value[;key=value...]]*, e.g. *spe:L=12;p=0.5*.
    """
    kind, _, rest = token.strip().partition(":")
    scheme: dict = {"kind": kind}
    for item in filter(None, rest.split(";")):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            # 142: Invalid value {}: {}
            errors.append(validate_format_error(142, item, "expected key=value", "@encoder"))
            return None
        scheme[key.strip()] = _parse_scalar(value.strip())
    return build_encoder_spec(errors=errors,
                              scheme=scheme)


def build_model_spec(errors: list[str],
                     scheme: dict,
                     encoder: EncoderSpec) -> ModelSpec | None:
    """
    Model section; the first activation defaults to *sine* for dense SPE, and the
    initialization to *siren* for sine-first networks.
    """
    values: dict = assert_section(errors=errors,
                                  scheme=scheme,
                                  section="model")
    if values is None:
        return None

    op_errors: list[str] = []
    hidden_widths: list[int] = []
    for width in values.get("hidden-widths", [256, 256, 256]):
        hidden_width: int = validate_int(errors=op_errors,
                                         scheme={"hidden-widths": width},
                                         attr="hidden-widths",
                                         min_val=1,
                                         max_val=65536,
                                         required=True)
        hidden_widths.append(hidden_width)

    first: str = values.get("first-activation", "sine" if encoder.kind == "spe" else "relu")
    result: ModelSpec = ModelSpec(hidden_widths=hidden_widths,
                                  hidden_activation=values.get("hidden-activation", "relu"),
                                  first_activation=first,
                                  init_scheme=values.get("init-scheme", "siren" if first == "sine" else "he"),
                                  seed=values.get("seed", 0))
    _assert_choice(errors=op_errors,
                   value=result.hidden_activation,
                   choices=ACTIVATION_KINDS,
                   attr="model.hidden-activation")
    _assert_choice(errors=op_errors,
                   value=result.first_activation,
                   choices=ACTIVATION_KINDS,
                   attr="model.first-activation")
    _assert_choice(errors=op_errors,
                   value=result.init_scheme,
                   choices=INIT_SCHEMES,
                   attr="model.init-scheme")
    if op_errors:
        errors.extend(op_errors)
        return None
    return result


def build_optim_config(errors: list[str],
                       scheme: dict,
                       model: ModelSpec) -> OptimConfig | None:

    values: dict = assert_section(errors=errors,
                                  scheme=scheme,
                                  section="optim")
    if values is None:
        return None

    default_rate: float = (spb_common.TRAIN_SINE_LEARNING_RATE
                           if model.first_activation == "sine" else spb_common.TRAIN_LEARNING_RATE)
    result: OptimConfig = OptimConfig(algorithm=values.get("algorithm", "adam"),
                                      learning_rate=values.get("learning-rate", default_rate),
                                      adam_beta1=values.get("beta1", 0.9),
                                      adam_beta2=values.get("beta2", 0.999),
                                      adam_eps=values.get("eps", 1e-8),
                                      iterations=values.get("iterations", spb_common.TRAIN_ITERATIONS),
                                      eval_every=values.get("eval-every", spb_common.TRAIN_EVAL_EVERY),
                                      seed=values.get("seed", 0),
                                      batch_size=values.get("batch-size", 0))
    op_errors: list[str] = []
    _assert_choice(errors=op_errors,
                   value=result.algorithm,
                   choices=OPTIMIZERS,
                   attr="optim.algorithm")
    if op_errors:
        errors.extend(op_errors)
        return None
    return result


def build_experiment_spec(errors: list[str],
                          scheme: dict) -> ExperimentSpec | None:
    """
    Validate a JSON experiment scheme and build its typed specification.

    Unknown keys at any level are rejected. Omitted values take their defaults, among them the
    run parameters in *spb_common*.

    :param errors: incidental errors
    :param scheme: the experiment scheme, with sections *dataset*, *encoder*, *model* and *optim*
    :return: the specification, or *None* on error
    """
    # initialize the return variable
    result: ExperimentSpec | None = None

    op_errors: list[str] = []
    values: dict = assert_section(errors=op_errors,
                                  scheme=scheme)
    if values is not None and "encoder" not in values:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, None, "section is required", "@encoder"))
    if values is not None and "name" in values and not values["name"].strip("."):
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, values["name"], "must not be empty or dots only", "@name"))
    if op_errors:
        errors.extend(op_errors)
        return result

    metrics: list[str] = values.get("metrics", list(METRIC_KINDS))
    unknown: list[str] = [metric for metric in metrics if metric not in METRIC_KINDS]
    if unknown:
        # 142: Invalid value {}: {}
        op_errors.append(validate_format_error(142, unknown,
                                               f"must be among {','.join(METRIC_KINDS)}", "@metrics"))
    dataset: DatasetSpec = build_dataset_spec(errors=op_errors,
                                              scheme=values.get("dataset", {}))
    encoder: EncoderSpec = build_encoder_spec(errors=op_errors,
                                              scheme=values.get("encoder"))
    model: ModelSpec | None = None
    if encoder:
        model = build_model_spec(errors=op_errors,
                                 scheme=values.get("model", {}),
                                 encoder=encoder)
    optim: OptimConfig | None = None
    if model:
        optim = build_optim_config(errors=op_errors,
                                   scheme=values.get("optim", {}),
                                   model=model)
    if op_errors:
        errors.extend(op_errors)
        return result

    result = ExperimentSpec(name=values.get("name", encoder.label()),
                            dataset=dataset,
                            encoder=encoder,
                            model=model,
                            optim=optim,
                            metrics=list(metrics),
                            threshold=values.get("threshold"),
                            wdpr_levels=values.get("wdpr-levels", 3))
    return result


def apply_overrides(errors: list[str],
                    scheme: dict,
                    overrides: list[str]) -> dict | None:
    """
    Apply dotted-key overrides (*optim.iterations=0*) to a copy of *scheme*.

    Keys must exist in the schema and values must pass its validators.
    """
    result: dict = copy.deepcopy(scheme)
    for override in overrides:
        path, sep, text = override.partition("=")
        keys: list[str] = path.strip().split(".")
        if not sep or not 1 <= len(keys) <= 2:
            # 142: Invalid value {}: {}
            errors.append(validate_format_error(142, override, "expected key.subkey=value", "@override"))
            return None

        rule: Any = SCHEMA
        for key in keys:
            rule = rule.get(key) if isinstance(rule, dict) else None
        if rule is None or isinstance(rule, dict):
            # 142: Invalid value {}: {}
            errors.append(validate_format_error(142, path, "unknown key", "@override"))
            return None

        value: Any = text.strip() if rule[0] is str else _parse_scalar(text.strip())
        value = _validate_attr(errors=errors,
                               scheme={path: value},
                               attr=path,
                               rule=rule)
        if value is None:
            return None

        target: dict = result
        for key in keys[:-1]:
            target = target.setdefault(key, {})
        target[keys[-1]] = value
    return result


def assert_report(errors: list[str],
                  report: Any,
                  path: str = "report") -> None:
    """
    Every number in *report* must be finite; numeric fields may instead carry a sentinel or null.
    """
    if isinstance(report, dict):
        for key, value in report.items():
            if key in REPORT_NUMERIC_KEYS and isinstance(value, str) and value not in REPORT_SENTINELS:
                # 142: Invalid value {}: {}
                errors.append(validate_format_error(142, value,
                                                    f"must be a number or one of {','.join(REPORT_SENTINELS)}",
                                                    f"@{path}.{key}"))
            else:
                assert_report(errors=errors,
                              report=value,
                              path=f"{path}.{key}")
    elif isinstance(report, list):
        for index, value in enumerate(report):
            assert_report(errors=errors,
                          report=value,
                          path=f"{path}[{index}]")
    elif isinstance(report, float) and not math.isfinite(report):
        # 142: Invalid value {}: {}
        errors.append(validate_format_error(142, report, "non-finite number", f"@{path}"))
