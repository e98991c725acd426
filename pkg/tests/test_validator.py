import math
import pytest

from benchmark import spb_common
from benchmark.spb_validator import (
    ExperimentSpec, apply_overrides, assert_report, build_experiment_spec, parse_encoder_token
)


def _build(scheme: dict) -> tuple[ExperimentSpec | None, list[str]]:
    errors: list[str] = []
    return build_experiment_spec(errors, scheme), errors


class TestDefaults:

    def test_positional_encoding(self):
        spec, errors = _build({"encoder": {"kind": "pe", "L": 8}})
        assert not errors
        assert spec.name == spec.encoder.label()
        assert spec.dataset.kind == "signal1d"
        assert spec.dataset.params == {"seed": 0, "n-samples": 256, "n-modes": 4, "max-frequency": 64}
        assert spec.model.hidden_widths == [256, 256, 256]
        assert (spec.model.first_activation, spec.model.init_scheme) == ("relu", "he")
        assert spec.optim.learning_rate == spb_common.TRAIN_LEARNING_RATE
        assert spec.optim.iterations == spb_common.TRAIN_ITERATIONS
        assert spec.threshold is None and spec.wdpr_levels == 3

    def test_sinusoidal_encoding_starts_with_a_sine_layer(self):
        spec, _ = _build({"encoder": {"kind": "spe", "L": 8}})
        assert (spec.model.first_activation, spec.model.init_scheme) == ("sine", "siren")
        assert spec.optim.learning_rate == spb_common.TRAIN_SINE_LEARNING_RATE

    def test_explicit_first_activation_wins(self):
        spec, _ = _build({"encoder": {"kind": "spe"}, "model": {"first-activation": "relu"}})
        assert (spec.model.first_activation, spec.model.init_scheme) == ("relu", "he")

    def test_run_params_feed_the_defaults(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setattr(spb_common, "TRAIN_ITERATIONS", 7)
        spec, _ = _build({"encoder": {"kind": "pe"}})
        assert spec.optim.iterations == 7

    def test_integers_are_accepted_as_floats(self):
        spec, errors = _build({"encoder": {"kind": "grff", "L": 8, "sigma": 4}, "optim": {"learning-rate": 1}})
        assert not errors
        assert isinstance(spec.encoder.params["sigma"], float) and spec.encoder.params["sigma"] == 4.0
        assert spec.optim.learning_rate == 1.0

    def test_image_defaults(self):
        spec, _ = _build({"dataset": {"kind": "image2d"}, "encoder": {"kind": "hash"}})
        assert spec.dataset.params == {"train-stride": 2, "seed": 0, "size": 64, "channels": 1}


class TestRejects:

    @pytest.mark.parametrize("scheme", [
        {"encoder": {"kind": "pe"}, "colour": "red"},
        {"encoder": {"kind": "pe", "octaves": 8}},
        {"encoder": {"kind": "pe", "L": "eight"}},
        {"encoder": {"kind": "pe", "L": 0}},
        {"encoder": {"kind": "pe", "L": 5000}},
        {"encoder": {"kind": "pe", "p": -0.5}},
        {"encoder": {"kind": "pe"}, "name": ".."},
        {"encoder": {"kind": "pe"}, "threshold": -1.0},
        {"encoder": {"kind": "pe"}, "optim": {"learning-rate": 0}},
        {"encoder": {"kind": "pe"}, "model": {"hidden-widths": 16}},
        {"encoder": {"kind": "pe"}, "model": {"hidden-widths": [16, "wide"]}},
        {"encoder": {"kind": "wavelet"}},
        {"encoder": {"kind": "grff", "sigma": 0.0}},
        {"dataset": {"kind": "audio"}, "encoder": {"kind": "pe"}},
        {"encoder": {"kind": "pe"}, "model": {"hidden-widths": [16, 0]}},
        {"encoder": {"kind": "pe"}, "model": {"hidden-activation": "tanh"}},
        {"encoder": {"kind": "pe"}, "optim": {"algorithm": "lbfgs"}},
        {"encoder": {"kind": "pe"}, "optim": {"eval-every": 0}},
        {"encoder": {"kind": "pe"}, "metrics": ["psnr", "lpips"]},
        {"encoder": {"kind": "pe"}, "wdpr-levels": 0},
        {"dataset": {"kind": "signal1d"}},
        [],
    ])
    def test_invalid_scheme(self, scheme: dict):
        spec, errors = _build(scheme)
        assert spec is None and errors

    def test_collects_every_section(self):
        _, errors = _build({"encoder": {"kind": "pe"},
                            "model": {"init-scheme": "xavier"},
                            "dataset": {"kind": "audio"}})
        assert len(errors) == 2


class TestRoundTrip:

    def test_scheme_rebuilds_the_same_spec(self):
        spec, _ = _build({"name": "run", "threshold": 0.01,
                          "encoder": {"kind": "spe", "L": 6, "p": 0.5},
                          "model": {"hidden-widths": [32, 32]},
                          "optim": {"iterations": 10}})
        assert build_experiment_spec([], spec.to_scheme()) == spec

    def test_with_seed(self):
        spec, _ = _build({"encoder": {"kind": "grff", "L": 8, "sigma": 4.0}})
        seeded = spec.with_seed(3)
        assert seeded.dataset.params["seed"] == seeded.encoder.params["seed"] == 3
        assert seeded.model.seed == seeded.optim.seed == 3
        assert "seed" not in spec.encoder.params
        assert seeded.encoder.label() == spec.encoder.label()

    def test_file_datasets_keep_no_seed(self):
        spec, _ = _build({"dataset": {"kind": "image2d", "path": "img.pgm"}, "encoder": {"kind": "pe"}})
        assert "seed" not in spec.with_seed(5).dataset.params


class TestEncoderToken:

    def test_parameters(self):
        encoder = parse_encoder_token([], "spe:L=12;p=0.5")
        assert encoder.kind == "spe" and encoder.params == {"L": 12, "p": 0.5}

    def test_bare_kind(self):
        assert parse_encoder_token([], " hash ").params == {}

    @pytest.mark.parametrize("token", ["spe:L", "spe:=3", "nerf", "pe:L=x"])
    def test_rejects(self, token: str):
        errors: list[str] = []
        assert parse_encoder_token(errors, token) is None
        assert errors


class TestOverrides:

    def test_values_are_typed(self):
        scheme = {"encoder": {"kind": "pe"}}
        result = apply_overrides([], scheme, ["optim.iterations=0", "encoder.kind=spe",
                                              "threshold=0.5", "model.hidden-widths=[8, 8]"])
        assert result == {"encoder": {"kind": "spe"}, "optim": {"iterations": 0},
                          "threshold": 0.5, "model": {"hidden-widths": [8, 8]}}
        assert scheme == {"encoder": {"kind": "pe"}}

    @pytest.mark.parametrize("override", [
        "optim.iterations",
        "optim.momentum=0.9",
        "optim=3",
        "optim.iterations=ten",
        "a.b.c=1",
    ])
    def test_rejects(self, override: str):
        errors: list[str] = []
        assert apply_overrides(errors, {}, [override]) is None
        assert errors


class TestReport:

    def test_sentinels_and_nulls(self):
        errors: list[str] = []
        assert_report(errors, {"psnr": "inf", "rwde": "perfect", "iterations-to-threshold": None,
                               "wdpr": {"1": "failed", "2": 0.5}, "rows": [{"ssim": 0.9}]})
        assert errors == []

    @pytest.mark.parametrize("report", [
        {"psnr": "infinite"},
        {"wdpr": {"1": math.nan}},
        {"rows": [{"ssim": math.inf}]},
    ])
    def test_rejects(self, report: dict):
        errors: list[str] = []
        assert_report(errors, report)
        assert len(errors) == 1
