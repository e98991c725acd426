import numpy as np
import pytest

from benchmark.spb_encoders import (
    HASH_PRIMES, ApeParams, EncoderSpec, GrffConfig, PeConfig, SpeLayerParams,
    ape_backward, ape_encode, build_encoder, build_grff, build_hash_grid, encode, encoder_output_dim,
    grff_encode, hash_backward, hash_encode, hash_index, pe_encode, spe_apply, spe_apply_backward, to_signed, to_unit
)
from conftest import central_difference


class TestPositionalEncoding:

    def test_feature_layout(self):
        """Per octave ascending, a (sin, cos) pair at 2^l*pi*x."""
        errors: list[str] = []
        features = pe_encode(errors, [[0.5]], PeConfig(L=3))
        assert not errors
        np.testing.assert_allclose(features.values, [[1.0, 0.0, 0.0, -1.0, 0.0, 1.0]], atol=1e-12)

    def test_single_vector_input(self):
        features = pe_encode([], [0.25, -0.5], PeConfig(L=2, input_dim=2))
        assert features.values.shape == (8,)

    def test_amplitude_falloff(self):
        cfg = PeConfig(L=3, p=1.0)
        np.testing.assert_allclose(cfg.amplitudes(), [1.0, 0.5, 1.0 / 3.0])
        features = pe_encode([], [[0.5]], cfg)
        np.testing.assert_allclose(features.values[0, 0], 1.0)
        np.testing.assert_allclose(np.abs(features.values[0, 3]), 0.5, atol=1e-12)

    def test_falloff_values(self):
        features = pe_encode([], [0.5], PeConfig(L=2, p=1.0))
        np.testing.assert_allclose(features.values, [1.0, 0.0, 0.0, -0.5], atol=1e-12)

    def test_bounded(self):
        rng = np.random.default_rng(7)
        features = pe_encode([], rng.uniform(-1.0, 1.0, size=(500, 3)), PeConfig(L=10, input_dim=3))
        assert features.values.shape == (500, 60)
        assert np.all(np.abs(features.values) <= 1.0)

    def test_rejects_dimension_mismatch(self):
        errors: list[str] = []
        assert pe_encode(errors, [[0.1, 0.2]], PeConfig(L=4)) is None
        assert len(errors) == 1

    def test_rejects_non_finite(self):
        errors: list[str] = []
        assert pe_encode(errors, [[np.nan]], PeConfig(L=4)) is None
        assert errors

    def test_coordinate_mapping(self):
        coords = np.array([0.0, 0.25, 1.0])
        np.testing.assert_allclose(to_signed(coords), [-1.0, -0.5, 1.0])
        np.testing.assert_allclose(to_unit(to_signed(coords)), coords)


class TestRandomFourierFeatures:

    def test_seeded(self):
        a = build_grff(L=16, sigma=10.0, seed=3, input_dim=2)
        b = build_grff(L=16, sigma=10.0, seed=3, input_dim=2)
        np.testing.assert_array_equal(a.B, b.B)
        assert a.B.shape == (16, 2)

    def test_single_frequency(self):
        cfg = GrffConfig(L=1, sigma=1.0, seed=0, B=np.array([[np.pi]]))
        np.testing.assert_allclose(grff_encode([], [0.5], cfg).values, [1.0, 0.0], atol=1e-12)

    def test_seeded_reference(self):
        # B holds the first L normal draws of the seeded generator, scaled by sigma
        B = np.random.default_rng(0).normal(loc=0.0, scale=10.0, size=(4, 1))
        features = grff_encode([], [0.3], build_grff(L=4, sigma=10.0, seed=0, input_dim=1))
        np.testing.assert_array_equal(features.values, np.concatenate([np.sin(0.3 * B[:, 0]), np.cos(0.3 * B[:, 0])]))
        assert features.values.shape == (8,)

    def test_sin_then_cos_blocks(self):
        cfg = build_grff(L=4, sigma=2.0, seed=0, input_dim=1)
        x = np.array([[0.3], [-0.7]])
        features = grff_encode([], x, cfg)
        proj = x @ cfg.B.T
        np.testing.assert_allclose(features.values[:, :4], np.sin(proj))
        np.testing.assert_allclose(features.values[:, 4:], np.cos(proj))

    def test_rejects_dimension_mismatch(self):
        errors: list[str] = []
        assert grff_encode(errors, [[0.1, 0.2]], build_grff(L=4, sigma=1.0, seed=0, input_dim=1)) is None
        assert errors


class TestAdaptiveEncoding:

    def test_matches_pe_on_the_octave_ladder(self):
        params = ApeParams(omegas=np.pi * 2.0 ** np.arange(5))
        x = np.linspace(-1.0, 1.0, 11)[:, None]
        np.testing.assert_allclose(ape_encode([], x, params).values,
                                   pe_encode([], x, PeConfig(L=5)).values, atol=1e-12)

    def test_rejects_empty_frequencies(self):
        errors: list[str] = []
        assert ape_encode(errors, [[0.1]], ApeParams(omegas=np.array([]))) is None
        assert errors

    def test_frequency_gradient(self):
        rng = np.random.default_rng(11)
        params = ApeParams(omegas=rng.uniform(1.0, 20.0, size=4), input_dim=2)
        x = rng.uniform(-1.0, 1.0, size=(9, 2))
        upstream = rng.normal(size=(9, 16))

        def objective() -> float:
            return float(np.sum(upstream * ape_encode([], x, params).values))

        analytic = ape_backward(params, x, upstream)
        numeric = [central_difference(params.omegas, (k,), objective) for k in range(4)]
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


class TestSinusoidalLayer:

    def test_diagonal_starts_as_sine_of_pe(self):
        encoder = build_encoder([], EncoderSpec(kind="spe-diagonal", params={"L": 4}), input_dim=1)
        coords = np.linspace(0.0, 1.0, 7)[:, None]
        values, _ = encode(encoder, coords)
        np.testing.assert_allclose(values, np.sin(pe_encode([], to_signed(coords), encoder.pe).values))

    def test_output_bounded_for_large_weights(self):
        cfg = PeConfig(L=4)
        rng = np.random.default_rng(5)
        params = SpeLayerParams(mode="dense",
                                W=rng.normal(0.0, 1e4, size=(12, 8)),
                                phase=rng.normal(0.0, 1e4, size=12),
                                inner_pe=cfg)
        out = spe_apply([], pe_encode([], rng.uniform(-1, 1, size=(50, 1)), cfg), params)
        assert np.all(np.abs(out) <= 1.0)

    def test_rejects_width_mismatch(self):
        errors: list[str] = []
        params = SpeLayerParams(mode="diagonal", W=np.ones(6), phase=np.zeros(6), inner_pe=PeConfig(L=3))
        assert spe_apply(errors, np.ones((2, 8)), params) is None
        assert errors

    @pytest.mark.parametrize("mode", ["diagonal", "dense"])
    def test_gradients(self, mode: str):
        rng = np.random.default_rng(2)
        cfg = PeConfig(L=3)
        W = rng.normal(size=6) if mode == "diagonal" else rng.normal(size=(5, 6))
        params = SpeLayerParams(mode=mode, W=W, phase=rng.normal(size=W.shape[0]), inner_pe=cfg)
        features = pe_encode([], rng.uniform(-1, 1, size=(7, 1)), cfg).values
        upstream = rng.normal(size=(7, W.shape[0]))

        def objective() -> float:
            return float(np.sum(upstream * spe_apply([], features, params)))

        grad_w, grad_phase, grad_in = spe_apply_backward(params, features, upstream)
        for index in np.ndindex(W.shape):
            assert grad_w[index] == pytest.approx(central_difference(params.W, index, objective), rel=1e-5, abs=1e-8)
        for index in np.ndindex(params.phase.shape):
            assert grad_phase[index] == pytest.approx(central_difference(params.phase, index, objective),
                                                      rel=1e-5, abs=1e-8)
        for index in [(0, 0), (3, 2), (6, 5)]:
            assert grad_in[index] == pytest.approx(central_difference(features, index, objective),
                                                   rel=1e-5, abs=1e-8)


class TestHashGrid:

    def test_hash_of_origin(self):
        assert hash_index([[0, 0]], HASH_PRIMES[:2], 4096)[0] == 0

    def test_hash_wraps_at_the_table_size(self):
        assert hash_index([[5]], (1,), 4).tolist() == [1]

    def test_hash_is_xor_of_prime_products(self):
        index = hash_index([[3, 1], [7, 5]], HASH_PRIMES[:2], 4096)
        assert index.tolist() == [(3 ^ 2654435761) % 4096, (7 ^ 5 * 2654435761) % 4096]

    def test_vertex_reads_the_table_entry(self):
        cfg = build_hash_grid(input_dim=2, levels=3, table_size=64, features_per_entry=2, seed=1)
        features = hash_encode([], [[0.0, 0.0]], cfg)
        np.testing.assert_allclose(features.values[0], cfg.tables[:, 0, :].ravel())

    def test_continuous(self):
        cfg = build_hash_grid(input_dim=2, levels=4, table_size=256, seed=0)
        a = hash_encode([], [[0.3, 0.6]], cfg).values
        b = hash_encode([], [[0.3 + 1e-9, 0.6]], cfg).values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_resolution_schedule(self):
        cfg = build_hash_grid(input_dim=1, levels=3, base_resolution=4, growth_factor=1.5)
        assert [cfg.resolution(level) for level in range(3)] == [4, 6, 9]

    def test_clamps_outside_the_unit_cube(self):
        cfg = build_hash_grid(input_dim=1, levels=2, table_size=32)
        features = hash_encode([], [[1.5]], cfg)
        assert features.clamped
        np.testing.assert_allclose(features.values, hash_encode([], [[1.0]], cfg).values)

    def test_rejects_four_dimensions(self):
        errors: list[str] = []
        assert build_encoder(errors, EncoderSpec(kind="hash"), input_dim=4) is None
        assert errors

    def test_table_gradient(self):
        """Features are linear in the tables, so <grad, tables> equals <upstream, features>."""
        rng = np.random.default_rng(4)
        encoder = build_encoder([], EncoderSpec(kind="hash", params={"levels": 3, "table-size": 16}),
                                input_dim=2)
        coords = rng.uniform(0.0, 1.0, size=(40, 2))
        values, cache = encode(encoder, coords)
        upstream = rng.normal(size=values.shape)
        grad = hash_backward(encoder.hash_grid, cache, upstream)
        assert float(np.sum(grad * encoder.hash_grid.tables)) == pytest.approx(float(np.sum(upstream * values)),
                                                                              rel=1e-10)


class TestBuildEncoder:

    @pytest.mark.parametrize(("kind", "params", "input_dim", "expected"), [
        ("identity", {}, 2, 2),
        ("pe", {"L": 6}, 2, 24),
        ("spe", {"L": 5}, 1, 10),
        ("spe-diagonal", {"L": 5}, 2, 20),
        ("grff", {"L": 32}, 2, 64),
        ("ape", {"K": 4}, 1, 8),
        ("hash", {"levels": 4, "features": 2}, 2, 8),
    ])
    def test_output_dim(self, kind: str, params: dict, input_dim: int, expected: int):
        spec = EncoderSpec(kind=kind, params=params)
        encoder = build_encoder([], spec, input_dim=input_dim)
        assert encoder.output_dim == expected == encoder_output_dim(spec, input_dim)
        values, _ = encode(encoder, np.full((3, input_dim), 0.4))
        assert values.shape == (3, expected)

    def test_rejects_unknown_kind(self):
        errors: list[str] = []
        assert build_encoder(errors, EncoderSpec(kind="wavelet"), input_dim=1) is None
        assert errors

    def test_label_excludes_the_seed(self):
        assert EncoderSpec(kind="spe", params={"seed": 4, "L": 12, "p": 0.5}).label() == "spe:L=12;p=0.5"
        assert EncoderSpec(kind="pe", params={"seed": 1}).label() == "pe"
