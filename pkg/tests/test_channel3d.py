"""Tests for the geometric-stochastic channel model."""

import numpy as np
import pytest

from src.channel3d import (
    SPEED_OF_LIGHT,
    CorrelationConfig,
    Geometry,
    LargeScaleParams,
    Tap,
    TapSet,
    draw_large_scale_field,
    frequency_response,
    generate_taps,
    tap_response,
    trace_channel,
)
from src.config import ScenarioConfig
from src.exceptions import ConfigurationError, DomainError


def _shadow_fading_pairs(distance: float, n_draws: int) -> np.ndarray:
    config = CorrelationConfig(decorrelation_distance=5.0)
    positions = [(0.0, 0.0, 1.5), (distance, 0.0, 1.5)]
    values = np.empty((n_draws, 2))
    for seed in range(n_draws):
        field = draw_large_scale_field(positions, config, seed)
        values[seed] = [field[0].shadow_fading_x, field[1].shadow_fading_x]
    return values


# ============================================================================
# LARGE-SCALE PARAMETER FIELD
# ============================================================================


class TestLargeScaleField:

    def test_identical_positions_get_identical_parameters(self):
        field = draw_large_scale_field([(1.0, 2.0, 1.5), (1.0, 2.0, 1.5)], CorrelationConfig(), seed=5)
        np.testing.assert_array_equal(field[0].as_vector(), field[1].as_vector())

    def test_correlation_at_decorrelation_distance(self):
        values = _shadow_fading_pairs(5.0, 10_000)
        rho = np.corrcoef(values[:, 0], values[:, 1])[0, 1]
        assert rho == pytest.approx(np.exp(-1), abs=0.05)

    def test_far_positions_are_uncorrelated(self):
        values = _shadow_fading_pairs(500.0, 10_000)
        assert abs(np.corrcoef(values[:, 0], values[:, 1])[0, 1]) < 0.05

    def test_adjacent_frame_correlation(self):
        # 10 m/s x 5 ms = 5 cm between frames
        values = _shadow_fading_pairs(0.05, 2_000)
        rho = np.corrcoef(values[:, 0], values[:, 1])[0, 1]
        assert rho == pytest.approx(np.exp(-0.05 / 5.0), abs=0.005)

    def test_non_collinear_positions(self):
        positions = [(0, 0, 0), (5, 0, 0), (0, 5, 0), (3, 3, 1)]
        field = draw_large_scale_field(positions, CorrelationConfig(), seed=1)
        assert len(field) == 4
        assert all(np.all(np.isfinite(p.as_vector())) for p in field)

    def test_seed_determinism(self):
        positions = [(0, 0, 0), (1, 0, 0)]
        a = draw_large_scale_field(positions, CorrelationConfig(), seed=9)
        b = draw_large_scale_field(positions, CorrelationConfig(), seed=9)
        assert a == b

    def test_rejects_non_positive_decorrelation_distance(self):
        with pytest.raises(ConfigurationError, match="decorrelation_distance"):
            draw_large_scale_field([(0, 0, 0)], CorrelationConfig(decorrelation_distance=0.0), seed=0)

    def test_rejects_non_unit_diagonal(self):
        config = CorrelationConfig(cross_correlation_matrix=2 * np.eye(7))
        with pytest.raises(ConfigurationError, match="unit diagonal"):
            config.validate()

    def test_cross_correlation_is_applied(self):
        m = np.eye(7)
        # Shadow fading fully driven by the delay-spread deviate
        m[5] = 0.0
        m[5, 0] = 1.0
        field = draw_large_scale_field([(0, 0, 0)], CorrelationConfig(cross_correlation_matrix=m), seed=2)
        assert field[0].shadow_fading_x == field[0].delay_spread_x

    def test_marginals_are_standard_normal(self):
        field = _independent_draws(CorrelationConfig(), 20_000, seed=3)
        np.testing.assert_allclose(field.mean(axis=0), 0.0, atol=0.05)
        np.testing.assert_allclose(field.var(axis=0), 1.0, atol=0.05)

    def test_covariance_follows_cross_correlation_matrix(self):
        target = np.eye(7)
        for i, j, rho in [(0, 1, 0.5), (0, 5, -0.4), (5, 6, 0.5), (3, 4, 0.3)]:
            target[i, j] = target[j, i] = rho
        m = np.linalg.cholesky(target)
        field = _independent_draws(CorrelationConfig(cross_correlation_matrix=m), 20_000, seed=4)
        np.testing.assert_allclose(np.cov(field, rowvar=False), m @ m.T, atol=0.05)


def _independent_draws(config: CorrelationConfig, n_draws: int, seed: int) -> np.ndarray:
    # 1 km spacing = 200 decorrelation distances
    positions = [(1000.0 * i, 0.0, 1.5) for i in range(n_draws)]
    return np.array([p.as_vector() for p in draw_large_scale_field(positions, config, seed)])


# ============================================================================
# TAPS
# ============================================================================


class TestGenerateTaps:

    def test_single_tap(self):
        taps = generate_taps(LargeScaleParams.from_vector(np.zeros(7)), 1)
        assert len(taps) == 1
        assert taps.powers[0] == 1.0
        assert taps.delays[0] == 0.0

    def test_powers_sum_to_one(self, rng):
        for seed in range(200):
            lsp = LargeScaleParams.from_vector(rng.standard_normal(7))
            taps = generate_taps(lsp, 5, seed=seed)
            assert abs(taps.powers.sum() - 1.0) < 1e-12

    def test_los_tap_first_with_zero_delay(self):
        taps = generate_taps(LargeScaleParams.from_vector(np.zeros(7)), 5, seed=0)
        assert taps.taps[0].is_los
        assert taps.delays[0] == 0.0
        assert np.all(np.diff(taps.delays) >= 0)

    def test_k_factor_ensemble_mean(self, rng):
        k_db = np.empty(10_000)
        for seed in range(len(k_db)):
            lsp = LargeScaleParams.from_vector(rng.standard_normal(7))
            k_db[seed] = 10 * np.log10(generate_taps(lsp, 5, (-3.0, 0.5), seed=seed).k_factor)
        assert k_db.mean() == pytest.approx(-3.0, abs=0.15)

    def test_rejects_zero_taps(self):
        with pytest.raises(DomainError, match="n_taps"):
            generate_taps(LargeScaleParams.from_vector(np.zeros(7)), 0)


# ============================================================================
# RESPONSES
# ============================================================================


class TestTapResponse:

    def test_magnitude_is_sqrt_power(self):
        tap = Tap(0.25, 0.0, (0.3, 1.0), (2.0, 1.2))
        assert abs(tap_response(tap, 3.5e9, 37.2)) == pytest.approx(0.5, abs=1e-15)

    def test_integer_cycles_give_unit_gain(self):
        tap = Tap(1.0, 0.0, (0.0, 0.0), (0.0, 0.0))
        assert tap_response(tap, SPEED_OF_LIGHT, 3.0) == 1 + 0j

    def test_zero_power(self):
        assert tap_response(Tap(0.0, 0.0, (0, 0), (0, 0)), 3.5e9, 10.0) == 0

    def test_rejects_non_positive_distance(self):
        with pytest.raises(DomainError):
            tap_response(Tap(1.0, 0.0, (0, 0), (0, 0)), 3.5e9, 0.0)


class TestFrequencyResponse:

    def test_zero_delay_is_flat(self):
        taps = TapSet((Tap(1.0, 0.0, (0, 0), (0, 0), is_los=True),))
        h = frequency_response(taps, [0.3 - 0.4j], 128, 30e3)
        np.testing.assert_array_equal(h, np.full(128, 0.3 - 0.4j))

    def test_two_taps_match_term_by_term_sum(self):
        spacing = 30e3
        delays = (0.0, 1.0 / (128 * spacing))
        gains = [0.8, 0.6j]
        taps = TapSet(tuple(Tap(abs(g) ** 2, d, (0, 0), (0, 0)) for g, d in zip(gains, delays)))

        expected = np.zeros(128, dtype=complex)
        for k in range(128):
            for g, d in zip(gains, delays):
                expected[k] += g * np.exp(-2j * np.pi * k * spacing * d)

        np.testing.assert_allclose(frequency_response(taps, gains, 128, spacing), expected, atol=1e-12)

    def test_rejects_gain_count_mismatch(self):
        taps = TapSet((Tap(1.0, 0.0, (0, 0), (0, 0)),))
        with pytest.raises(DomainError, match="tap gains"):
            frequency_response(taps, [1.0, 2.0], 8, 30e3)


# ============================================================================
# TRACES
# ============================================================================


def _small_scenario(**overrides) -> ScenarioConfig:
    values = {"csi_size": 40, "dft_size": 16, "dataset_size": None}
    values.update(overrides)
    return ScenarioConfig(**values)


class TestTraceChannel:

    def test_frames_per_realization(self):
        geometry = Geometry.from_scenario(ScenarioConfig())
        assert geometry.frames_on_path(0.005) == 2000

    def test_shapes_and_times(self):
        scenario = _small_scenario()
        trace = trace_channel(Geometry.from_scenario(scenario), CorrelationConfig(), scenario, seed=3)
        assert trace.responses.shape == (40, 16)
        assert trace.dl_responses.shape == (40, 16)
        np.testing.assert_allclose(trace.dl_times - trace.ul_times, 0.0025)
        assert trace.large_scale.shape == (40, 7)

    def test_same_seed_is_bit_identical(self):
        scenario = _small_scenario()
        geometry = Geometry.from_scenario(scenario)
        a = trace_channel(geometry, CorrelationConfig(), scenario, seed=11)
        b = trace_channel(geometry, CorrelationConfig(), scenario, seed=11)
        np.testing.assert_array_equal(a.responses, b.responses)
        np.testing.assert_array_equal(a.dl_responses, b.dl_responses)

    def test_different_seeds_differ(self):
        scenario = _small_scenario()
        geometry = Geometry.from_scenario(scenario)
        a = trace_channel(geometry, CorrelationConfig(), scenario, seed=1)
        b = trace_channel(geometry, CorrelationConfig(), scenario, seed=2)
        assert not np.allclose(a.responses, b.responses)

    def test_taps_redrawn_across_segments(self):
        # 200 frames x 5 cm = 10 m, i.e. two decorrelation segments
        scenario = _small_scenario(csi_size=200, dft_size=8)
        trace = trace_channel(Geometry.from_scenario(scenario), CorrelationConfig(), scenario, seed=4)
        assert np.all(np.isfinite(trace.responses))
        assert trace.n_frames == 200

    def test_path_too_short(self):
        scenario = _small_scenario(path_length_m=0.1)
        with pytest.raises(DomainError, match="shorter than"):
            trace_channel(Geometry.from_scenario(scenario), CorrelationConfig(), scenario, seed=0)

    def test_path_loss_reduces_power_away_from_start(self):
        scenario = _small_scenario(
            include_path_loss=True,
            shadow_fading_sigma_db=0.0,
            rx_path_start=(0.0, 5.0, 1.5),
            csi_size=1000,
            dft_size=4,
        )
        trace = trace_channel(Geometry.from_scenario(scenario), CorrelationConfig(), scenario, seed=0)
        start = np.mean(np.abs(trace.responses[:50]) ** 2)
        end = np.mean(np.abs(trace.responses[-50:]) ** 2)
        assert end < start
