"""Tests for NMSE and SNR helpers."""

import math

import numpy as np
import pytest

from src.exceptions import DegenerateNormalizerError, DomainError
from src.metrics import NmseReport, average_reports, db_to_linear, linear_to_db, nmse, snr


def _loop_oracle(predicted, truth):
    acc_re = acc_im = 0.0
    rows, cols = truth.shape
    for t in range(rows):
        for k in range(cols):
            magnitude = abs(truth[t, k])
            diff = predicted[t, k] - truth[t, k]
            acc_re += (diff.real / magnitude) ** 2
            acc_im += (diff.imag / magnitude) ** 2
    return acc_re / (rows * cols), acc_im / (rows * cols)


class TestNmse:

    def test_perfect_prediction(self, rng):
        h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        report = nmse(h, h)
        assert report.nmse_avg == 0.0
        assert report.nmse_avg_db == -math.inf

    def test_single_element(self):
        report = nmse(np.array([[1.1 + 0j]]), np.array([[1.0 + 0j]]))
        assert report.nmse_real == pytest.approx(0.01, abs=1e-15)
        assert report.nmse_imag == 0.0
        assert report.nmse_avg == pytest.approx(0.005, abs=1e-15)

    def test_matches_loop_oracle(self, rng):
        for _ in range(100):
            rows, cols = rng.integers(1, 51), rng.integers(1, 129)
            truth = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
            predicted = truth + 0.3 * (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)))
            expected_re, expected_im = _loop_oracle(predicted, truth)
            report = nmse(predicted, truth)
            assert report.nmse_real == pytest.approx(expected_re, rel=1e-12)
            assert report.nmse_imag == pytest.approx(expected_im, rel=1e-12)

    def test_degenerate_normalizer(self):
        truth = np.ones((2, 3), dtype=complex)
        truth[1, 2] = 0.0
        with pytest.raises(DegenerateNormalizerError) as info:
            nmse(np.ones((2, 3)), truth)
        assert info.value.index == (1, 2)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError, match="Shape mismatch"):
            nmse(np.ones((2, 3)), np.ones((3, 2)))

    def test_tags_and_counts(self):
        report = nmse(np.ones((5, 4)), np.ones((5, 4)), "LS", "open_loop", 10.0)
        assert (report.method, report.mode, report.ssnr_db) == ("LS", "open_loop", 10.0)
        assert (report.n_predictions, report.n_subcarriers) == (5, 4)
        assert report.to_dict()["nmse_avg_db"] == -math.inf


class TestAverageReports:

    def test_arithmetic_mean(self):
        a = NmseReport(0.1, 0.3, 0.2, 10, 8, "LS", "interpolation", 0.0)
        b = NmseReport(0.3, 0.5, 0.4, 10, 8, "LS", "interpolation", 0.0)
        averaged = average_reports([a, b])
        assert averaged.nmse_real == pytest.approx(0.2)
        assert averaged.nmse_avg == pytest.approx(0.3)
        assert averaged.n_predictions == 20

    def test_empty(self):
        with pytest.raises(DomainError):
            average_reports([])


class TestSnr:

    def test_scaling(self):
        assert snr(10.0, np.sqrt(0.5)) == pytest.approx(5.0)

    def test_zero_channel(self):
        assert snr(10.0, 0j) == 0.0

    def test_db_round_trip(self):
        assert db_to_linear(20.0) == pytest.approx(100.0)
        assert linear_to_db(db_to_linear(20.0)) == pytest.approx(20.0, abs=1e-12)

    def test_rejects_non_positive_ssnr(self):
        with pytest.raises(DomainError):
            snr(0.0, 1.0)
