"""
Metrics Module
--------------
NMSE between predicted and true DL responses, and SSNR/SNR bookkeeping.
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable

import numpy as np

from src.exceptions import DegenerateNormalizerError, DomainError

NORMALIZER_FLOOR = 1e-12


@dataclass(frozen=True)
class NmseReport:
    nmse_real: float
    nmse_imag: float
    nmse_avg: float
    n_predictions: int
    n_subcarriers: int
    method: str = ""
    mode: str = ""
    ssnr_db: float = float("nan")

    @property
    def nmse_avg_db(self) -> float:
        return linear_to_db(self.nmse_avg)

    def to_dict(self) -> Dict[str, Any]:
        row = asdict(self)
        row["nmse_avg_db"] = self.nmse_avg_db
        return row


def nmse(
    predicted: np.ndarray,
    truth: np.ndarray,
    method: str = "",
    mode: str = "",
    ssnr_db: float = float("nan"),
) -> NmseReport:
    """
    Per-component NMSE: mean over (t, k) of (component(H_pred - H) / |H|)^2,
    for the real and the imaginary parts, plus their average.
    """
    predicted = np.atleast_2d(np.asarray(predicted, dtype=complex))
    truth = np.atleast_2d(np.asarray(truth, dtype=complex))
    if predicted.shape != truth.shape:
        raise DomainError(f"Shape mismatch: predicted {predicted.shape} vs truth {truth.shape}")

    magnitude = np.abs(truth)
    degenerate = magnitude < NORMALIZER_FLOOR
    if np.any(degenerate):
        t, k = np.argwhere(degenerate)[0]
        raise DegenerateNormalizerError((int(t), int(k)), float(magnitude[t, k]))

    error = (predicted - truth) / magnitude
    nmse_real = float(np.mean(error.real**2))
    nmse_imag = float(np.mean(error.imag**2))
    return NmseReport(
        nmse_real=nmse_real,
        nmse_imag=nmse_imag,
        nmse_avg=(nmse_real + nmse_imag) / 2,
        n_predictions=truth.shape[0],
        n_subcarriers=truth.shape[1],
        method=method,
        mode=mode,
        ssnr_db=ssnr_db,
    )


def average_reports(reports: Iterable[NmseReport]) -> NmseReport:
    """Arithmetic mean across realizations; tags are taken from the first report."""
    reports = list(reports)
    if not reports:
        raise DomainError("Cannot average an empty list of reports")

    nmse_real = float(np.mean([r.nmse_real for r in reports]))
    nmse_imag = float(np.mean([r.nmse_imag for r in reports]))
    first = reports[0]
    return NmseReport(
        nmse_real=nmse_real,
        nmse_imag=nmse_imag,
        nmse_avg=(nmse_real + nmse_imag) / 2,
        n_predictions=sum(r.n_predictions for r in reports),
        n_subcarriers=first.n_subcarriers,
        method=first.method,
        mode=first.mode,
        ssnr_db=first.ssnr_db,
    )


def snr(ssnr: float, h: complex) -> float:
    """SNR = SSNR |h|^2."""
    if not ssnr > 0:
        raise DomainError(f"ssnr must be > 0, got {ssnr}")
    return float(ssnr * abs(h) ** 2)


def db_to_linear(value_db: float) -> float:
    return 10 ** (value_db / 10)


def linear_to_db(value: float) -> float:
    if value <= 0:
        return -math.inf if value == 0 else math.nan
    return 10 * math.log10(value)
