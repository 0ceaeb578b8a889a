"""
Estimation Module
-----------------
Uplink channel frequency-response estimation from received pilots.
Includes:
1. LS estimation (per-subcarrier division).
2. LS-MMSE filtering with the channel autocorrelation R_hh.
3. Whole-trace estimate series.
"""

import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import linalg

from src.exceptions import DomainError, NumericalError
from src.linksim import PilotFrame, ReceivedPilot

logger = logging.getLogger(__name__)


class EstimationMethod(str, Enum):
    LS = "LS"
    LSMMSE = "LSMMSE"


@dataclass(frozen=True)
class EstimateSeries:
    """Estimated UL responses (n_frames, n_subcarriers) of one trace."""

    estimates: np.ndarray
    method: EstimationMethod
    ssnr: float

    @property
    def n_frames(self) -> int:
        return self.estimates.shape[0]


@dataclass(frozen=True)
class MmseContext:
    """
    Filter state for LS-MMSE.

    noise_scale is W = beta * sigma_n^2 / E{|P|^2}. With per_subcarrier set,
    only the diagonal of R_hh is used (scalar shrinkage per subcarrier).
    """

    autocorrelation: np.ndarray
    noise_scale: float
    beta: float
    per_subcarrier: bool = False

    def __post_init__(self):
        r = self.autocorrelation
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise DomainError(f"R_hh must be square, got {r.shape}")
        if not np.allclose(r, r.conj().T, atol=1e-10):
            raise DomainError("R_hh is not Hermitian")
        if self.noise_scale < 0:
            raise DomainError("noise_scale must be >= 0")

    @property
    def n_subcarriers(self) -> int:
        return self.autocorrelation.shape[0]


def ls_estimate(received: ReceivedPilot, frame: PilotFrame) -> np.ndarray:
    """H_LS(k) = P_r(k) / P(k)."""
    pilots = np.asarray(frame.symbols)
    if received.symbols.shape != pilots.shape:
        raise DomainError("Received and transmitted pilot lengths differ")
    if np.any(pilots == 0):
        raise DomainError(f"Zero pilot symbol at subcarrier {int(np.flatnonzero(pilots == 0)[0])}")
    return received.symbols / pilots


def sample_autocorrelation(channel_samples: Iterable[np.ndarray]) -> np.ndarray:
    """Sample average of H H^H, symmetrized to be exactly Hermitian."""
    samples = np.atleast_2d(np.asarray(list(channel_samples), dtype=complex))
    if samples.size == 0:
        raise DomainError("At least one channel sample is required for R_hh")
    r = samples.T @ samples.conj() / samples.shape[0]
    return (r + r.conj().T) / 2


def build_mmse_context(
    channel_samples: Iterable[np.ndarray],
    ssnr: float,
    beta: float,
    pilot_energy: float = 1.0,
    per_subcarrier: bool = False,
) -> MmseContext:
    """R_hh from the samples; W = beta * (1/ssnr) / pilot_energy."""
    samples = list(channel_samples)
    if not samples:
        raise DomainError("At least one channel sample is required for R_hh")
    noise_variance = 0.0 if np.isinf(ssnr) else 1.0 / ssnr
    return MmseContext(
        autocorrelation=sample_autocorrelation(samples),
        noise_scale=beta * noise_variance / pilot_energy,
        beta=beta,
        per_subcarrier=per_subcarrier,
    )


def debiased_ls_autocorrelation(ls_samples: np.ndarray, noise_variance: float, inverse_pilot_energy: float) -> np.ndarray:
    """
    R_hh estimated from noisy LS samples.

    Removes the noise floor sigma^2 E{1/|P|^2} from the diagonal and clips
    negative eigenvalues so the result stays positive semidefinite.
    """
    r = sample_autocorrelation(ls_samples)
    r = r - noise_variance * inverse_pilot_energy * np.eye(r.shape[0])
    eigenvalues, eigenvectors = linalg.eigh(r)
    r = (eigenvectors * np.clip(eigenvalues, 0.0, None)) @ eigenvectors.conj().T
    return (r + r.conj().T) / 2


def mmse_estimate(h_ls: np.ndarray, ctx: MmseContext) -> np.ndarray:
    """
    R_hh (R_hh + W I)^{-1} H_LS.

    Accepts one vector (K,) or a stack of vectors (n, K). The Hermitian system
    is solved directly; a singular system is raised as NumericalError.
    """
    h_ls = np.asarray(h_ls, dtype=complex)
    if h_ls.shape[-1] != ctx.n_subcarriers:
        raise DomainError(
            f"Estimate length {h_ls.shape[-1]} does not match R_hh size {ctx.n_subcarriers}"
        )

    r = ctx.autocorrelation
    if ctx.per_subcarrier:
        diag = np.real(np.diag(r))
        denom = diag + ctx.noise_scale
        if np.any(denom == 0):
            raise NumericalError("Zero-power subcarrier with W = 0: scalar MMSE undefined")
        return h_ls * (diag / denom)

    system = r + ctx.noise_scale * np.eye(ctx.n_subcarriers)
    rhs = h_ls.T if h_ls.ndim == 2 else h_ls
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            solution = linalg.solve(system, rhs, assume_a="her")
    except (linalg.LinAlgError, linalg.LinAlgWarning) as exc:
        raise NumericalError(f"LS-MMSE system (R_hh + W I) is singular: {exc}") from exc

    filtered = r @ solution
    return filtered.T if h_ls.ndim == 2 else filtered


def estimate_series(
    frames: Sequence[PilotFrame],
    received: Sequence[ReceivedPilot],
    method: EstimationMethod,
    ssnr: float,
    ctx: Optional[MmseContext] = None,
) -> EstimateSeries:
    """Estimates every UL frame of a trace with LS or LS-MMSE."""
    method = EstimationMethod(method)
    h_ls = np.stack([ls_estimate(rx, frame) for rx, frame in zip(received, frames)])

    if method is EstimationMethod.LSMMSE:
        if ctx is None:
            raise DomainError("LS-MMSE estimation requires an MmseContext")
        estimates = mmse_estimate(h_ls, ctx)
    else:
        estimates = h_ls

    if not np.all(np.isfinite(estimates)):
        raise NumericalError(f"Non-finite {method.value} estimates at ssnr={ssnr:g}")
    return EstimateSeries(estimates=estimates, method=method, ssnr=ssnr)
