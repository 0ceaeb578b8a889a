"""
Link Simulation Module
----------------------
Framed TDD exchange between the mobile user and the transmitter.
Includes:
1. QAM pilot frames occupying every subcarrier of the UL slot.
2. Pilot transmission through the true channel with complex AWGN.
3. UL/DL slot scheduling.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.channel3d import ChannelTrace, SeedLike, seed_sequence
from src.config import QAM_ORDERS
from src.exceptions import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

SUPPORTED_QAM_ORDERS = QAM_ORDERS


@dataclass(frozen=True)
class PilotFrame:
    symbols: np.ndarray
    frame_index: int = 0
    slot_time: float = 0.0

    @property
    def energy(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))


@dataclass(frozen=True)
class ReceivedPilot:
    symbols: np.ndarray
    noise_variance: float
    frame_index: int = 0


@dataclass(frozen=True)
class TddSchedule:
    frame_interval: float = 0.005
    ul_offset: float = 0.0
    dl_offset: float = 0.5

    def __post_init__(self):
        if not self.frame_interval > 0:
            raise ConfigurationError("frame_interval must be > 0")
        if not 0.0 <= self.ul_offset < self.dl_offset <= 1.0:
            raise ConfigurationError(
                f"Offsets must satisfy 0 <= ul_offset < dl_offset <= 1, "
                f"got ul={self.ul_offset}, dl={self.dl_offset}"
            )

    @property
    def dl_fraction(self) -> float:
        """DL instant measured in frames after the UL instant of the same frame."""
        return self.dl_offset - self.ul_offset


def qam_constellation(order: int) -> np.ndarray:
    """Square M-QAM points with unit average energy."""
    if order not in SUPPORTED_QAM_ORDERS:
        raise ConfigurationError(
            f"Unsupported constellation {order}-QAM; expected one of {SUPPORTED_QAM_ORDERS}"
        )
    side = int(math.isqrt(order))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    points = (levels[:, None] + 1j * levels[None, :]).reshape(-1)
    return points / np.sqrt(2 * (order - 1) / 3)


def constellation_beta(order: int) -> float:
    """beta = E{|P|^2} E{1/|P|^2}: 1 for 4QAM, 17/9 for 16QAM."""
    energies = np.abs(qam_constellation(order)) ** 2
    return float(np.mean(energies) * np.mean(1.0 / energies))


def make_pilot_frame(
    n_subcarriers: int,
    constellation: int = 16,
    seed: SeedLike = 0,
    frame_index: int = 0,
    slot_time: float = 0.0,
) -> PilotFrame:
    """
    Draws one pilot symbol per subcarrier.

    Symbols are a seeded permutation of the constellation tiled over the
    subcarriers (any remainder is drawn uniformly), so each point is equally
    likely and a frame whose length is a multiple of the order has exactly
    unit average energy.
    """
    points = qam_constellation(constellation)
    rng = np.random.default_rng(seed)

    n_full, remainder = divmod(n_subcarriers, constellation)
    indices = np.concatenate(
        [np.tile(np.arange(constellation), n_full), rng.integers(0, constellation, remainder)]
    )
    symbols = points[rng.permutation(indices)]
    return PilotFrame(symbols=symbols, frame_index=frame_index, slot_time=slot_time)


def transmit_pilot(
    frame: PilotFrame,
    h: np.ndarray,
    ssnr: float,
    seed: SeedLike = 0,
) -> ReceivedPilot:
    """
    P_r(k) = P(k) H(k) + n(k), n ~ CN(0, 1/ssnr).

    ssnr = inf disables the noise.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape != frame.symbols.shape:
        raise DomainError(
            f"Channel length {h.shape} does not match pilot length {frame.symbols.shape}"
        )
    if not ssnr > 0:
        raise DomainError(f"ssnr must be > 0, got {ssnr}")

    noise_variance = 0.0 if math.isinf(ssnr) else 1.0 / ssnr
    received = frame.symbols * h
    if noise_variance > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((2,) + h.shape)
        received = received + np.sqrt(noise_variance / 2) * (noise[0] + 1j * noise[1])

    return ReceivedPilot(symbols=received, noise_variance=noise_variance, frame_index=frame.frame_index)


def schedule_slots(schedule: TddSchedule, n_frames: int) -> List[Tuple[float, float]]:
    """(ul_time, dl_time) for frames 0..n_frames-1."""
    if n_frames < 1:
        raise DomainError("n_frames must be >= 1")
    base = np.arange(n_frames) * schedule.frame_interval
    ul = base + schedule.ul_offset * schedule.frame_interval
    dl = base + schedule.dl_offset * schedule.frame_interval
    return list(zip(ul.tolist(), dl.tolist()))


def run_uplink(
    trace: ChannelTrace,
    ssnr: float,
    constellation: int = 16,
    seed: SeedLike = 0,
) -> Tuple[List[PilotFrame], List[ReceivedPilot]]:
    """Sends one pilot frame per UL slot of the trace."""
    pilot_seeds = seed_sequence(seed).spawn(2 * trace.n_frames)
    ul_times = trace.ul_times

    frames: List[PilotFrame] = []
    received: List[ReceivedPilot] = []
    for t in range(trace.n_frames):
        frame = make_pilot_frame(
            trace.n_subcarriers, constellation, pilot_seeds[2 * t], frame_index=t, slot_time=ul_times[t]
        )
        frames.append(frame)
        received.append(transmit_pilot(frame, trace.responses[t], ssnr, pilot_seeds[2 * t + 1]))

    logger.debug("Uplink: %d pilot frames at ssnr=%.3g", trace.n_frames, ssnr)
    return frames, received
