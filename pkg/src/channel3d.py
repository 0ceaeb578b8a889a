"""
3D Channel Module
-----------------
Geometric-stochastic fading channel for a mobile user on a linear path in an
urban microcell.
Includes:
1. Spatially correlated large-scale parameter (LSP) fields.
2. Per-position tap generation (power delay profile, K-factor, angles).
3. Per-tap complex response and OFDM frequency response.
4. Time traces of the UL and DL channel frequency responses.

Antennas are single-polarized and isotropic, so the antenna/coupling product
of each tap equals 1 and only the path length sets its phase.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from src.config import ScenarioConfig
from src.exceptions import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
N_LSP = 7

SeedLike = Union[int, np.random.SeedSequence]
Vector3 = Tuple[float, float, float]


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    """Fresh SeedSequence for `seed`; spawning from it leaves the caller's sequence untouched."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


# --- DOMAIN TYPES ---

@dataclass(frozen=True)
class LargeScaleParams:
    """Standard-normal LSP deviates at one position (after cross-correlation)."""

    delay_spread_x: float
    azimuth_departure_x: float
    zenith_departure_x: float
    azimuth_arrival_x: float
    zenith_arrival_x: float
    shadow_fading_x: float
    k_factor_x: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.delay_spread_x,
                self.azimuth_departure_x,
                self.zenith_departure_x,
                self.azimuth_arrival_x,
                self.zenith_arrival_x,
                self.shadow_fading_x,
                self.k_factor_x,
            ]
        )

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "LargeScaleParams":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class CorrelationConfig:
    """Decorrelation distance and 7x7 LSP cross-correlation matrix M."""

    decorrelation_distance: float = 5.0
    cross_correlation_matrix: np.ndarray = field(default_factory=lambda: np.eye(N_LSP))

    def validate(self) -> None:
        if not self.decorrelation_distance > 0:
            raise ConfigurationError(
                f"decorrelation_distance must be > 0, got {self.decorrelation_distance}"
            )

        m = np.asarray(self.cross_correlation_matrix, dtype=float)
        if m.shape != (N_LSP, N_LSP):
            raise ConfigurationError(f"cross_correlation_matrix must be 7x7, got {m.shape}")

        cov = m @ m.T
        if not np.allclose(np.diag(cov), 1.0, atol=1e-9):
            raise ConfigurationError("M.M^T must have a unit diagonal")
        if np.linalg.eigvalsh((cov + cov.T) / 2).min() < -1e-9:
            raise ConfigurationError("M.M^T is not positive semidefinite")

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "CorrelationConfig":
        matrix = scenario.cross_correlation_matrix
        return cls(
            decorrelation_distance=scenario.d_dec_m,
            cross_correlation_matrix=np.eye(N_LSP) if matrix is None else np.asarray(matrix, dtype=float),
        )


@dataclass(frozen=True)
class LspStatistics:
    """
    Maps LSP deviates to physical values: spread = 10^(mu_lg + sigma_lg * X).

    Delay spread in log10(s), angle spreads in log10(deg). Defaults follow the
    usual UMi street-canyon LoS figures around 3.5 GHz.
    """

    delay_spread: Tuple[float, float] = (-7.30, 0.38)
    azimuth_departure_spread: Tuple[float, float] = (1.18, 0.41)
    zenith_departure_spread: Tuple[float, float] = (0.80, 0.35)
    azimuth_arrival_spread: Tuple[float, float] = (1.68, 0.29)
    zenith_arrival_spread: Tuple[float, float] = (0.67, 0.32)
    delay_scaling: float = 3.0
    cluster_shadowing_db: float = 3.0


UMI_LOS_STATISTICS = LspStatistics()


@dataclass(frozen=True)
class Tap:
    power: float
    delay: float
    departure_angles: Tuple[float, float]
    arrival_angles: Tuple[float, float]
    is_los: bool = False


@dataclass(frozen=True)
class TapSet:
    """Taps sorted by delay with a normalized power delay profile."""

    taps: Tuple[Tap, ...]

    def __post_init__(self):
        if not self.taps:
            raise DomainError("A TapSet needs at least one tap")

    def __len__(self) -> int:
        return len(self.taps)

    def __iter__(self):
        return iter(self.taps)

    @property
    def powers(self) -> np.ndarray:
        return np.array([tap.power for tap in self.taps])

    @property
    def delays(self) -> np.ndarray:
        return np.array([tap.delay for tap in self.taps])

    @property
    def arrival_directions(self) -> np.ndarray:
        """Unit vectors (L, 3) pointing from the receiver along each arrival path."""
        angles = np.array([tap.arrival_angles for tap in self.taps])
        return unit_vector(angles[:, 0], angles[:, 1])

    @property
    def k_factor(self) -> float:
        powers = self.powers
        los = np.array([tap.is_los for tap in self.taps])
        nlos_power = powers[~los].sum()
        return float(powers[los].sum() / nlos_power) if nlos_power > 0 else np.inf


@dataclass(frozen=True)
class Geometry:
    tx_position: Vector3
    rx_path_start: Vector3
    rx_speed: float
    path_length: float
    carrier_frequency: float
    rx_direction: Vector3 = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if not (self.rx_speed > 0 and self.path_length > 0 and self.carrier_frequency > 0):
            raise ConfigurationError("rx_speed, path_length and carrier_frequency must be > 0")

    @property
    def unit_direction(self) -> np.ndarray:
        direction = np.asarray(self.rx_direction, dtype=float)
        return direction / np.linalg.norm(direction)

    def rx_positions(self, times: np.ndarray) -> np.ndarray:
        """Receiver positions (n, 3) at the given times along the linear path."""
        start = np.asarray(self.rx_path_start, dtype=float)
        travelled = self.rx_speed * np.asarray(times, dtype=float)
        return start + travelled[:, None] * self.unit_direction

    def frames_on_path(self, frame_interval: float) -> int:
        return int(np.floor(self.path_length / (self.rx_speed * frame_interval) + 1e-9))

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "Geometry":
        return cls(
            tx_position=scenario.tx_position,
            rx_path_start=scenario.rx_path_start,
            rx_speed=scenario.speed_mps,
            path_length=scenario.path_length_m,
            carrier_frequency=scenario.carrier_frequency_hz,
            rx_direction=scenario.rx_direction,
        )


@dataclass(frozen=True)
class ChannelTrace:
    """
    True channel of one realization.

    responses / dl_responses are (n_frames, n_subcarriers) complex grids at
    the UL and DL instants of every frame; large_scale holds the LSP deviates
    (n_frames, 7) at the UL instants.
    """

    responses: np.ndarray
    dl_responses: np.ndarray
    frame_interval: float
    realization_seed: int
    ul_offset: float = 0.0
    dl_offset: float = 0.5
    large_scale: Optional[np.ndarray] = None

    @property
    def n_frames(self) -> int:
        return self.responses.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.responses.shape[1]

    @property
    def ul_times(self) -> np.ndarray:
        return (np.arange(self.n_frames) + self.ul_offset) * self.frame_interval

    @property
    def dl_times(self) -> np.ndarray:
        return (np.arange(self.n_frames) + self.dl_offset) * self.frame_interval


# --- HELPERS ---

def unit_vector(azimuth: np.ndarray, zenith: np.ndarray) -> np.ndarray:
    """Spherical (azimuth, zenith) to Cartesian unit vectors."""
    azimuth = np.asarray(azimuth, dtype=float)
    zenith = np.asarray(zenith, dtype=float)
    return np.stack(
        [np.sin(zenith) * np.cos(azimuth), np.sin(zenith) * np.sin(azimuth), np.cos(zenith)],
        axis=-1,
    )


def bearing(origin: np.ndarray, target: np.ndarray) -> Tuple[float, float]:
    """(azimuth, zenith) of the direction origin -> target."""
    delta = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    distance = np.linalg.norm(delta)
    return float(np.arctan2(delta[1], delta[0])), float(np.arccos(delta[2] / distance))


def wrap_angle(angle: np.ndarray) -> np.ndarray:
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def _collinear_abscissa(points: np.ndarray) -> Optional[np.ndarray]:
    """Signed position along the common line, or None if points are not collinear."""
    origin = points[0]
    offsets = points - origin
    span = offsets[np.argmax(np.linalg.norm(offsets, axis=1))]
    norm = np.linalg.norm(span)
    if norm == 0:
        return np.zeros(len(points))

    direction = span / norm
    abscissa = offsets @ direction
    residual = offsets - abscissa[:, None] * direction
    if np.abs(residual).max() > 1e-9 * max(1.0, norm):
        return None
    return abscissa


def _markov_field(abscissa: np.ndarray, d_dec: float, rng: np.random.Generator) -> np.ndarray:
    """
    Exact draw of an exponentially correlated field on a line.

    The exponential kernel is Markov in 1D, so sorted points follow
    X_i = rho_i X_{i-1} + sqrt(1 - rho_i^2) Z_i with rho_i = exp(-|s_i - s_{i-1}| / d_dec).
    """
    order = np.argsort(abscissa, kind="stable")
    steps = np.diff(abscissa[order])
    innovations = rng.standard_normal((len(abscissa), N_LSP))

    rho = np.exp(-steps / d_dec)
    gain = np.sqrt(1.0 - rho**2)
    sorted_field = np.empty_like(innovations)
    sorted_field[0] = innovations[0]
    for i in range(1, len(abscissa)):
        sorted_field[i] = rho[i - 1] * sorted_field[i - 1] + gain[i - 1] * innovations[i]

    field_values = np.empty_like(sorted_field)
    field_values[order] = sorted_field
    return field_values


def _spectral_field(points: np.ndarray, d_dec: float, rng: np.random.Generator) -> np.ndarray:
    """General positions: factor C = exp(-D/d_dec) via its eigendecomposition."""
    correlation = np.exp(-cdist(points, points) / d_dec)
    eigenvalues, eigenvectors = linalg.eigh(correlation)
    factor = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    return factor @ rng.standard_normal((len(points), N_LSP))


# --- OPERATIONS ---

def draw_large_scale_field(
    positions: Sequence[Sequence[float]],
    config: CorrelationConfig,
    seed: SeedLike,
) -> List[LargeScaleParams]:
    """
    Draws the 7 LSP deviates at every position.

    Each parameter is a zero-mean, unit-variance Gaussian field with
    correlation exp(-dd / d_dec); the cross-correlation matrix M is then applied
    pointwise. Coincident positions get identical values.

    Args:
        positions: (x, y, z) coordinates in meters.
        config: Decorrelation distance and cross-correlation matrix.
        seed: RNG seed (int or SeedSequence).

    Returns:
        List[LargeScaleParams]: One entry per position, in input order.
    """
    config.validate()
    points = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise DomainError("positions must not be empty")

    rng = np.random.default_rng(seed)
    unique_points, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)

    abscissa = _collinear_abscissa(unique_points)
    if abscissa is not None:
        raw = _markov_field(abscissa, config.decorrelation_distance, rng)
    else:
        raw = _spectral_field(unique_points, config.decorrelation_distance, rng)

    correlated = raw @ np.asarray(config.cross_correlation_matrix, dtype=float).T
    return [LargeScaleParams.from_vector(correlated[i]) for i in inverse]


def generate_taps(
    lsp: LargeScaleParams,
    n_taps: int,
    k_factor_stats: Tuple[float, float] = (-3.0, 0.5),
    seed: SeedLike = 0,
    statistics: LspStatistics = UMI_LOS_STATISTICS,
    los_departure: Tuple[float, float] = (0.0, np.pi / 2),
    los_arrival: Tuple[float, float] = (np.pi, np.pi / 2),
) -> TapSet:
    """
    Generates L taps for one position.

    Tap 0 is the LoS tap at delay 0 carrying K/(K+1) of the power, with
    K[dB] = mu_KF + sigma_KF * X^KF. The NLoS taps follow an exponential power
    delay profile whose scale is the delay spread 10^(mu + sigma * X^DS);
    their angles are wrapped Gaussians around the LoS bearings.
    """
    if n_taps < 1:
        raise DomainError(f"n_taps must be >= 1, got {n_taps}")

    if n_taps == 1:
        return TapSet((Tap(1.0, 0.0, tuple(los_departure), tuple(los_arrival), is_los=True),))

    rng = np.random.default_rng(seed)
    stats = statistics
    n_nlos = n_taps - 1

    delay_spread = 10 ** (stats.delay_spread[0] + stats.delay_spread[1] * lsp.delay_spread_x)
    delays = np.sort(-stats.delay_scaling * delay_spread * np.log(rng.uniform(size=n_nlos)))

    shadowing = rng.normal(0.0, stats.cluster_shadowing_db, size=n_nlos)
    nlos_powers = np.exp(-delays * (stats.delay_scaling - 1) / (stats.delay_scaling * delay_spread))
    nlos_powers = nlos_powers * 10 ** (-shadowing / 10)
    nlos_powers = nlos_powers / nlos_powers.sum()

    k_linear = 10 ** ((k_factor_stats[0] + k_factor_stats[1] * lsp.k_factor_x) / 10)
    los_power = k_linear / (k_linear + 1)
    nlos_powers = nlos_powers / (k_linear + 1)

    spreads_deg = [
        10 ** (mu + sigma * x)
        for (mu, sigma), x in (
            (stats.azimuth_departure_spread, lsp.azimuth_departure_x),
            (stats.zenith_departure_spread, lsp.zenith_departure_x),
            (stats.azimuth_arrival_spread, lsp.azimuth_arrival_x),
            (stats.zenith_arrival_spread, lsp.zenith_arrival_x),
        )
    ]
    spreads = np.deg2rad(spreads_deg)
    centres = (los_departure[0], los_departure[1], los_arrival[0], los_arrival[1])
    angles = np.empty((4, n_nlos))
    for i, (centre, spread) in enumerate(zip(centres, spreads)):
        angles[i] = centre + spread * rng.standard_normal(n_nlos)
    angles[0] = wrap_angle(angles[0])
    angles[2] = wrap_angle(angles[2])
    angles[1] = np.clip(angles[1], 0.0, np.pi)
    angles[3] = np.clip(angles[3], 0.0, np.pi)

    taps = [Tap(float(los_power), 0.0, tuple(los_departure), tuple(los_arrival), is_los=True)]
    for l in range(n_nlos):
        taps.append(
            Tap(
                power=float(nlos_powers[l]),
                delay=float(delays[l]),
                departure_angles=(float(angles[0, l]), float(angles[1, l])),
                arrival_angles=(float(angles[2, l]), float(angles[3, l])),
            )
        )

    # Exact renormalization so the profile sums to 1 to machine precision
    total = sum(tap.power for tap in taps)
    taps = [Tap(t.power / total, t.delay, t.departure_angles, t.arrival_angles, t.is_los) for t in taps]
    return TapSet(tuple(taps))


def tap_gains(powers: np.ndarray, path_lengths: np.ndarray, carrier_frequency: float) -> np.ndarray:
    """Vectorized sqrt(P) * exp(-j 2 pi f d / c); the phase is reduced modulo one cycle."""
    cycles = np.mod(carrier_frequency * np.asarray(path_lengths, dtype=float) / SPEED_OF_LIGHT, 1.0)
    return np.sqrt(np.asarray(powers, dtype=float)) * np.exp(-2j * np.pi * cycles)


def tap_response(tap: Tap, carrier_frequency: float, distance: float) -> complex:
    """Complex gain of one tap at path length `distance` (isotropic antennas)."""
    if not distance > 0:
        raise DomainError(f"distance must be > 0, got {distance}")
    return complex(tap_gains(tap.power, distance, carrier_frequency))


def frequency_kernel(delays: np.ndarray, n_subcarriers: int, subcarrier_spacing: float) -> np.ndarray:
    """(L, K) matrix exp(-j 2 pi k df tau_l)."""
    k = np.arange(n_subcarriers)
    cycles = np.mod(np.outer(np.asarray(delays, dtype=float), k * subcarrier_spacing), 1.0)
    return np.exp(-2j * np.pi * cycles)


def frequency_response(
    taps: TapSet,
    gains: Sequence[complex],
    n_subcarriers: int,
    subcarrier_spacing: float,
) -> np.ndarray:
    """H(k) = sum_l g_l exp(-j 2 pi k df tau_l) for k = 0..n_subcarriers-1."""
    if n_subcarriers < 1:
        raise DomainError("n_subcarriers must be >= 1")
    gains = np.asarray(gains, dtype=complex)
    if gains.shape[-1] != len(taps):
        raise DomainError(f"Expected {len(taps)} tap gains, got {gains.shape[-1]}")
    return gains @ frequency_kernel(taps.delays, n_subcarriers, subcarrier_spacing)


def path_gain_db(distance: np.ndarray, reference_distance: float) -> np.ndarray:
    """UMi LoS distance slope (21 dB/decade) relative to the reference distance."""
    return -21.0 * np.log10(np.asarray(distance) / reference_distance)


def trace_channel(
    geometry: Geometry,
    config: CorrelationConfig,
    scenario: ScenarioConfig,
    seed: int,
    n_frames: Optional[int] = None,
) -> ChannelTrace:
    """
    Generates the UL and DL channel frequency responses of one realization.

    The receiver moves along the path; samples are taken at the UL and DL
    instants of every frame. Taps are redrawn whenever the receiver enters a
    new decorrelation-distance segment; within a segment each tap's phase
    follows its own path length (LoS: exact Tx-Rx distance, NLoS: projection
    of the displacement on the arrival direction), and the shadow-fading
    deviate scales all taps.
    """
    config.validate()
    dt = scenario.dt_s
    n_frames = scenario.csi_size if n_frames is None else n_frames
    if n_frames < 1:
        raise DomainError("n_frames must be >= 1")
    if n_frames > geometry.frames_on_path(dt):
        raise DomainError(
            f"Path of {geometry.path_length} m at {geometry.rx_speed} m/s lasts "
            f"{geometry.path_length / geometry.rx_speed:.4f} s, shorter than "
            f"{n_frames} frames x {dt} s"
        )

    seq = seed_sequence(seed)
    field_seq, tap_seq = seq.spawn(2)

    frames = np.arange(n_frames)
    times = np.stack([(frames + scenario.ul_offset) * dt, (frames + scenario.dl_offset) * dt], axis=1)
    positions = geometry.rx_positions(times.reshape(-1)).reshape(n_frames, 2, 3)

    lsp_field = draw_large_scale_field(positions.reshape(-1, 3), config, field_seq)
    lsp = np.array([p.as_vector() for p in lsp_field]).reshape(n_frames, 2, N_LSP)

    tx = np.asarray(geometry.tx_position, dtype=float)
    travelled = geometry.rx_speed * times[:, 0]
    segment_of_frame = np.floor(travelled / config.decorrelation_distance + 1e-9).astype(int)
    segments = np.unique(segment_of_frame)
    segment_seeds = tap_seq.spawn(len(segments))

    reference_distance = np.linalg.norm(positions[0, 0] - tx)
    gains = np.empty((n_frames, 2, scenario.n_taps), dtype=complex)
    delays = np.empty((len(segments), scenario.n_taps))
    tap_segment = np.empty(n_frames, dtype=int)

    for s_idx, (segment, s_seed) in enumerate(zip(segments, segment_seeds)):
        frame_ids = np.flatnonzero(segment_of_frame == segment)
        anchor = positions[frame_ids[0], 0]
        taps = generate_taps(
            LargeScaleParams.from_vector(lsp[frame_ids[0], 0]),
            scenario.n_taps,
            (scenario.kf_mu_db, scenario.kf_sigma_db),
            seed=s_seed,
            los_departure=bearing(tx, anchor),
            los_arrival=bearing(anchor, tx),
        )
        delays[s_idx] = taps.delays
        tap_segment[frame_ids] = s_idx

        seg_positions = positions[frame_ids].reshape(-1, 3)
        los_distance = np.linalg.norm(seg_positions - tx, axis=1)
        anchor_distance = np.linalg.norm(anchor - tx)

        # NLoS path length: anchor length + excess delay, shortened by motion towards the scatterer
        displacement = seg_positions - anchor
        path_lengths = (
            anchor_distance
            + SPEED_OF_LIGHT * taps.delays[None, :]
            - displacement @ taps.arrival_directions.T
        )
        los_mask = np.array([tap.is_los for tap in taps])
        path_lengths[:, los_mask] = los_distance[:, None]

        seg_gains = tap_gains(taps.powers[None, :], path_lengths, geometry.carrier_frequency)

        gain_db = scenario.shadow_fading_sigma_db * lsp[frame_ids, :, 5].reshape(-1)
        if scenario.include_path_loss:
            gain_db = gain_db + path_gain_db(los_distance, reference_distance)
        seg_gains = seg_gains * (10 ** (gain_db / 20))[:, None]

        gains[frame_ids] = seg_gains.reshape(len(frame_ids), 2, scenario.n_taps)

    responses = np.empty((n_frames, 2, scenario.dft_size), dtype=complex)
    for s_idx in range(len(segments)):
        frame_ids = np.flatnonzero(tap_segment == s_idx)
        kernel = frequency_kernel(delays[s_idx], scenario.dft_size, scenario.subcarrier_spacing_hz)
        responses[frame_ids] = gains[frame_ids] @ kernel

    if not np.all(np.isfinite(responses)):
        raise DomainError(f"Non-finite channel response in realization seed={seed}")

    logger.debug(
        "Traced %d frames over %d segments (seed=%d)", n_frames, len(segments), seed
    )
    return ChannelTrace(
        responses=responses[:, 0, :],
        dl_responses=responses[:, 1, :],
        frame_interval=dt,
        realization_seed=int(seed),
        ul_offset=scenario.ul_offset,
        dl_offset=scenario.dl_offset,
        large_scale=lsp[:, 0, :],
    )
