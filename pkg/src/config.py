"""
Configuration Module
--------------------
Typed experiment configuration validated with pydantic.
Includes:
1. Scenario parameters (simulation setup table + radio defaults).
2. Predictor training hyperparameters.
3. Sweep definition (SSNR grid, estimators, predictor modes).
4. YAML loading, CLI/env overrides and the config fingerprint.
"""

import hashlib
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_SSNR_SWEEP_DB: List[float] = [float(v) for v in range(0, 45, 5)]
QAM_ORDERS = (4, 16, 64)


class EstimatorChoice(str, Enum):
    LS = "LS"
    LSMMSE = "LSMMSE"
    BOTH = "both"

    def methods(self) -> List[str]:
        if self is EstimatorChoice.BOTH:
            return ["LS", "LSMMSE"]
        return [self.value]


class PredictorMode(str, Enum):
    INTERPOLATION = "interpolation"
    OPEN_LOOP = "open_loop"
    CLOSED_LOOP = "closed_loop"
    ADAPTIVE = "adaptive"


class RhhSource(str, Enum):
    """Where the LS-MMSE autocorrelation matrix comes from."""

    TRAINING_TRUTH = "training_truth"
    TRAINING_LS = "training_ls"
    ORACLE = "oracle"


class TargetSource(str, Enum):
    """Training labels: the true next UL channel or the next UL estimate."""

    TRUTH = "truth"
    ESTIMATE = "estimate"


class ScenarioConfig(BaseModel):
    """Urban microcell scenario with a single transmitter and a mobile receiver."""

    model_config = ConfigDict(extra="forbid")

    dft_size: int = Field(128, gt=0)
    n_taps: int = Field(5, gt=0)
    path_length_m: float = Field(100.0, gt=0)
    speed_mps: float = Field(10.0, gt=0)
    dt_s: float = Field(0.005, gt=0)
    d_dec_m: float = Field(5.0, gt=0)
    kf_mu_db: float = -3.0
    kf_sigma_db: float = Field(0.5, ge=0)
    csi_size: int = Field(2000, gt=0)
    dataset_size: Optional[int] = Field(20000, gt=0)
    modulation: int = 16
    # None: derived from the constellation (17/9 for 16QAM)
    beta: Optional[float] = Field(None, gt=0)
    hidden_neurons: int = Field(200, gt=0)

    # Radio parameters left open by the setup table
    carrier_frequency_hz: float = Field(3.5e9, gt=0)
    subcarrier_spacing_hz: float = Field(30e3, gt=0)
    ul_offset: float = Field(0.0, ge=0)
    dl_offset: float = Field(0.5, le=1)
    tx_position: Tuple[float, float, float] = (0.0, 0.0, 10.0)
    rx_path_start: Tuple[float, float, float] = (20.0, -50.0, 1.5)
    rx_direction: Tuple[float, float, float] = (0.0, 1.0, 0.0)
    shadow_fading_sigma_db: float = Field(4.0, ge=0)
    include_path_loss: bool = False
    cross_correlation_matrix: Optional[List[List[float]]] = None

    @field_validator("modulation")
    @classmethod
    def _square_qam(cls, value: int) -> int:
        if value not in QAM_ORDERS:
            raise ValueError(f"modulation must be a square QAM order in {QAM_ORDERS}, got {value}")
        return value

    @model_validator(mode="after")
    def _check_offsets(self) -> "ScenarioConfig":
        if not 0.0 <= self.ul_offset < self.dl_offset <= 1.0:
            raise ValueError("TDD offsets must satisfy 0 <= ul_offset < dl_offset <= 1")
        if np.linalg.norm(self.rx_direction) == 0:
            raise ValueError("rx_direction must be a non-zero vector")
        return self


class TrainingConfig(BaseModel):
    """Adam + truncated BPTT settings for the LSTM predictor."""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(125, gt=0)
    batch_size: int = Field(128, gt=0)
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    bptt_window: int = Field(50, ge=2)
    shared_weights: bool = True
    closed_loop_horizon: int = Field(10, ge=1)
    warmup_frames: int = Field(50, ge=1)
    target_source: TargetSource = TargetSource.TRUTH


class ExperimentConfig(BaseModel):
    """Full sweep definition. Immutable once validated."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    ssnr_sweep_db: List[float] = Field(default_factory=lambda: list(DEFAULT_SSNR_SWEEP_DB))
    n_realizations: int = Field(10, gt=0)
    train_fraction: float = Field(0.8, gt=0, lt=1)
    seed: int = Field(0, ge=0)
    estimator: EstimatorChoice = EstimatorChoice.BOTH
    predictor_modes: List[PredictorMode] = Field(
        default_factory=lambda: [
            PredictorMode.INTERPOLATION,
            PredictorMode.OPEN_LOOP,
            PredictorMode.CLOSED_LOOP,
        ]
    )
    output_dir: Path = Path("data/runs/default")
    rhh_source: RhhSource = RhhSource.TRAINING_TRUTH
    mmse_per_subcarrier: bool = False
    load_only: bool = False
    n_jobs: int = 1

    @field_validator("ssnr_sweep_db")
    @classmethod
    def _non_empty_sweep(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("ssnr_sweep_db must not be empty")
        return sorted(set(float(v) for v in value))

    @field_validator("predictor_modes")
    @classmethod
    def _non_empty_modes(cls, value: List[PredictorMode]) -> List[PredictorMode]:
        if not value:
            raise ValueError("predictor_modes must not be empty")
        # Deduplicate, keep declaration order of the enum
        return [mode for mode in PredictorMode if mode in value]

    @property
    def estimator_methods(self) -> List[str]:
        return self.estimator.methods()

    def needs_training(self) -> bool:
        return any(mode is not PredictorMode.INTERPOLATION for mode in self.predictor_modes)

    def check_dataset_size(self) -> None:
        """csi_size x realizations must match dataset_size when the latter is set."""
        expected = self.scenario.dataset_size
        actual = self.scenario.csi_size * self.n_realizations
        if expected is not None and expected != actual:
            raise ConfigurationError(
                f"dataset_size={expected} does not match csi_size x n_realizations "
                f"= {self.scenario.csi_size} x {self.n_realizations} = {actual}"
            )


def build_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validates a plain mapping, converting pydantic errors to ConfigurationError."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc


def reference_profile(**overrides: Any) -> ExperimentConfig:
    """Full-scale setup: 10 realizations x 2000 frames, N = 200."""
    return build_config(overrides)


def quick_profile(**overrides: Any) -> ExperimentConfig:
    """CI-scale setup for fast acceptance runs."""
    data: Dict[str, Any] = {
        "scenario": {"csi_size": 400, "dataset_size": None, "hidden_neurons": 32},
        "training": {"epochs": 20},
        "n_realizations": 2,
    }
    return build_config(_deep_merge(data, overrides))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Loads a YAML key-value config file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found at {path}.")

    with path.open("r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {path} must contain a mapping at top level.")

    quick = bool(data.pop("quick", False))
    logger.info("Loaded config from %s (quick=%s)", path, quick)
    return quick_profile(**data) if quick else reference_profile(**data)


def apply_overrides(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
    modes: Optional[Sequence[str]] = None,
    estimator: Optional[str] = None,
    ssnr_db: Optional[Sequence[float]] = None,
) -> ExperimentConfig:
    """Returns a new config with CLI/env overrides applied (None = keep)."""
    data = config.model_dump(mode="json")
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    if modes is not None:
        data["predictor_modes"] = list(modes)
    if estimator is not None:
        data["estimator"] = estimator
    if ssnr_db is not None:
        data["ssnr_sweep_db"] = list(ssnr_db)
    return build_config(data)


def config_fingerprint(config: ExperimentConfig) -> str:
    """sha256 over the canonical JSON form (run-location and scheduling fields excluded)."""
    payload = config.model_dump(mode="json", exclude={"output_dir", "load_only", "n_jobs"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _deep_merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
