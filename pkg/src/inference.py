"""
Inference Module
----------------
Serves a trained LSTM channel predictor.
Includes:
1. Checkpoint persistence (joblib, bit-exact round trip).
2. Model loading for the sweep and the API.
3. Open-loop / closed-loop forecasts on raw complex estimates.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import joblib
import numpy as np

from src.exceptions import CheckpointNotFoundError, DomainError
from src.predictor import (
    PARAMETER_ORDER,
    LstmModel,
    PredictionMode,
    predict_closed_loop,
    predict_open_loop,
    read_downlink,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
DEFAULT_CHECKPOINT = Path("data/models/lstm_predictor.joblib")


def save_checkpoint(model: LstmModel, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Writes weights, normalization statistics and metadata to one joblib file."""
    if not model.fitted:
        raise DomainError("Refusing to checkpoint an untrained model")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "hidden_size": model.hidden_size,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "normalization": {"mean": model.norm_mean.copy(), "scale": model.norm_scale.copy()},
        "parameter_order": list(PARAMETER_ORDER),
        "parameters": {name: value.copy() for name, value in model.parameters().items()},
        "metadata": dict(metadata or {}),
    }
    joblib.dump(payload, path)
    logger.info("Checkpoint saved to %s", path)
    return path


def load_checkpoint(path: Union[str, Path]) -> LstmModel:
    """Restores an LstmModel saved by save_checkpoint."""
    path = Path(path)
    if not path.exists():
        raise CheckpointNotFoundError(f"Checkpoint not found at {path}")

    payload = joblib.load(path)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DomainError(f"Unsupported checkpoint format {version!r} in {path}")
    if list(payload["parameter_order"]) != list(PARAMETER_ORDER):
        raise DomainError(f"Checkpoint {path} has an unexpected parameter layout")

    model = LstmModel(
        **{name: np.asarray(payload["parameters"][name]) for name in PARAMETER_ORDER},
        norm_mean=np.asarray(payload["normalization"]["mean"]),
        norm_scale=np.asarray(payload["normalization"]["scale"]),
        fitted=True,
    )
    if model.hidden_size != payload["hidden_size"]:
        raise DomainError(f"Checkpoint {path} declares N={payload['hidden_size']}, weights have N={model.hidden_size}")
    logger.debug("Loaded checkpoint %s (N=%d)", path, model.hidden_size)
    return model


class ChannelPredictor:
    """Checkpoint-backed predictor used by the API."""

    def __init__(self, checkpoint_path: Union[str, Path] = DEFAULT_CHECKPOINT, dl_fraction: float = 0.5):
        self.checkpoint_path = Path(checkpoint_path)
        self.dl_fraction = dl_fraction
        self.model: Optional[LstmModel] = None
        self._load_artifacts()

    def _load_artifacts(self):
        logger.info("Loading predictor from %s", self.checkpoint_path)
        self.model = load_checkpoint(self.checkpoint_path)

    @classmethod
    def from_model(cls, model: LstmModel, dl_fraction: float = 0.5) -> "ChannelPredictor":
        predictor = cls.__new__(cls)
        predictor.checkpoint_path = Path("<memory>")
        predictor.dl_fraction = dl_fraction
        predictor.model = model
        return predictor

    @property
    def hidden_size(self) -> int:
        return self.model.hidden_size

    def predict(
        self,
        estimates: Sequence[Sequence[complex]],
        mode: Union[str, PredictionMode] = PredictionMode.OPEN_LOOP,
        horizon: int = 1,
    ) -> Dict[str, Any]:
        """
        Forecasts from a (T, K) block of UL estimates.

        Open loop returns T one-step forecasts; closed loop warms up on the
        block and returns `horizon` fed-back forecasts. Both come with the DL
        readout at the configured DL fraction.
        """
        values = np.asarray(estimates, dtype=complex)
        if values.ndim != 2 or values.shape[0] == 0:
            raise DomainError("estimates must be a non-empty (frames, subcarriers) matrix")
        mode = PredictionMode(mode)

        if mode is PredictionMode.OPEN_LOOP:
            run = predict_open_loop(self.model, values)
            anchor = values[0]
        else:
            run = predict_closed_loop(self.model, values, horizon)
            anchor = values[-1]

        downlink = read_downlink(run.predictions, anchor, self.dl_fraction)
        return {
            "mode": mode.value,
            "n_steps": run.n_steps,
            "n_subcarriers": int(values.shape[1]),
            "uplink_forecast": run.predictions,
            "downlink_forecast": downlink,
        }
