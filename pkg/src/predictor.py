"""
Predictor Module
----------------
Forecasts DL channel frequency responses from UL estimate sequences.
Includes:
1. Linear interpolation/extrapolation baseline.
2. Single-layer LSTM + fully connected + regression stack (numpy).
3. Open-loop and closed-loop inference on the UL frame grid.
4. DL readout from the forecast trajectory.

Every subcarrier is an independent sequence of 2-vectors (Re H, Im H); the
subcarriers of one frame are processed as a batch sharing the same weights.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from src.estimation import EstimateSeries
from src.exceptions import DomainError
from src.linksim import TddSchedule

logger = logging.getLogger(__name__)

PARAMETER_ORDER: Tuple[str, ...] = (
    "w_xi", "w_xf", "w_xg", "w_xo",
    "w_hi", "w_hf", "w_hg", "w_ho",
    "b_i", "b_f", "b_g", "b_o",
    "w_fc", "b_fc",
    "w_y", "b_y",
)
GATES = ("i", "f", "g", "o")


class PredictionMode(str, Enum):
    OPEN_LOOP = "open_loop"
    CLOSED_LOOP = "closed_loop"


# --- MODEL TYPES ---

@dataclass
class LstmModel:
    """
    LSTM layer (input/forget/cell/output gates), fully connected layer and
    regression layer, with the z-score statistics of the training split.
    """

    w_xi: np.ndarray
    w_xf: np.ndarray
    w_xg: np.ndarray
    w_xo: np.ndarray
    w_hi: np.ndarray
    w_hf: np.ndarray
    w_hg: np.ndarray
    w_ho: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray
    w_fc: np.ndarray
    b_fc: np.ndarray
    w_y: np.ndarray
    b_y: np.ndarray
    norm_mean: np.ndarray
    norm_scale: np.ndarray
    fitted: bool = False

    def __post_init__(self):
        if self.hidden_size <= 0:
            raise DomainError("hidden_size must be > 0")
        if np.any(self.norm_scale <= 0):
            raise DomainError("normalization scales must be > 0")

    @property
    def hidden_size(self) -> int:
        return self.w_hi.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_xi.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w_y.shape[0]

    def parameters(self) -> Dict[str, np.ndarray]:
        """Trainable arrays by name (live references, updated in place by Adam)."""
        return {name: getattr(self, name) for name in PARAMETER_ORDER}

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters().values())

    def stacked_input_weights(self) -> np.ndarray:
        return np.concatenate([self.w_xi, self.w_xf, self.w_xg, self.w_xo])

    def stacked_recurrent_weights(self) -> np.ndarray:
        return np.concatenate([self.w_hi, self.w_hf, self.w_hg, self.w_ho])

    def stacked_biases(self) -> np.ndarray:
        return np.concatenate([self.b_i, self.b_f, self.b_g, self.b_o])

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.norm_mean) / self.norm_scale

    def denormalize(self, features: np.ndarray) -> np.ndarray:
        return features * self.norm_scale + self.norm_mean

    @classmethod
    def zeros(cls, hidden_size: int, input_dim: int = 2, output_dim: int = 2) -> "LstmModel":
        n, d, o = hidden_size, input_dim, output_dim
        arrays = {
            **{f"w_x{g}": np.zeros((n, d)) for g in GATES},
            **{f"w_h{g}": np.zeros((n, n)) for g in GATES},
            **{f"b_{g}": np.zeros(n) for g in GATES},
            "w_fc": np.zeros((o, n)),
            "b_fc": np.zeros(o),
            "w_y": np.zeros((o, o)),
            "b_y": np.zeros(o),
        }
        return cls(**arrays, norm_mean=np.zeros(d), norm_scale=np.ones(d))


def init_model(
    hidden_size: int,
    input_dim: int = 2,
    output_dim: int = 2,
    seed: Union[int, np.random.SeedSequence] = 0,
) -> LstmModel:
    """Weights ~ U(-1/sqrt(N), 1/sqrt(N)); zero biases except forget bias = 1."""
    model = LstmModel.zeros(hidden_size, input_dim, output_dim)
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(hidden_size)
    for name, param in model.parameters().items():
        if name.startswith("w_"):
            param[...] = rng.uniform(-scale, scale, size=param.shape)
    model.b_f[...] = 1.0
    return model


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, batch: Optional[int] = None) -> "LstmState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(hidden=np.zeros(shape), cell=np.zeros(shape))


@dataclass
class PredictionRun:
    """
    One-step-ahead forecasts: row t is the forecast of UL instant t+1 made
    after consuming input t.
    """

    mode: PredictionMode
    predictions: np.ndarray
    source_method: str
    final_state: Optional[LstmState] = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return self.predictions.shape[0]


# --- FEATURE ENCODING ---

def complex_to_features(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    return np.stack([h.real, h.imag], axis=-1)


def features_to_complex(features: np.ndarray) -> np.ndarray:
    return features[..., 0] + 1j * features[..., 1]


# --- BASELINE ---

def interpolate_dl(
    estimates: Union[EstimateSeries, np.ndarray],
    schedule: TddSchedule,
) -> np.ndarray:
    """
    Causal DL baseline: for frame n, extrapolate from the UL estimates of
    frames n-1 and n to the DL instant of frame n. Frame 0 holds its estimate.
    """
    values = estimates.estimates if isinstance(estimates, EstimateSeries) else np.asarray(estimates)
    values = np.atleast_2d(values)
    n_frames = values.shape[0]

    if n_frames < 2:
        logger.warning("Fewer than 2 UL estimates; DL baseline falls back to hold-last")
        return values.copy()

    # (dl_n - t1) / (t1 - t0) with t1 - t0 = dt
    weight = schedule.dl_fraction
    predicted = values + weight * np.diff(values, axis=0, prepend=values[:1])
    return predicted


# --- LSTM FORWARD ---

def _cell_step(
    x: np.ndarray,
    state: LstmState,
    model: LstmModel,
) -> Tuple[LstmState, Dict[str, np.ndarray]]:
    n = model.hidden_size
    z = x @ model.stacked_input_weights().T + state.hidden @ model.stacked_recurrent_weights().T
    z = z + model.stacked_biases()

    ig = expit(z[..., :n])
    fg = expit(z[..., n:2 * n])
    cand = np.tanh(z[..., 2 * n:3 * n])
    og = expit(z[..., 3 * n:])

    cell = fg * state.cell + ig * cand
    hidden = og * np.tanh(cell)
    gates = {"i": ig, "f": fg, "g": cand, "o": og}
    return LstmState(hidden=hidden, cell=cell), gates


def lstm_cell_forward(x: np.ndarray, state: LstmState, model: LstmModel) -> LstmState:
    """One LSTM step on a normalized input (input_dim,) or batch (B, input_dim)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim or state.hidden.shape[-1] != model.hidden_size:
        raise DomainError(
            f"Dimension mismatch: input {x.shape}, hidden {state.hidden.shape}, "
            f"model (input_dim={model.input_dim}, N={model.hidden_size})"
        )
    new_state, _ = _cell_step(x, state, model)
    return new_state


def head(hidden: np.ndarray, model: LstmModel) -> np.ndarray:
    """Fully connected layer followed by the regression layer (normalized space)."""
    h_fc = hidden @ model.w_fc.T + model.b_fc
    return h_fc @ model.w_y.T + model.b_y


def forward(x: np.ndarray, state: LstmState, model: LstmModel) -> Tuple[np.ndarray, LstmState]:
    """LSTM step + FC + regression; returns the denormalized prediction."""
    new_state = lstm_cell_forward(x, state, model)
    return model.denormalize(head(new_state.hidden, model)), new_state


# --- INFERENCE ---

def _require_ready(model: LstmModel) -> None:
    if not model.fitted:
        raise DomainError("Model has not been trained")
    if not model.is_finite():
        raise DomainError("Model parameters contain NaN or infinite values")


def _as_sequence(estimates: Union[EstimateSeries, np.ndarray]) -> np.ndarray:
    values = estimates.estimates if isinstance(estimates, EstimateSeries) else estimates
    values = np.asarray(values, dtype=complex)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] == 0:
        raise DomainError("Estimate sequence is empty")
    return values


def rollout(
    model: LstmModel,
    estimates: Union[EstimateSeries, np.ndarray],
    refresh_every: int = 1,
    state: Optional[LstmState] = None,
    source_method: str = "",
) -> PredictionRun:
    """
    Runs the predictor over a (T, K) sequence.

    At steps t with t % refresh_every == 0 the fresh estimate is fed; at the
    other steps the previous forecast replaces it. refresh_every = 1 is
    open-loop prediction.
    """
    _require_ready(model)
    if refresh_every < 1:
        raise DomainError("refresh_every must be >= 1")
    values = _as_sequence(estimates)
    n_steps, n_sub = values.shape

    if state is None:
        state = LstmState.zeros(model.hidden_size, batch=n_sub)

    predictions = np.empty((n_steps, n_sub), dtype=complex)
    for t in range(n_steps):
        current = values[t] if t % refresh_every == 0 else predictions[t - 1]
        x = model.normalize(complex_to_features(current))
        output, state = forward(x, state, model)
        predictions[t] = features_to_complex(output)

    mode = PredictionMode.OPEN_LOOP if refresh_every == 1 else PredictionMode.CLOSED_LOOP
    return PredictionRun(mode=mode, predictions=predictions, source_method=source_method, final_state=state)


def predict_open_loop(
    model: LstmModel,
    estimates: Union[EstimateSeries, np.ndarray],
    state: Optional[LstmState] = None,
    source_method: str = "",
) -> PredictionRun:
    """Feeds every estimate H(k, t) and records the forecast of t+1."""
    if isinstance(estimates, EstimateSeries) and not source_method:
        source_method = estimates.method.value
    return rollout(model, estimates, refresh_every=1, state=state, source_method=source_method)


def predict_closed_loop(
    model: LstmModel,
    seed_sequence: Union[EstimateSeries, np.ndarray],
    horizon: int,
    state: Optional[LstmState] = None,
    source_method: str = "",
) -> PredictionRun:
    """
    Warms the state on the seed sequence, then iterates `horizon` steps
    feeding each forecast back as the next input.

    predictions[0] is the forecast made from the last seed estimate, so
    horizon = 1 equals the last open-loop step on the same sequence.
    """
    _require_ready(model)
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    if isinstance(seed_sequence, EstimateSeries) and not source_method:
        source_method = seed_sequence.method.value
    values = _as_sequence(seed_sequence)
    n_sub = values.shape[1]

    if state is None:
        state = LstmState.zeros(model.hidden_size, batch=n_sub)
    for t in range(values.shape[0] - 1):
        _, state = forward(model.normalize(complex_to_features(values[t])), state, model)

    predictions = np.empty((horizon, n_sub), dtype=complex)
    current = values[-1]
    for step in range(horizon):
        output, state = forward(model.normalize(complex_to_features(current)), state, model)
        predictions[step] = features_to_complex(output)
        current = predictions[step]

    return PredictionRun(
        mode=PredictionMode.CLOSED_LOOP,
        predictions=predictions,
        source_method=source_method,
        final_state=state,
    )


def read_downlink(forecasts: np.ndarray, anchor: np.ndarray, dl_fraction: float) -> np.ndarray:
    """
    DL responses from a forecast trajectory on the UL grid.

    forecasts[t] is the forecast of UL instant t+1 and `anchor` the forecast
    (or estimate) of the first UL instant; the DL instant of frame t lies
    dl_fraction frames after UL instant t.
    """
    forecasts = np.atleast_2d(forecasts)
    previous = np.vstack([np.atleast_2d(anchor), forecasts[:-1]])
    return previous + dl_fraction * (forecasts - previous)
