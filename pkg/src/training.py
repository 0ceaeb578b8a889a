"""
Training Module
---------------
Trains the LSTM channel predictor.
Features:
1. Sequence windowing for truncated backpropagation through time.
2. z-score normalization fitted on the training split only.
3. Analytic BPTT gradients for every parameter tensor.
4. Adam updates with a divergence guard.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import expit
from sklearn.preprocessing import StandardScaler

from src.exceptions import DomainError, TrainingDivergenceError
from src.predictor import GATES, PARAMETER_ORDER, LstmModel, complex_to_features

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


class Adam:
    """Adam with bias-corrected first and second moment estimates, per named parameter."""

    def __init__(self, config: AdamConfig = AdamConfig()):
        self.config = config
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Updates `params` in place."""
        cfg = self.config
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t

        for name, param in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)

            self.m[name] *= cfg.beta1
            self.m[name] += (1.0 - cfg.beta1) * g
            self.v[name] *= cfg.beta2
            self.v[name] += (1.0 - cfg.beta2) * (g * g)

            param -= (cfg.learning_rate / bc1) * self.m[name] / (np.sqrt(self.v[name] / bc2) + cfg.epsilon)


@dataclass(frozen=True)
class TrainingSequences:
    """
    Per-subcarrier sequences: inputs[s, t] is fed at step t and targets[s, t]
    is the value the step-t forecast aims at (the channel at t+1).
    """

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.shape != self.targets.shape:
            raise DomainError(f"inputs {self.inputs.shape} and targets {self.targets.shape} differ")
        if self.inputs.size == 0:
            raise DomainError("Training set is empty")

    @classmethod
    def from_series(cls, inputs: np.ndarray, targets: np.ndarray) -> "TrainingSequences":
        """
        Builds one sequence per subcarrier from (T, K) matrices: the input at
        frame t is paired with the target at frame t+1.
        """
        inputs = np.asarray(inputs, dtype=complex)
        targets = np.asarray(targets, dtype=complex)
        if inputs.shape[0] < 2:
            raise DomainError("Need at least 2 frames to form (input_t, target_t+1) pairs")
        return cls(inputs=inputs[:-1].T.copy(), targets=targets[1:].T.copy())

    @classmethod
    def concatenate(cls, parts: Sequence["TrainingSequences"]) -> "TrainingSequences":
        return cls(
            inputs=np.concatenate([p.inputs for p in parts]),
            targets=np.concatenate([p.targets for p in parts]),
        )

    def subcarrier(self, k: int, n_subcarriers: int) -> "TrainingSequences":
        """Sequences of subcarrier k when parts were stacked realization by realization."""
        return TrainingSequences(self.inputs[k::n_subcarriers], self.targets[k::n_subcarriers])


@dataclass
class TrainingResult:
    model: LstmModel
    loss_history: List[float] = field(default_factory=list)


def fit_normalization(sequences: TrainingSequences) -> Tuple[np.ndarray, np.ndarray]:
    """Per-feature (Re, Im) mean and scale of the training inputs."""
    scaler = StandardScaler().fit(complex_to_features(sequences.inputs).reshape(-1, 2))
    return scaler.mean_.copy(), scaler.scale_.copy()


def make_windows(sequences: TrainingSequences, window: int, model: LstmModel) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized (n_windows, window, 2) input/target blocks; remainders are dropped."""
    x = model.normalize(complex_to_features(sequences.inputs))
    y = model.normalize(complex_to_features(sequences.targets))
    n_seq, length = sequences.inputs.shape
    window = min(window, length)
    n_blocks = length // window

    x = x[:, : n_blocks * window].reshape(n_seq * n_blocks, window, -1)
    y = y[:, : n_blocks * window].reshape(n_seq * n_blocks, window, -1)
    return x, y


def loss_and_gradients(
    model: LstmModel,
    inputs: np.ndarray,
    targets: np.ndarray,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Batch-mean 1/2 squared error and its BPTT gradients.

    Args:
        inputs: (B, T, input_dim) normalized inputs.
        targets: (B, T, output_dim) normalized targets.

    Returns:
        Loss and a gradient array for every name in PARAMETER_ORDER.
    """
    x = np.transpose(inputs, (1, 0, 2))
    tgt = np.transpose(targets, (1, 0, 2))
    n_steps, batch, _ = x.shape
    n = model.hidden_size

    w_x = model.stacked_input_weights()
    w_h = model.stacked_recurrent_weights()
    b = model.stacked_biases()

    hs = np.zeros((n_steps + 1, batch, n))
    cs = np.zeros((n_steps + 1, batch, n))
    gates = np.zeros((n_steps, batch, 4 * n))
    tanh_c = np.zeros((n_steps, batch, n))

    for t in range(n_steps):
        z = x[t] @ w_x.T + hs[t] @ w_h.T + b
        ig = expit(z[:, :n])
        fg = expit(z[:, n:2 * n])
        cand = np.tanh(z[:, 2 * n:3 * n])
        og = expit(z[:, 3 * n:])
        cs[t + 1] = fg * cs[t] + ig * cand
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = og * tanh_c[t]
        gates[t] = np.concatenate([ig, fg, cand, og], axis=1)

    hidden = hs[1:]
    h_fc = hidden @ model.w_fc.T + model.b_fc
    y = h_fc @ model.w_y.T + model.b_y

    diff = y - tgt
    scale = 1.0 / (batch * n_steps)
    loss = 0.5 * float(np.sum(diff**2)) * scale

    dy = diff * scale
    grads: Dict[str, np.ndarray] = {
        "w_y": np.einsum("tbo,tbp->op", dy, h_fc),
        "b_y": dy.sum(axis=(0, 1)),
    }
    dfc = dy @ model.w_y
    grads["w_fc"] = np.einsum("tbo,tbn->on", dfc, hidden)
    grads["b_fc"] = dfc.sum(axis=(0, 1))
    d_hidden = dfc @ model.w_fc

    dz_all = np.zeros_like(gates)
    dh_next = np.zeros((batch, n))
    dc_next = np.zeros((batch, n))
    for t in reversed(range(n_steps)):
        ig = gates[t, :, :n]
        fg = gates[t, :, n:2 * n]
        cand = gates[t, :, 2 * n:3 * n]
        og = gates[t, :, 3 * n:]

        dh = d_hidden[t] + dh_next
        d_og = dh * tanh_c[t]
        dc = dh * og * (1.0 - tanh_c[t] ** 2) + dc_next
        d_ig = dc * cand
        d_cand = dc * ig
        d_fg = dc * cs[t]
        dc_next = dc * fg

        dz = np.concatenate(
            [d_ig * ig * (1 - ig), d_fg * fg * (1 - fg), d_cand * (1 - cand**2), d_og * og * (1 - og)],
            axis=1,
        )
        dz_all[t] = dz
        dh_next = dz @ w_h

    g_wx = np.einsum("tbk,tbd->kd", dz_all, x)
    g_wh = np.einsum("tbk,tbn->kn", dz_all, hs[:-1])
    g_b = dz_all.sum(axis=(0, 1))
    for i, gate in enumerate(GATES):
        rows = slice(i * n, (i + 1) * n)
        grads[f"w_x{gate}"] = g_wx[rows]
        grads[f"w_h{gate}"] = g_wh[rows]
        grads[f"b_{gate}"] = g_b[rows]

    return loss, {name: grads[name] for name in PARAMETER_ORDER}


def train(
    model: LstmModel,
    sequences: TrainingSequences,
    optimizer: AdamConfig = AdamConfig(),
    epochs: int = 125,
    seed: int = 0,
    batch_size: int = 128,
    window: int = 50,
    fit_stats: bool = True,
) -> TrainingResult:
    """
    Minimizes the batch-mean 1/2 squared one-step-ahead error with Adam.

    The model is updated in place and returned with the per-epoch loss
    history. A non-finite loss aborts with TrainingDivergenceError.
    """
    if epochs < 1:
        raise DomainError("epochs must be >= 1")

    if fit_stats:
        model.norm_mean, model.norm_scale = fit_normalization(sequences)

    x_windows, y_windows = make_windows(sequences, window, model)
    n_windows = x_windows.shape[0]
    rng = np.random.default_rng(seed)
    adam = Adam(optimizer)
    params = model.parameters()
    init_scale = 1.0 / np.sqrt(model.hidden_size)

    logger.info(
        "Training LSTM (N=%d) on %d windows of %d steps for %d epochs",
        model.hidden_size, n_windows, x_windows.shape[1], epochs,
    )

    history: List[float] = []
    for epoch in range(epochs):
        order = rng.permutation(n_windows)
        epoch_loss = 0.0
        for batch_idx, start in enumerate(range(0, n_windows, batch_size)):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_gradients(model, x_windows[idx], y_windows[idx])
            if not np.isfinite(loss):
                raise TrainingDivergenceError(epoch, batch_idx, optimizer.learning_rate, init_scale, loss)
            adam.step(params, grads)
            epoch_loss += loss * len(idx)

        history.append(epoch_loss / n_windows)
        if epoch == 0 or (epoch + 1) % 10 == 0 or epoch == epochs - 1:
            logger.info("Epoch %d/%d | loss %.6e", epoch + 1, epochs, history[-1])

    if not model.is_finite():
        raise TrainingDivergenceError(epochs - 1, -1, optimizer.learning_rate, init_scale)

    model.fitted = True
    return TrainingResult(model=model, loss_history=history)
