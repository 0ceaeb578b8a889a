"""
Sweep Module
------------
Runs the (estimator x predictor mode x SSNR) comparison end to end.
Includes:
1. Predictor training (or checkpoint loading) per estimator and SSNR.
2. Evaluation on the test split of every realization.
3. Averaging across realizations and CSV emission.
4. Run manifest with config fingerprint and package versions.
"""

import json
import logging
import math
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.config import ExperimentConfig, PredictorMode, TargetSource, config_fingerprint
from src.dataset import Dataset, load_or_generate_dataset
from src.estimation import EstimationMethod
from src.exceptions import DomainError, TrainingDivergenceError
from src.inference import load_checkpoint, save_checkpoint
from src.linksim import TddSchedule
from src.metrics import NmseReport, average_reports, linear_to_db, nmse
from src.predictor import LstmModel, init_model, interpolate_dl, read_downlink, rollout
from src.training import AdamConfig, TrainingSequences, train

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "estimator", "mode", "ssnr_db", "nmse_real", "nmse_imag",
    "nmse_avg", "nmse_avg_db", "n_realizations", "seed",
]
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn", "joblib", "pyarrow", "pydantic")

# One model shared by all subcarriers, or one model per subcarrier
ModelBank = List[LstmModel]


@dataclass(frozen=True)
class RealizationReport:
    report: NmseReport
    realization_seed: int


@dataclass(frozen=True)
class SweepCell:
    """Realization-averaged result of one (estimator, mode, ssnr) combination."""

    estimator: str
    mode: str
    ssnr_db: float
    nmse_real: float
    nmse_imag: float
    nmse_avg: float
    n_realizations: int
    seed: int

    @property
    def nmse_avg_db(self) -> float:
        return linear_to_db(self.nmse_avg)

    @property
    def failed(self) -> bool:
        return math.isnan(self.nmse_avg)

    def to_row(self) -> Dict[str, object]:
        return {
            "estimator": self.estimator,
            "mode": self.mode,
            "ssnr_db": self.ssnr_db,
            "nmse_real": self.nmse_real,
            "nmse_imag": self.nmse_imag,
            "nmse_avg": self.nmse_avg,
            "nmse_avg_db": self.nmse_avg_db,
            "n_realizations": self.n_realizations,
            "seed": self.seed,
        }


@dataclass
class SweepResult:
    cells: List[SweepCell]
    config_fingerprint: str
    reports: List[RealizationReport] = field(default_factory=list)

    def sorted_cells(self) -> List[SweepCell]:
        return sorted(self.cells, key=lambda c: (c.estimator, c.mode, c.ssnr_db))

    def cell(self, estimator: str, mode: str, ssnr_db: float) -> SweepCell:
        for c in self.cells:
            if c.estimator == estimator and c.mode == mode and c.ssnr_db == float(ssnr_db):
                return c
        raise KeyError((estimator, mode, ssnr_db))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.to_row() for c in self.sorted_cells()], columns=CSV_COLUMNS)


def _failed_cell(estimator: str, mode: str, ssnr_db: float, config: ExperimentConfig) -> SweepCell:
    nan = float("nan")
    return SweepCell(estimator, mode, ssnr_db, nan, nan, nan, 0, config.seed)


# --- TRAINING ---

def checkpoint_path(config: ExperimentConfig, method: str, ssnr_db: float, subcarrier: Optional[int] = None) -> Path:
    suffix = "" if subcarrier is None else f"_k{subcarrier:03d}"
    return Path(config.output_dir) / "models" / f"lstm_{method}_{ssnr_db:g}dB{suffix}.joblib"


def training_sequences(dataset: Dataset, method: str, ssnr_db: float, target_source: TargetSource) -> TrainingSequences:
    """Pools the training split of every realization (frames before n_train only)."""
    n_train = dataset.n_train_frames
    parts = []
    for realization in dataset.realizations:
        inputs = realization.series(method, ssnr_db).estimates[:n_train]
        targets = realization.trace.responses[:n_train] if target_source is TargetSource.TRUTH else inputs
        parts.append(TrainingSequences.from_series(inputs, targets))
    return TrainingSequences.concatenate(parts)


def _model_seed(config: ExperimentConfig, method: str, ssnr_db: float, subcarrier: int = 0) -> np.random.SeedSequence:
    method_idx = list(EstimationMethod).index(EstimationMethod(method))
    ssnr_idx = config.ssnr_sweep_db.index(float(ssnr_db))
    return np.random.SeedSequence(entropy=config.seed, spawn_key=(2, method_idx, ssnr_idx, subcarrier))


def train_cell(config: ExperimentConfig, dataset: Dataset, method: str, ssnr_db: float) -> ModelBank:
    """Trains and checkpoints the predictor(s) of one (estimator, ssnr)."""
    tc = config.training
    optimizer = AdamConfig(tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon)
    sequences = training_sequences(dataset, method, ssnr_db, tc.target_source)
    n_sub = config.scenario.dft_size

    jobs = [(None, sequences)] if tc.shared_weights else [
        (k, sequences.subcarrier(k, n_sub)) for k in range(n_sub)
    ]
    bank: ModelBank = []
    for subcarrier, seqs in jobs:
        seed = _model_seed(config, method, ssnr_db, subcarrier or 0)
        model = init_model(config.scenario.hidden_neurons, seed=seed)
        result = train(
            model, seqs, optimizer,
            epochs=tc.epochs,
            seed=int(seed.generate_state(1)[0]),
            batch_size=tc.batch_size,
            window=tc.bptt_window,
        )
        save_checkpoint(
            result.model,
            checkpoint_path(config, method, ssnr_db, subcarrier),
            metadata={"estimator": method, "ssnr_db": ssnr_db, "final_loss": result.loss_history[-1]},
        )
        bank.append(result.model)
    return bank


def load_cell(config: ExperimentConfig, method: str, ssnr_db: float) -> ModelBank:
    if config.training.shared_weights:
        return [load_checkpoint(checkpoint_path(config, method, ssnr_db))]
    return [
        load_checkpoint(checkpoint_path(config, method, ssnr_db, k))
        for k in range(config.scenario.dft_size)
    ]


def train_models(config: ExperimentConfig, dataset: Optional[Dataset] = None) -> Dict[Tuple[str, float], Path]:
    """Trains every (estimator, ssnr) predictor and returns the checkpoint paths."""
    dataset = dataset or load_or_generate_dataset(config)
    paths = {}
    for method in config.estimator_methods:
        for ssnr_db in config.ssnr_sweep_db:
            logger.info("Training predictor for %s at %g dB", method, ssnr_db)
            train_cell(config, dataset, method, ssnr_db)
            paths[(method, ssnr_db)] = checkpoint_path(config, method, ssnr_db, None if config.training.shared_weights else 0)
    return paths


# --- EVALUATION ---

def _bank_rollout(bank: ModelBank, values: np.ndarray, refresh_every: int, states=None):
    """Runs a shared model on all subcarriers, or model k on column k."""
    if len(bank) == 1:
        run = rollout(bank[0], values, refresh_every, state=None if states is None else states[0])
        return run.predictions, [run.final_state]

    predictions = np.empty_like(values, dtype=complex)
    finals = []
    for k, model in enumerate(bank):
        run = rollout(model, values[:, k:k + 1], refresh_every, state=None if states is None else states[k])
        predictions[:, k] = run.predictions[:, 0]
        finals.append(run.final_state)
    return predictions, finals


def lstm_downlink(
    bank: ModelBank,
    estimates: np.ndarray,
    n_train: int,
    refresh_every: int,
    warmup_frames: int,
    dl_fraction: float,
) -> np.ndarray:
    """
    DL forecasts for the test frames of one realization.

    The state is warmed up open-loop on the tail of the training split; the
    forecast of the first test UL instant anchors the DL readout.
    """
    warmup = min(warmup_frames, n_train)
    warm_predictions, states = _bank_rollout(bank, estimates[n_train - warmup:n_train], 1)
    forecasts, _ = _bank_rollout(bank, estimates[n_train:], refresh_every, states)
    return read_downlink(forecasts, warm_predictions[-1], dl_fraction)


def _resolve_mode(mode: PredictorMode, method: str) -> PredictorMode:
    if mode is not PredictorMode.ADAPTIVE:
        return mode
    # Accurate inputs favor open loop; noisy LS inputs favor closed loop
    return PredictorMode.OPEN_LOOP if method == EstimationMethod.LSMMSE.value else PredictorMode.CLOSED_LOOP


def evaluate_cell(
    config: ExperimentConfig,
    dataset: Dataset,
    method: str,
    mode: PredictorMode,
    ssnr_db: float,
    bank: Optional[ModelBank] = None,
) -> List[RealizationReport]:
    """NMSE of one (estimator, mode, ssnr) on the test split of every realization."""
    n_train = dataset.n_train_frames
    scenario = config.scenario
    schedule = TddSchedule(scenario.dt_s, scenario.ul_offset, scenario.dl_offset)
    effective = _resolve_mode(mode, method)

    reports = []
    for realization in dataset.realizations:
        estimates = realization.series(method, ssnr_db).estimates
        if effective is PredictorMode.INTERPOLATION:
            predicted = interpolate_dl(estimates, schedule)[n_train:]
        else:
            if bank is None:
                raise DomainError(f"Mode {mode.value} needs a trained predictor")
            refresh = 1 if effective is PredictorMode.OPEN_LOOP else config.training.closed_loop_horizon
            predicted = lstm_downlink(
                bank, estimates, n_train, refresh, config.training.warmup_frames, schedule.dl_fraction
            )
        truth = realization.trace.dl_responses[n_train:]
        report = nmse(predicted, truth, method, mode.value, ssnr_db)
        reports.append(RealizationReport(report=report, realization_seed=realization.trace.realization_seed))
    return reports


def run_cell(
    config: ExperimentConfig,
    dataset: Dataset,
    method: str,
    ssnr_db: float,
) -> Tuple[List[SweepCell], List[RealizationReport]]:
    """All requested modes of one (estimator, ssnr). Failures become NaN cells."""
    bank = None
    failure = None
    if config.needs_training():
        try:
            bank = load_cell(config, method, ssnr_db) if config.load_only else train_cell(config, dataset, method, ssnr_db)
        except TrainingDivergenceError as exc:
            logger.warning("Training failed for %s at %g dB: %s", method, ssnr_db, exc)
            failure = exc

    cells, reports = [], []
    for mode in config.predictor_modes:
        if failure is not None and mode is not PredictorMode.INTERPOLATION:
            cells.append(_failed_cell(method, mode.value, ssnr_db, config))
            continue
        try:
            cell_reports = evaluate_cell(config, dataset, method, mode, ssnr_db, bank)
        except (DomainError, ArithmeticError) as exc:
            logger.warning("Evaluation failed for %s/%s at %g dB: %s", method, mode.value, ssnr_db, exc)
            cells.append(_failed_cell(method, mode.value, ssnr_db, config))
            continue

        averaged = average_reports([r.report for r in cell_reports])
        cells.append(SweepCell(
            estimator=method,
            mode=mode.value,
            ssnr_db=float(ssnr_db),
            nmse_real=averaged.nmse_real,
            nmse_imag=averaged.nmse_imag,
            nmse_avg=averaged.nmse_avg,
            n_realizations=len(cell_reports),
            seed=config.seed,
        ))
        reports.extend(cell_reports)
    return cells, reports


def run_sweep(config: ExperimentConfig, dataset: Optional[Dataset] = None) -> SweepResult:
    """
    Trains (or loads) and evaluates every requested cell, averages across
    realizations and writes results.csv plus run_manifest.json.
    """
    logger.info("Starting sweep: %s x %s x %d SSNR points",
                config.estimator_methods, [m.value for m in config.predictor_modes], len(config.ssnr_sweep_db))
    dataset = dataset or load_or_generate_dataset(config)

    jobs = [(method, ssnr_db) for method in config.estimator_methods for ssnr_db in config.ssnr_sweep_db]
    outputs = Parallel(n_jobs=config.n_jobs)(
        delayed(run_cell)(config, dataset, method, ssnr_db) for method, ssnr_db in jobs
    )

    cells = [c for cell_list, _ in outputs for c in cell_list]
    reports = [r for _, report_list in outputs for r in report_list]
    result = SweepResult(cells=cells, config_fingerprint=config_fingerprint(config), reports=reports)

    output_dir = Path(config.output_dir)
    emit_csv(result, output_dir / "results.csv")
    write_run_manifest(config, output_dir / "run_manifest.json")

    n_failed = sum(c.failed for c in cells)
    logger.info("Sweep complete. %d cells (%d failed) -> %s", len(cells), n_failed, output_dir)
    return result


# --- OUTPUT ---

def emit_csv(result: SweepResult, path: Union[str, Path]) -> Path:
    """One row per averaged cell, sorted by (estimator, mode, ssnr_db)."""
    if not result.cells:
        raise DomainError("Sweep result is empty")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    result.to_frame().to_csv(path, index=False, na_rep="nan", lineterminator="\n")
    return path


def package_versions(packages: Sequence[str] = VERSIONED_PACKAGES) -> Dict[str, str]:
    versions = {}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def write_run_manifest(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_fingerprint": config_fingerprint(config),
        "python": platform.python_version(),
        "packages": package_versions(),
        "config": config.model_dump(mode="json"),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_results(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)
