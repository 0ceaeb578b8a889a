"""
Dataset Module
--------------
Generates and persists the simulated CSI dataset.
Includes:
1. Contiguous train/test frame split.
2. Channel traces + LS / LS-MMSE estimate series per realization and SSNR.
3. Parquet files with JSON schema metadata, plus a manifest.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq
from sklearn.model_selection import train_test_split

from src.channel3d import ChannelTrace, CorrelationConfig, Geometry, trace_channel
from src.config import ExperimentConfig, RhhSource
from src.estimation import (
    EstimateSeries,
    EstimationMethod,
    MmseContext,
    build_mmse_context,
    debiased_ls_autocorrelation,
    estimate_series,
    ls_estimate,
)
from src.exceptions import DomainError
from src.linksim import constellation_beta, run_uplink
from src.metrics import db_to_linear

logger = logging.getLogger(__name__)

TRACE_METADATA_KEY = b"channel_trace"
ESTIMATE_METADATA_KEY = b"estimate_series"
MANIFEST_NAME = "manifest.json"

EstimateKey = Tuple[str, float]


@dataclass
class RealizationData:
    index: int
    trace: ChannelTrace
    estimates: Dict[EstimateKey, EstimateSeries] = field(default_factory=dict)

    def series(self, method: str, ssnr_db: float) -> EstimateSeries:
        return self.estimates[(str(method), float(ssnr_db))]


@dataclass
class Dataset:
    realizations: List[RealizationData]
    n_train_frames: int
    fingerprint: str

    @property
    def n_samples(self) -> int:
        return sum(r.trace.n_frames for r in self.realizations)


# --- SPLIT ---

def split_frames(n_frames: int, train_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    """First round(fraction * n) frames for training, the rest for testing (no shuffling)."""
    n_train = int(round(n_frames * train_fraction))
    if not 0 < n_train < n_frames:
        raise DomainError(
            f"train_fraction={train_fraction} leaves an empty split for {n_frames} frames"
        )
    train_idx, test_idx = train_test_split(np.arange(n_frames), train_size=n_train, shuffle=False)
    return train_idx, test_idx


# --- SEEDS ---

def realization_seeds(config: ExperimentConfig) -> List[int]:
    """One channel seed per realization, derived from the experiment seed."""
    state = np.random.SeedSequence(config.seed).generate_state(config.n_realizations)
    return [int(s) for s in state]


def uplink_seed(config: ExperimentConfig, realization: int) -> np.random.SeedSequence:
    # Same pilots and unit-variance noise draws at every SSNR of a realization
    return np.random.SeedSequence(entropy=config.seed, spawn_key=(realization, 1))


def dataset_fingerprint(config: ExperimentConfig) -> str:
    """Hash of the fields that change the generated files."""
    payload = config.model_dump(
        mode="json",
        include={
            "scenario", "ssnr_sweep_db", "n_realizations", "train_fraction", "seed",
            "estimator", "rhh_source", "mmse_per_subcarrier",
        },
    )
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# --- ESTIMATION ---

def resolve_beta(config: ExperimentConfig) -> float:
    beta = config.scenario.beta
    return constellation_beta(config.scenario.modulation) if beta is None else beta


def _mmse_context(
    config: ExperimentConfig,
    trace: ChannelTrace,
    h_ls: np.ndarray,
    ssnr: float,
    beta: float,
    n_train: int,
) -> MmseContext:
    per_subcarrier = config.mmse_per_subcarrier
    if config.rhh_source is RhhSource.TRAINING_TRUTH:
        return build_mmse_context(trace.responses[:n_train], ssnr, beta, per_subcarrier=per_subcarrier)
    if config.rhh_source is RhhSource.ORACLE:
        return build_mmse_context(trace.responses, ssnr, beta, per_subcarrier=per_subcarrier)

    # Unit pilot energy: E{1/|P|^2} = beta
    noise_variance = 1.0 / ssnr
    return MmseContext(
        autocorrelation=debiased_ls_autocorrelation(h_ls[:n_train], noise_variance, beta),
        noise_scale=beta * noise_variance,
        beta=beta,
        per_subcarrier=per_subcarrier,
    )


def estimate_realization(
    config: ExperimentConfig,
    trace: ChannelTrace,
    realization: int,
    n_train: int,
) -> Dict[EstimateKey, EstimateSeries]:
    """LS and/or LS-MMSE estimate series of one trace at every sweep SSNR; R_hh sees frames before n_train."""
    beta = resolve_beta(config)
    methods = config.estimator_methods
    series: Dict[EstimateKey, EstimateSeries] = {}

    for ssnr_db in config.ssnr_sweep_db:
        ssnr = db_to_linear(ssnr_db)
        frames, received = run_uplink(
            trace, ssnr, config.scenario.modulation, uplink_seed(config, realization)
        )
        ctx = None
        if EstimationMethod.LSMMSE.value in methods:
            h_ls = np.stack([ls_estimate(rx, fr) for rx, fr in zip(received, frames)])
            ctx = _mmse_context(config, trace, h_ls, ssnr, beta, n_train)
        for method in methods:
            series[(method, ssnr_db)] = estimate_series(frames, received, method, ssnr, ctx)

    return series


# --- PERSISTENCE ---

def _write_table(df: pd.DataFrame, path: Path, key: bytes, metadata: Dict) -> None:
    table = pa.Table.from_pandas(df, preserve_index=False)
    schema_metadata = dict(table.schema.metadata or {})
    schema_metadata[key] = json.dumps(metadata, sort_keys=True).encode("utf-8")
    pq.write_table(table.replace_schema_metadata(schema_metadata), path)


def _read_table(path: Path, key: bytes) -> Tuple[pd.DataFrame, Dict]:
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found at {path}")
    table = pq.read_table(path)
    raw = (table.schema.metadata or {}).get(key)
    if raw is None:
        raise DomainError(f"{path} has no '{key.decode()}' metadata")
    return table.to_pandas(), json.loads(raw)


def _long_index(n_frames: int, n_subcarriers: int) -> Dict[str, np.ndarray]:
    return {
        "frame": np.repeat(np.arange(n_frames), n_subcarriers),
        "subcarrier": np.tile(np.arange(n_subcarriers), n_frames),
    }


def save_trace(trace: ChannelTrace, path: Union[str, Path]) -> Path:
    path = Path(path)
    df = pd.DataFrame({
        **_long_index(trace.n_frames, trace.n_subcarriers),
        "ul_re": trace.responses.real.reshape(-1),
        "ul_im": trace.responses.imag.reshape(-1),
        "dl_re": trace.dl_responses.real.reshape(-1),
        "dl_im": trace.dl_responses.imag.reshape(-1),
    })
    metadata = {
        "seed": trace.realization_seed,
        "n_frames": trace.n_frames,
        "n_subcarriers": trace.n_subcarriers,
        "dt": trace.frame_interval,
        "ul_offset": trace.ul_offset,
        "dl_offset": trace.dl_offset,
    }
    _write_table(df, path, TRACE_METADATA_KEY, metadata)
    return path


def load_trace(path: Union[str, Path]) -> ChannelTrace:
    df, meta = _read_table(Path(path), TRACE_METADATA_KEY)
    shape = (meta["n_frames"], meta["n_subcarriers"])
    return ChannelTrace(
        responses=(df["ul_re"].to_numpy() + 1j * df["ul_im"].to_numpy()).reshape(shape),
        dl_responses=(df["dl_re"].to_numpy() + 1j * df["dl_im"].to_numpy()).reshape(shape),
        frame_interval=meta["dt"],
        realization_seed=meta["seed"],
        ul_offset=meta["ul_offset"],
        dl_offset=meta["dl_offset"],
    )


def save_estimates(series: EstimateSeries, ssnr_db: float, path: Union[str, Path]) -> Path:
    path = Path(path)
    n_frames, n_sub = series.estimates.shape
    df = pd.DataFrame({
        **_long_index(n_frames, n_sub),
        "re": series.estimates.real.reshape(-1),
        "im": series.estimates.imag.reshape(-1),
    })
    metadata = {
        "method": series.method.value,
        "ssnr": series.ssnr,
        "ssnr_db": ssnr_db,
        "n_frames": n_frames,
        "n_subcarriers": n_sub,
    }
    _write_table(df, path, ESTIMATE_METADATA_KEY, metadata)
    return path


def load_estimates(path: Union[str, Path]) -> Tuple[EstimateSeries, float]:
    df, meta = _read_table(Path(path), ESTIMATE_METADATA_KEY)
    shape = (meta["n_frames"], meta["n_subcarriers"])
    series = EstimateSeries(
        estimates=(df["re"].to_numpy() + 1j * df["im"].to_numpy()).reshape(shape),
        method=EstimationMethod(meta["method"]),
        ssnr=meta["ssnr"],
    )
    return series, float(meta["ssnr_db"])


def trace_filename(realization: int) -> str:
    return f"trace_r{realization:02d}.parquet"


def estimate_filename(realization: int, method: str, ssnr_db: float) -> str:
    return f"estimates_r{realization:02d}_{method}_{ssnr_db:g}dB.parquet"


# --- PIPELINE ---

def generate_dataset(config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None) -> Dataset:
    """
    Simulates every realization, estimates it at every sweep SSNR and writes
    the files under <output_dir>/dataset.

    Returns:
        Dataset: The in-memory copy of what was written.
    """
    config.check_dataset_size()
    dataset_dir = Path(output_dir or config.output_dir) / "dataset"
    dataset_dir.mkdir(parents=True, exist_ok=True)

    logger.info("Starting dataset generation...")
    scenario = config.scenario
    geometry = Geometry.from_scenario(scenario)
    correlation = CorrelationConfig.from_scenario(scenario)
    train_idx, test_idx = split_frames(scenario.csi_size, config.train_fraction)
    n_train = len(train_idx)
    logger.info("Split per realization: %d train / %d test frames", n_train, len(test_idx))

    realizations: List[RealizationData] = []
    files: List[str] = []
    for r, seed in enumerate(realization_seeds(config)):
        trace = trace_channel(geometry, correlation, scenario, seed)
        save_trace(trace, dataset_dir / trace_filename(r))
        files.append(trace_filename(r))

        estimates = estimate_realization(config, trace, r, n_train)
        for (method, ssnr_db), series in estimates.items():
            name = estimate_filename(r, method, ssnr_db)
            save_estimates(series, ssnr_db, dataset_dir / name)
            files.append(name)

        realizations.append(RealizationData(index=r, trace=trace, estimates=estimates))
        logger.info("Realization %d/%d done (seed=%d)", r + 1, config.n_realizations, seed)

    fingerprint = dataset_fingerprint(config)
    manifest = {
        "dataset_fingerprint": fingerprint,
        "n_realizations": config.n_realizations,
        "csi_size": scenario.csi_size,
        "n_train_frames": n_train,
        "files": files,
    }
    (dataset_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    dataset = Dataset(realizations=realizations, n_train_frames=n_train, fingerprint=fingerprint)
    logger.info(
        "Dataset generation complete. %d samples (%d realizations x %d frames) in %s",
        dataset.n_samples, config.n_realizations, scenario.csi_size, dataset_dir,
    )
    return dataset


def load_dataset(config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None) -> Dataset:
    """Reads a dataset written by generate_dataset for the same config."""
    dataset_dir = Path(output_dir or config.output_dir) / "dataset"
    manifest_path = dataset_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"Dataset manifest not found at {manifest_path}")

    manifest = json.loads(manifest_path.read_text())
    fingerprint = dataset_fingerprint(config)
    if manifest["dataset_fingerprint"] != fingerprint:
        raise DomainError(f"Dataset in {dataset_dir} was generated with a different configuration")

    realizations = []
    for r in range(config.n_realizations):
        trace = load_trace(dataset_dir / trace_filename(r))
        estimates = {}
        for ssnr_db in config.ssnr_sweep_db:
            for method in config.estimator_methods:
                series, _ = load_estimates(dataset_dir / estimate_filename(r, method, ssnr_db))
                estimates[(method, ssnr_db)] = series
        realizations.append(RealizationData(index=r, trace=trace, estimates=estimates))

    logger.info("Loaded dataset from %s (%d realizations)", dataset_dir, len(realizations))
    return Dataset(realizations=realizations, n_train_frames=manifest["n_train_frames"], fingerprint=fingerprint)


def load_or_generate_dataset(config: ExperimentConfig) -> Dataset:
    manifest_path = Path(config.output_dir) / "dataset" / MANIFEST_NAME
    if manifest_path.exists():
        try:
            return load_dataset(config)
        except DomainError as exc:
            logger.warning("%s; regenerating", exc)
    return generate_dataset(config)
