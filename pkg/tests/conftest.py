"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from src.config import quick_profile
from src.predictor import init_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
    """A few frames on a handful of subcarriers; trains in well under a second."""
    return quick_profile(
        scenario={"csi_size": 60, "dft_size": 8, "hidden_neurons": 4},
        training={"epochs": 2, "bptt_window": 20, "closed_loop_horizon": 4, "warmup_frames": 10},
        ssnr_sweep_db=[0.0, 20.0],
        n_realizations=2,
        seed=7,
        output_dir=str(tmp_path / "run"),
    )


@pytest.fixture
def fitted_model():
    model = init_model(4, seed=3)
    model.fitted = True
    return model
