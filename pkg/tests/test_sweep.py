"""Tests for the sweep harness and CSV emission."""

import json
import math

import numpy as np
import pandas as pd
import pytest

from src import sweep
from src.config import PredictorMode, apply_overrides, build_config, config_fingerprint, quick_profile
from src.dataset import generate_dataset
from src.exceptions import CheckpointNotFoundError, DomainError, TrainingDivergenceError
from src.sweep import CSV_COLUMNS, SweepCell, SweepResult, emit_csv, run_sweep, train_models


def _cell(estimator, mode, ssnr_db, value=0.1):
    return SweepCell(estimator, mode, ssnr_db, value, value, value, 2, 7)


class TestEmitCsv:

    def test_header_and_row_count(self, tmp_path):
        cells = [_cell(e, "interpolation", s) for e in ("LS", "LSMMSE") for s in (0.0, 5.0, 10.0, 15.0, 20.0)]
        path = emit_csv(SweepResult(cells, "abc"), tmp_path / "out.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 11

    def test_stable_ordering(self, tmp_path):
        cells = [
            _cell("LSMMSE", "open_loop", 10.0),
            _cell("LS", "open_loop", 5.0),
            _cell("LS", "closed_loop", 10.0),
            _cell("LS", "closed_loop", 0.0),
        ]
        frame = pd.read_csv(emit_csv(SweepResult(cells, "abc"), tmp_path / "out.csv"))
        keys = list(zip(frame["estimator"], frame["mode"], frame["ssnr_db"]))
        assert keys == [
            ("LS", "closed_loop", 0.0),
            ("LS", "closed_loop", 10.0),
            ("LS", "open_loop", 5.0),
            ("LSMMSE", "open_loop", 10.0),
        ]

    def test_db_column(self, tmp_path):
        frame = pd.read_csv(emit_csv(SweepResult([_cell("LS", "interpolation", 0.0, 0.01)], "x"), tmp_path / "o.csv"))
        assert frame["nmse_avg_db"][0] == pytest.approx(10 * math.log10(0.01))

    def test_re_emit_is_identical(self, tmp_path):
        result = SweepResult([_cell("LS", "interpolation", s, 0.1 + s) for s in (0.0, 5.0)], "x")
        a = emit_csv(result, tmp_path / "a.csv").read_bytes()
        b = emit_csv(result, tmp_path / "b.csv").read_bytes()
        assert a == b

    def test_failed_cells_written_as_nan(self, tmp_path):
        nan = float("nan")
        result = SweepResult([SweepCell("LS", "open_loop", 0.0, nan, nan, nan, 0, 7)], "x")
        text = emit_csv(result, tmp_path / "o.csv").read_text()
        assert "nan" in text.splitlines()[1]

    def test_empty_result(self, tmp_path):
        with pytest.raises(DomainError, match="empty"):
            emit_csv(SweepResult([], "x"), tmp_path / "o.csv")


class TestRunSweep:

    def test_every_cell_once(self, tiny_config):
        config = apply_overrides(tiny_config, modes=["interpolation", "open_loop", "closed_loop"])
        result = run_sweep(config)
        keys = [(c.estimator, c.mode, c.ssnr_db) for c in result.cells]
        assert len(keys) == len(set(keys)) == 2 * 3 * 2
        assert all(c.n_realizations == 2 for c in result.cells)
        assert all(np.isfinite(c.nmse_avg) for c in result.cells)
        assert result.config_fingerprint == config_fingerprint(config)

    def test_outputs_written(self, tiny_config):
        config = apply_overrides(tiny_config, modes=["interpolation", "open_loop"])
        run_sweep(config)
        out = config.output_dir
        frame = pd.read_csv(out / "results.csv")
        assert list(frame.columns) == CSV_COLUMNS
        assert len(frame) == 2 * 2 * 2
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["config_fingerprint"] == config_fingerprint(config)
        assert "numpy" in manifest["packages"]
        assert (out / "models" / "lstm_LS_0dB.joblib").exists()

    def test_deterministic_csv(self, tiny_config, tmp_path):
        a = apply_overrides(tiny_config, output_dir=tmp_path / "a", modes=["interpolation", "closed_loop"])
        b = apply_overrides(tiny_config, output_dir=tmp_path / "b", modes=["interpolation", "closed_loop"])
        run_sweep(a)
        run_sweep(b)
        assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()

    def test_interpolation_only_skips_training(self, tiny_config):
        run_sweep(apply_overrides(tiny_config, modes=["interpolation"]))
        assert not (tiny_config.output_dir / "models").exists()

    def test_adaptive_mode(self, tiny_config):
        result = run_sweep(apply_overrides(tiny_config, modes=["open_loop", "closed_loop", "adaptive"]))
        for ssnr_db in tiny_config.ssnr_sweep_db:
            assert result.cell("LSMMSE", "adaptive", ssnr_db).nmse_avg == result.cell("LSMMSE", "open_loop", ssnr_db).nmse_avg
            assert result.cell("LS", "adaptive", ssnr_db).nmse_avg == result.cell("LS", "closed_loop", ssnr_db).nmse_avg

    def test_load_only_without_checkpoint(self, tiny_config):
        config = build_config({**tiny_config.model_dump(mode="json"), "load_only": True})
        with pytest.raises(CheckpointNotFoundError):
            run_sweep(config)

    def test_load_only_reuses_trained_models(self, tiny_config):
        config = apply_overrides(tiny_config, modes=["open_loop"])
        trained = run_sweep(config)
        loaded = run_sweep(build_config({**config.model_dump(mode="json"), "load_only": True}))
        for cell in trained.cells:
            assert loaded.cell(cell.estimator, cell.mode, cell.ssnr_db).nmse_avg == cell.nmse_avg

    def test_divergence_becomes_failed_cell(self, tiny_config, monkeypatch):
        def diverge(*args, **kwargs):
            raise TrainingDivergenceError(0, 0, 1e-3, 0.5, float("nan"))

        monkeypatch.setattr(sweep, "train", diverge)
        result = run_sweep(apply_overrides(tiny_config, modes=["interpolation", "open_loop"]))
        assert all(math.isnan(c.nmse_avg) for c in result.cells if c.mode == "open_loop")
        assert all(np.isfinite(c.nmse_avg) for c in result.cells if c.mode == "interpolation")
        frame = pd.read_csv(tiny_config.output_dir / "results.csv")
        assert frame["nmse_avg"].isna().sum() == 4

    def test_per_subcarrier_models(self, tiny_config):
        data = tiny_config.model_dump(mode="json")
        data["training"]["shared_weights"] = False
        data["predictor_modes"] = ["open_loop"]
        data["ssnr_sweep_db"] = [20.0]
        result = run_sweep(build_config(data))
        assert all(np.isfinite(c.nmse_avg) for c in result.cells)
        assert (tiny_config.output_dir / "models" / "lstm_LS_20dB_k007.joblib").exists()

    def test_reuses_existing_dataset(self, tiny_config):
        dataset = generate_dataset(tiny_config)
        result = run_sweep(apply_overrides(tiny_config, modes=["interpolation"]), dataset=dataset)
        assert len(result.cells) == 4


class TestTrainModels:

    def test_one_checkpoint_per_estimator_and_ssnr(self, tiny_config):
        paths = train_models(tiny_config)
        assert set(paths) == {(m, s) for m in ("LS", "LSMMSE") for s in (0.0, 20.0)}
        assert all(p.exists() for p in paths.values())


@pytest.mark.slow
class TestQuickProfile:

    def test_quick_sweep_is_reproducible(self, tmp_path):
        runs = []
        for name in ("a", "b"):
            config = quick_profile(seed=7, output_dir=str(tmp_path / name))
            run_sweep(config)
            runs.append((tmp_path / name / "results.csv").read_bytes())
        assert runs[0] == runs[1]

    def test_modes_cover_requested_set(self, tmp_path):
        config = quick_profile(
            seed=7,
            output_dir=str(tmp_path),
            predictor_modes=[m.value for m in PredictorMode],
            ssnr_sweep_db=[0.0, 40.0],
        )
        result = run_sweep(config)
        assert len(result.cells) == 2 * len(PredictorMode) * 2


@pytest.fixture(scope="class")
def quick_result(tmp_path_factory):
    config = quick_profile(
        seed=7,
        n_realizations=20,
        ssnr_sweep_db=[0.0, 10.0, 30.0],
        predictor_modes=["interpolation", "open_loop", "closed_loop"],
        output_dir=str(tmp_path_factory.mktemp("quick20")),
    )
    return run_sweep(config)


@pytest.mark.slow
class TestQuickProfileOrderings:

    def _db(self, result, estimator, mode, ssnr_db):
        return result.cell(estimator, mode, ssnr_db).nmse_avg_db

    def test_lsmmse_estimates_beat_ls_at_low_ssnr(self, quick_result):
        assert self._db(quick_result, "LSMMSE", "interpolation", 0.0) < self._db(quick_result, "LS", "interpolation", 0.0)

    def test_estimators_agree_at_high_ssnr(self, quick_result):
        gap = self._db(quick_result, "LS", "interpolation", 30.0) - self._db(quick_result, "LSMMSE", "interpolation", 30.0)
        assert abs(gap) < 1.0

    @pytest.mark.parametrize("ssnr_db", [0.0, 10.0, 30.0])
    def test_lsmmse_open_loop_beats_interpolation(self, quick_result, ssnr_db):
        assert self._db(quick_result, "LSMMSE", "open_loop", ssnr_db) < self._db(quick_result, "LSMMSE", "interpolation", ssnr_db)

    @pytest.mark.parametrize("ssnr_db", [0.0, 10.0])
    def test_ls_closed_loop_beats_interpolation(self, quick_result, ssnr_db):
        assert self._db(quick_result, "LS", "closed_loop", ssnr_db) < self._db(quick_result, "LS", "interpolation", ssnr_db)

    @pytest.mark.parametrize("ssnr_db", [0.0, 10.0])
    def test_ls_closed_loop_beats_open_loop(self, quick_result, ssnr_db):
        assert self._db(quick_result, "LS", "closed_loop", ssnr_db) < self._db(quick_result, "LS", "open_loop", ssnr_db)
