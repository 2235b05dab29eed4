import json
import subprocess
import sys
from datetime import date, datetime
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from suncast.cli import main
from suncast.synth import SynthParams, generate


def run_cli(*argv) -> int:
    return main(list(argv))


def base_config(root: Path, name: str = "cfg.json", **overrides) -> Path:
    cfg = {
        "seed": 11,
        "out": str(root / "artifacts"),
        "data": {
            "meteo": str(root / "artifacts/data/meteo.csv"),
            "asg": str(root / "artifacts/data/asg.csv"),
            "capacity": str(root / "artifacts/data/capacity.csv"),
            "grid": str(root / "artifacts/data/grid.csv"),
        },
        "grids": [{"label": "k2", "mode": "clustered", "k": 2}],
        "feature_sets": ["a"],
        "methods": ["LR", "RT"],
        "windows": {
            "validation_train_days": 20,
            "validation_slice_days": 5,
            "validation_slices": 3,
            "test_train_span_days": 40,
            "retrain_cadence_days": 3,
        },
        "tuning": {"n_candidates": 2},
        "ensemble": {"n_trees": 6},
        "mcs": {"n_bootstrap": 100, "block_length": 12},
        "synth": {"months": 3, "cells": 3, "noise": 0.03},  # 90-day fixture
    }
    cfg.update(overrides)
    root.mkdir(parents=True, exist_ok=True)
    path = root / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Config with synth/cluster/prepare already run."""
    root = tmp_path_factory.mktemp("cli")
    cfg = base_config(root)
    assert run_cli("synth", "--config", str(cfg)) == 0
    assert run_cli("cluster", "--config", str(cfg)) == 0
    assert run_cli("prepare", "--config", str(cfg)) == 0
    return root, cfg


class TestSynth:
    def test_reproducible_csvs(self, tmp_path):
        a = generate(SynthParams(months=1, n_cells=2, seed=5), tmp_path / "a")
        b = generate(SynthParams(months=1, n_cells=2, seed=5), tmp_path / "b")
        assert a["n_hours"] == b["n_hours"]
        for name in ("meteo.csv", "asg.csv", "capacity.csv", "grid.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_cloudless_zero_noise_deterministic_in_zenith(self, tmp_path):
        from suncast.dataset import interpolate_capacity
        from suncast.solarpos import GeoCoordinate, solar_position

        generate(SynthParams(months=1, n_cells=2, seed=2, noise=0.0, cloudless=True), tmp_path)
        truth = json.loads((tmp_path / "truth.json").read_text())
        ref = GeoCoordinate(truth["reference"]["lon"], truth["reference"]["lat"])
        asg = pd.read_csv(tmp_path / "asg.csv")
        cap_rows = pd.read_csv(tmp_path / "capacity.csv")
        idx = pd.DatetimeIndex(pd.to_datetime(asg["timestamp"], utc=True))
        cap = interpolate_capacity(
            [(pd.Timestamp(t), v) for t, v in zip(cap_rows["timestamp"], cap_rows["ic_mw"])],
            idx,
        )
        lf = asg["asg_mw"].to_numpy() / cap.series.to_numpy()
        zen = np.array(
            [solar_position(datetime.fromisoformat(t), ref).zenith for t in asg["timestamp"]]
        )
        # cloudless + zero noise: RH sits at its base, damping is constant
        damp = 1.0 - truth["rh_coef"] * truth["rh_base"] / 100.0
        cs = np.maximum(0, np.cos(np.radians(zen))) ** 1.15
        expected = np.clip(cs ** truth["curve"] * damp, 0, 1)
        np.testing.assert_allclose(lf, expected, atol=1e-6)

    def test_tcc_negatively_correlated_with_asg(self, tmp_path):
        generate(SynthParams(months=3, n_cells=3, seed=9), tmp_path)
        asg = pd.read_csv(tmp_path / "asg.csv").set_index("timestamp")
        met = pd.read_csv(tmp_path / "meteo.csv")
        tcc = met[met["variable"] == "TCC"].groupby("timestamp")["value"].mean()
        joined = asg.join(tcc.rename("tcc"))
        daylight = joined[joined["asg_mw"] > 0]
        assert daylight["asg_mw"].corr(daylight["tcc"]) < 0

    def test_truth_records_decoys(self, tmp_path):
        generate(SynthParams(months=1, n_cells=2, seed=3), tmp_path)
        truth = json.loads((tmp_path / "truth.json").read_text())
        assert truth["driver"] == "SNR"
        assert set(truth["decoys"]) == {"T2m", "WCI"}


class TestClusterPrepare:
    def test_cluster_artifact(self, pipeline):
        root, cfg = pipeline
        sel = json.loads((root / "artifacts/cluster/k2.json").read_text())
        assert sel["mode"] == "clustered"
        assert sel["k"] == 2
        assert len(sel["representatives"]) == 2
        assert len(sel["assignment"]) == 3

    def test_prepare_column_count_set_a(self, pipeline):
        root, _ = pipeline
        frame = pd.read_csv(root / "artifacts/prepared/a-k2.csv")
        meta = {"timestamp", "local_date", "local_hour", "asg_mw", "ic_mw", "load_factor"}
        feature_cols = [c for c in frame.columns if c not in meta]
        assert len(feature_cols) == 2 * 1 + 2

    def test_prepare_b_k12_has_74_columns(self, tmp_path):
        cfg = base_config(
            tmp_path,
            grids=[{"label": "k12", "mode": "clustered", "k": 12}],
            feature_sets=["b"],
            synth={"months": 1, "cells": 13, "noise": 0.03},
        )
        assert run_cli("synth", "--config", str(cfg)) == 0
        assert run_cli("cluster", "--config", str(cfg)) == 0
        assert run_cli("prepare", "--config", str(cfg)) == 0
        frame = pd.read_csv(tmp_path / "artifacts/prepared/b-k12.csv")
        meta = {"timestamp", "local_date", "local_hour", "asg_mw", "ic_mw", "load_factor"}
        assert len([c for c in frame.columns if c not in meta]) == 12 * 6 + 2

    def test_prepare_rerun_byte_identical(self, pipeline):
        root, cfg = pipeline
        path = root / "artifacts/prepared/a-k2.csv"
        before = path.read_bytes()
        assert run_cli("prepare", "--config", str(cfg)) == 0
        assert path.read_bytes() == before

    def test_average_mode_artifact(self, tmp_path):
        cfg = base_config(
            tmp_path,
            grids=[{"label": "average", "mode": "average"}],
            synth={"months": 1, "cells": 2, "noise": 0.03},
        )
        assert run_cli("synth", "--config", str(cfg)) == 0
        assert run_cli("cluster", "--config", str(cfg)) == 0
        sel = json.loads((tmp_path / "artifacts/cluster/average.json").read_text())
        assert sel["mode"] == "average"
        assert sel["representatives"] == []

    def test_missing_grid_file_exit_2(self, tmp_path):
        cfg = base_config(tmp_path)
        # no synth run: data files absent
        assert run_cli("cluster", "--config", str(cfg)) == 2

    def test_malformed_meteo_exit_2(self, pipeline, tmp_path, capsys):
        root, _ = pipeline
        bad_dir = tmp_path / "bad"
        bad_dir.mkdir()
        meteo = (root / "artifacts/data/meteo.csv").read_text().splitlines()
        rh_line = next(i for i, l in enumerate(meteo) if ",RH," in l)
        meteo[rh_line] = meteo[rh_line].rsplit(",", 1)[0] + ",135.0"
        (bad_dir / "meteo.csv").write_text("\n".join(meteo) + "\n")
        cfg = base_config(
            tmp_path,
            name="bad_cfg.json",
            data={
                "meteo": str(bad_dir / "meteo.csv"),
                "asg": str(root / "artifacts/data/asg.csv"),
                "capacity": str(root / "artifacts/data/capacity.csv"),
                "grid": str(root / "artifacts/data/grid.csv"),
            },
        )
        code = run_cli("prepare", "--config", str(cfg))
        captured = capsys.readouterr()
        assert code == 2
        assert "row" in captured.err and "RH" in captured.err

    def test_missing_config_flag(self, capsys, monkeypatch):
        monkeypatch.delenv("SUNCAST_CONFIG", raising=False)
        with pytest.raises(SystemExit):
            main(["cluster"])

    def test_env_var_config(self, pipeline, monkeypatch):
        root, cfg = pipeline
        monkeypatch.setenv("SUNCAST_CONFIG", str(cfg))
        assert run_cli("cluster") == 0


@pytest.fixture(scope="module")
def full_run(pipeline):
    root, cfg = pipeline
    assert run_cli("tune", "--config", str(cfg)) == 0
    assert run_cli("backtest", "--config", str(cfg)) == 0
    assert run_cli("evaluate", "--config", str(cfg)) == 0
    return root, cfg


class TestTuneBacktestEvaluateExplain:
    def test_tuned_artifact(self, full_run):
        root, _ = full_run
        tuned = json.loads((root / "artifacts/tuned/RT-a-k2.json").read_text())
        assert set(tuned["best_params"]) == {"alpha", "max_depth", "min_n"}
        assert len(tuned["rmse_per_candidate"]) == 2

    def test_backtest_csv_schema(self, full_run):
        root, _ = full_run
        frame = pd.read_csv(root / "artifacts/backtest/RT-a-k2.csv")
        assert list(frame.columns) == ["date", "hour", "actual_mw", "forecast_mw", "config_id"]
        assert (frame.groupby("date").size() == 24).all()

    def test_backtest_rerun_byte_identical(self, full_run):
        root, cfg = full_run
        path = root / "artifacts/backtest/RT-a-k2.csv"
        before = path.read_bytes()
        assert run_cli("backtest", "--config", str(cfg), "--configuration", "RT-a-k2") == 0
        assert path.read_bytes() == before

    def test_summary_contains_mcs_flags(self, full_run):
        root, _ = full_run
        summary = pd.read_csv(root / "artifacts/evaluate/summary.csv")
        assert {"mcs99_squared", "mcs90_squared", "mcs99_absolute", "mcs90_smape"} <= set(
            summary.columns
        )
        assert len(summary) == 2

    def test_identical_results_both_in_mcs(self, full_run, tmp_path):
        root, _ = full_run
        src = pd.read_csv(root / "artifacts/backtest/RT-a-k2.csv")
        twin = src.copy()
        twin["config_id"] = "RT-a-twin"
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        src.to_csv(a, index=False)
        twin.to_csv(b, index=False)
        out_cfg = base_config(tmp_path / "eval", out=str(tmp_path / "eval_out"))
        code = run_cli(
            "evaluate", "--config", str(out_cfg), "--results", str(a), str(b)
        )
        assert code == 0
        summary = pd.read_csv(tmp_path / "eval_out/evaluate/summary.csv")
        for col in ("mcs99_squared", "mcs90_squared", "mcs99_absolute", "mcs90_absolute"):
            assert summary[col].all()

    def test_explain_pipeline_mode(self, full_run):
        root, cfg = full_run
        assert run_cli("explain", "--config", str(cfg), "--configuration", "RT-a-k2") == 0
        fi = pd.read_csv(root / "artifacts/explain/RT-a-k2.feature_importance.csv")
        assert set(fi["feature"]) == {"SNR", "zenith", "azimuth"}

    def test_explain_lr_model_direct(self, full_run):
        root, cfg = full_run
        code = run_cli(
            "explain", "--config", str(cfg),
            "--model", str(root / "artifacts/models/LR-a-k2.json"),
            "--features", str(root / "artifacts/prepared/a-k2.csv"),
        )
        assert code == 0
        rows = pd.read_csv(root / "artifacts/explain/LR-a-k2.attributions.csv")
        model = json.loads((root / "artifacts/models/LR-a-k2.json").read_text())
        prepared = pd.read_csv(root / "artifacts/prepared/a-k2.csv")
        name = model["feature_names"][0]
        expected = model["coef"][0] * (prepared[name] - model["feature_means"][0])
        np.testing.assert_allclose(rows[name].to_numpy(), expected.to_numpy(), atol=1e-9)

    def test_missing_upstream_artifact_exit_2(self, tmp_path):
        cfg = base_config(tmp_path, out=str(tmp_path / "fresh_out"))
        assert run_cli("evaluate", "--config", str(cfg)) == 2

    def test_console_script_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "suncast.cli", "synth"],
            capture_output=True, text=True, env={"PATH": "/usr/bin:/bin", "SUNCAST_CONFIG": ""},
        )
        assert proc.returncode == 2
