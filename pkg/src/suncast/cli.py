"""Batch command line: synth, cluster, prepare, tune, backtest, evaluate, explain.

Every stage reads one JSON configuration (``--config`` or the
``SUNCAST_CONFIG`` environment variable), writes its artifacts under the
output directory, and drops a ``manifest.json`` with the config hash,
seeds, package version and wall-clock timings.  Exit codes: 0 success,
1 computation failure, 2 configuration/input failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import date
from pathlib import Path

import pandas as pd

from . import __version__
from .config import RunConfig
from .dataset import (
    FeatureSetSpec,
    assemble_features,
    attach_load_factor,
    interpolate_capacity,
    load_capacity_anchors,
    load_grid,
    load_observations,
    read_prepared_csv,
    write_prepared_csv,
)
from .ensemble import EnsembleModel
from .errors import SuncastError, ValidationError
from .geocluster import GridSelection, average_selection, kmeans_haversine
from .harness import (
    ModelConfiguration,
    ModelingData,
    backtest,
    latin_hypercube,
    make_model_factory,
    plan_windows,
    tune,
)
from .metrics import aggregate_metrics, cumulative_metrics, daily_metrics, loss_series, model_confidence_set
from .shapexplain import aggregate_views, monthly_schedule, tree_shap
from .solarpos import reference_coordinate
from .synth import SynthParams, generate

log = logging.getLogger("suncast")


def _write_manifest(cfg: RunConfig, stage_dir: Path, command: str, outputs, timings):
    manifest = {
        "command": command,
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "workers": cfg.workers,
        "outputs": sorted(str(o) for o in outputs),
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    (stage_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _stage_dir(cfg: RunConfig, name: str) -> Path:
    d = cfg.out / name
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- stage implementations ----------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> int:
    t0 = time.time()
    out = _stage_dir(cfg, "data")
    s = cfg.synth
    params = SynthParams(
        start=date.fromisoformat(s.get("start", "2021-01-01")),
        months=int(s.get("months", 18)),
        n_cells=int(s.get("cells", 5)),
        seed=int(s.get("seed", cfg.seed)),
        noise=float(s.get("noise", 0.04)),
        curve=float(s.get("curve", 2.0)),
        capacity_start_mw=float(s.get("capacity_start_mw", 3400.0)),
        capacity_end_mw=float(s.get("capacity_end_mw", 7600.0)),
        utc_offset_hours=int(s.get("utc_offset_hours", 1)),
        cloudless=bool(s.get("cloudless", False)),
    )
    info = generate(params, out)
    log.info("synthetic dataset: %s hours, %s cells -> %s", info["n_hours"], info["n_cells"], out)
    _write_manifest(cfg, out, "synth", [out / f for f in info["files"]], {"total": time.time() - t0})
    return 0


def _load_table(cfg: RunConfig):
    cfg.require_data_paths()
    table = load_observations(cfg.data["meteo"], cfg.data["asg"])
    grid = load_grid(cfg.data["grid"])
    anchors = load_capacity_anchors(cfg.data["capacity"])
    cap = interpolate_capacity(anchors, table.frame.index)
    return attach_load_factor(table, cap), grid


def _selection_for(cfg: RunConfig, grid, spec: dict) -> GridSelection:
    if spec["mode"] == "average":
        return average_selection(grid)
    return kmeans_haversine(grid, k=int(spec["k"]), seed=cfg.seed, restarts=cfg.cluster_restarts)


def cmd_cluster(cfg: RunConfig, args) -> int:
    t0 = time.time()
    cfg.require_data_paths(("grid",))
    grid = load_grid(cfg.data["grid"])
    out = _stage_dir(cfg, "cluster")
    outputs = []
    for spec in cfg.grids:
        sel = _selection_for(cfg, grid, spec)
        path = out / f"{spec['label']}.json"
        path.write_text(json.dumps(sel.to_dict(), indent=2) + "\n")
        outputs.append(path)
        log.info("grid %s: %s", spec["label"], "average" if sel.mode == "average" else f"k={sel.k}")
    _write_manifest(cfg, out, "cluster", outputs, {"total": time.time() - t0})
    return 0


def cmd_prepare(cfg: RunConfig, args) -> int:
    t0 = time.time()
    table, grid = _load_table(cfg)
    refloc = reference_coordinate(grid.coordinates)
    out = _stage_dir(cfg, "prepared")
    outputs = []
    for gspec in cfg.grids:
        sel = _selection_for(cfg, grid, gspec)
        for fs in cfg.feature_sets:
            feats, target = assemble_features(
                table, sel, FeatureSetSpec(fs), refloc, angle_time=cfg.angle_time
            )
            path = out / f"{fs}-{gspec['label']}.csv"
            write_prepared_csv(
                path,
                feats,
                target,
                table.frame["asg_mw"].to_numpy(),
                table.frame["ic_mw"].to_numpy(),
            )
            outputs.append(path)
            log.info("prepared %s: %d rows x %d features", path.name, len(feats), feats.n_features)
    _write_manifest(cfg, out, "prepare", outputs, {"total": time.time() - t0})
    return 0


def _modeling_data(cfg: RunConfig, config: ModelConfiguration) -> ModelingData:
    path = cfg.out / "prepared" / f"{config.feature_set}-{config.grid}.csv"
    if not path.exists():
        raise ValidationError(f"prepared artifact missing: {path} (run `suncast prepare`)")
    features, target, asg, ic = read_prepared_csv(path)
    return ModelingData(
        features=features,
        target=target,
        asg_mw=asg,
        ic_mw=ic,
        outlier_days=frozenset(cfg.outlier_days),
    )


def _select_configs(cfg: RunConfig, args, tunable_only=False) -> list[ModelConfiguration]:
    configs = cfg.configurations()
    if getattr(args, "configuration", None):
        wanted = set(args.configuration)
        configs = [c for c in configs if c.config_id in wanted]
        missing = wanted - {c.config_id for c in configs}
        if missing:
            raise ValidationError(f"unknown configuration id(s): {', '.join(sorted(missing))}")
    if tunable_only:
        configs = [c for c in configs if c.method != "LR"]
    return configs


def cmd_tune(cfg: RunConfig, args) -> int:
    t0 = time.time()
    out = _stage_dir(cfg, "tuned")
    outputs = []
    timings = {}
    for config in _select_configs(cfg, args, tunable_only=True):
        t1 = time.time()
        data = _modeling_data(cfg, config)
        plan = plan_windows(data.timeline_dates(), "validation", cfg.windows)
        ranges = cfg.ranges_for(config.method, data.features.n_features)
        candidates = latin_hypercube(
            ranges, n=cfg.n_candidates, seed=cfg.seed, method=config.method
        )
        result = tune(
            config, data, plan, candidates,
            n_trees=cfg.n_trees, lam=cfg.lam, seed=cfg.seed, workers=cfg.workers,
        )
        path = out / f"{config.config_id}.json"
        path.write_text(
            json.dumps(
                {
                    "config_id": config.config_id,
                    "best_params": result.best.params,
                    "best_rmse_mw": result.best_rmse,
                    "rmse_per_candidate": result.rmse_per_candidate,
                    "failed_candidates": result.failures,
                    "n_candidates": cfg.n_candidates,
                    "seed": cfg.seed,
                },
                indent=2,
                allow_nan=True,
            )
            + "\n"
        )
        outputs.append(path)
        timings[config.config_id] = time.time() - t1
        log.info("tuned %s: rmse=%.2f MW %s", config.config_id, result.best_rmse, result.best.params)
    timings["total"] = time.time() - t0
    _write_manifest(cfg, out, "tune", outputs, timings)
    return 0


def _tuned_params(cfg: RunConfig, config: ModelConfiguration) -> dict | None:
    if config.method == "LR":
        return None
    path = cfg.out / "tuned" / f"{config.config_id}.json"
    if path.exists():
        return json.loads(path.read_text())["best_params"]
    return {}  # method defaults


def cmd_backtest(cfg: RunConfig, args) -> int:
    t0 = time.time()
    out = _stage_dir(cfg, "backtest")
    models_dir = _stage_dir(cfg, "models")
    outputs = []
    timings = {}
    for config in _select_configs(cfg, args):
        t1 = time.time()
        data = _modeling_data(cfg, config)
        plan = plan_windows(data.timeline_dates(), "test", cfg.windows)
        params = _tuned_params(cfg, config)
        result = backtest(
            config, params, data, plan,
            n_trees=cfg.n_trees, lam=cfg.lam, seed=cfg.seed,
            cadence=cfg.windows.retrain_cadence_days, workers=cfg.workers,
        )
        path = out / f"{config.config_id}.csv"
        result.to_csv_frame().to_csv(path, index=False)
        meta_path = out / f"{config.config_id}.meta.json"
        meta_path.write_text(
            json.dumps(
                {
                    "config_id": config.config_id,
                    "tuned_params": result.tuned_params,
                    "skipped": [[d.isoformat(), r] for d, r in result.skipped],
                    **result.meta,
                },
                indent=2,
            )
            + "\n"
        )
        # final retrained model, serialized for audit and `explain --model`
        factory = make_model_factory(
            config, params, data, plan, n_trees=cfg.n_trees, lam=cfg.lam, seed=cfg.seed
        )
        model = factory(plan.slices[-1].forecast_day)
        model.feature_names = [str(n) for n in data.features.names]
        (models_dir / f"{config.config_id}.json").write_text(
            json.dumps(model.to_dict()) + "\n"
        )
        outputs += [path, meta_path]
        timings[config.config_id] = time.time() - t1
        log.info("backtested %s: %d days (%.1fs)", config.config_id,
                 result.frame["date"].nunique(), timings[config.config_id])
    timings["total"] = time.time() - t0
    _write_manifest(cfg, out, "backtest", outputs, timings)
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    t0 = time.time()
    bt_dir = cfg.out / "backtest"
    paths = sorted(bt_dir.glob("*.csv")) if bt_dir.exists() else []
    if getattr(args, "results", None):
        paths = [Path(p) for p in args.results]
    if not paths:
        raise ValidationError(f"no backtest CSVs found under {bt_dir} (run `suncast backtest`)")
    frames = {}
    for p in paths:
        frame = pd.read_csv(p)
        required = {"date", "hour", "actual_mw", "forecast_mw", "config_id"}
        if not required <= set(frame.columns):
            raise ValidationError(f"{p}: backtest CSV lacks columns {sorted(required)}")
        for cid, grp in frame.groupby("config_id"):
            frames[cid] = grp.sort_values(["date", "hour"]).reset_index(drop=True)

    reference = next(iter(frames.values()))[["date", "hour"]]
    for cid, grp in frames.items():
        if not grp[["date", "hour"]].equals(reference):
            raise ValidationError(f"configuration {cid} is not aligned with the others")

    out = _stage_dir(cfg, "evaluate")
    summary_rows = []
    losses = {kind: {} for kind in ("squared", "absolute", "smape")}
    daily_all, cum_all = [], []
    for cid, grp in sorted(frames.items()):
        actual = grp["actual_mw"].to_numpy()
        forecast = grp["forecast_mw"].to_numpy()
        m = aggregate_metrics(actual, forecast)
        ls = loss_series(actual, forecast)
        for kind in losses:
            losses[kind][cid] = ls[kind].to_numpy()
        parts = cid.split("-")
        summary_rows.append(
            {
                "config_id": cid,
                "method": parts[0] if len(parts) == 3 else "",
                "feature_set": parts[1] if len(parts) == 3 else "",
                "grid": parts[2] if len(parts) == 3 else "",
                "rmse_mw": m.rmse,
                "mae_mw": m.mae,
                "smape": m.smape,
            }
        )
        daily = daily_metrics(grp)
        daily.insert(0, "config_id", cid)
        daily_all.append(daily)
        cum = cumulative_metrics(daily)
        cum.insert(0, "config_id", cid)
        cum_all.append(cum)

    summary = pd.DataFrame(summary_rows)
    levels = tuple(cfg.mcs.get("levels", [0.99, 0.90]))
    if len(frames) >= 2:
        for kind in ("squared", "absolute", "smape"):
            res = model_confidence_set(
                losses[kind],
                levels=levels,
                n_bootstrap=int(cfg.mcs.get("n_bootstrap", 1000)),
                block_length=int(cfg.mcs.get("block_length", 24)),
                seed=cfg.seed,
            )
            for level in levels:
                col = f"mcs{int(level * 100)}_{kind}"
                members = res.members_at(level)
                summary[col] = summary["config_id"].isin(members)
            summary[f"mcs_pvalue_{kind}"] = summary["config_id"].map(res.pvalues)

    summary_path = out / "summary.csv"
    summary.to_csv(summary_path, index=False)
    daily_path = out / "daily.csv"
    pd.concat(daily_all, ignore_index=True).to_csv(daily_path, index=False)
    cum_path = out / "cumulative.csv"
    pd.concat(cum_all, ignore_index=True).to_csv(cum_path, index=False)
    _write_manifest(cfg, out, "evaluate", [summary_path, daily_path, cum_path],
                    {"total": time.time() - t0})
    log.info("evaluated %d configurations -> %s", len(frames), summary_path)
    return 0


def _explain_outputs(out: Path, report, tag: str):
    loc, feat, heat = aggregate_views(report)
    loc_path = out / f"{tag}location_importance.csv"
    feat_path = out / f"{tag}feature_importance.csv"
    heat_path = out / f"{tag}heatmap.csv"
    loc.rename_axis("location").to_frame().to_csv(loc_path)
    feat.rename_axis("feature").to_frame().to_csv(feat_path)
    heat.rename_axis("variable").to_csv(heat_path)
    return [loc_path, feat_path, heat_path]


def _rows_csv(path: Path, report):
    chunks = []
    for label, matrix in zip(report.months, report.matrices):
        frame = pd.DataFrame(matrix.values, columns=[str(n) for n in matrix.names])
        frame.insert(0, "month", label)
        if matrix.index is not None:
            frame.insert(0, "timestamp", [t.isoformat() for t in matrix.index])
        frame["base_value"] = matrix.base_value
        chunks.append(frame)
    pd.concat(chunks, ignore_index=True).to_csv(path, index=False)


def cmd_explain(cfg: RunConfig, args) -> int:
    t0 = time.time()
    out = _stage_dir(cfg, "explain")
    from .shapexplain import ShapReport

    if getattr(args, "model", None):
        model_path = Path(args.model)
        feats_path = Path(args.features) if args.features else None
        if feats_path is None:
            raise ValidationError("explain --model also needs --features")
        if not model_path.exists():
            raise ValidationError(f"model file not found: {model_path}")
        model = EnsembleModel.from_dict(json.loads(model_path.read_text()))
        features, *_ = read_prepared_csv(feats_path)
        matrix = tree_shap(model, features)
        report = ShapReport(months=["all"], matrices=[matrix], names=matrix.names)
        tag = f"{model_path.stem}."
    else:
        ids = getattr(args, "configuration", None)
        if not ids or len(ids) != 1:
            raise ValidationError("explain needs --model or exactly one --configuration id")
        config = ModelConfiguration(*ids[0].split("-"))
        data = _modeling_data(cfg, config)
        plan = plan_windows(data.timeline_dates(), "test", cfg.windows)
        params = _tuned_params(cfg, config)
        factory = make_model_factory(
            config, params, data, plan, n_trees=cfg.n_trees, lam=cfg.lam, seed=cfg.seed
        )
        report = monthly_schedule(factory, data.features, plan, hours=cfg.shap_hours)
        tag = f"{config.config_id}."

    outputs = _explain_outputs(out, report, tag)
    rows_path = out / f"{tag}attributions.csv"
    _rows_csv(rows_path, report)
    outputs.append(rows_path)
    _write_manifest(cfg, out, "explain", outputs, {"total": time.time() - t0})
    log.info("explained -> %s", ", ".join(p.name for p in outputs))
    return 0


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="suncast",
        description="Day-ahead PV power forecasting pipeline (batch stages).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate a synthetic dataset"),
        ("cluster", "reduce the spatial grid (K-means / average)"),
        ("prepare", "assemble feature/target tables"),
        ("tune", "Latin-hypercube hyperparameter search"),
        ("backtest", "rolling day-ahead test backtest"),
        ("evaluate", "metrics table, MCS flags, daily/cumulative series"),
        ("explain", "SHAP attributions and aggregation views"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=os.environ.get("SUNCAST_CONFIG"),
                       help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=None, help="override worker count")
        p.add_argument("--out", default=None, help="override output directory")
        if name in ("tune", "backtest", "evaluate", "explain"):
            p.add_argument("--configuration", nargs="*", default=None,
                           help="restrict to specific configuration ids")
        if name == "evaluate":
            p.add_argument("--results", nargs="*", default=None,
                           help="explicit backtest CSV paths")
        if name == "explain":
            p.add_argument("--model", default=None, help="model JSON for direct attribution")
            p.add_argument("--features", default=None, help="prepared CSV for direct attribution")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "cluster": cmd_cluster,
    "prepare": cmd_prepare,
    "tune": cmd_tune,
    "backtest": cmd_backtest,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        parser.error("--config (or SUNCAST_CONFIG) is required")
    try:
        cfg = RunConfig.load(
            args.config,
            overrides={"seed": args.seed, "workers": args.workers, "out": args.out},
        )
        return COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SuncastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected: computation failure with context
        print(f"internal error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
