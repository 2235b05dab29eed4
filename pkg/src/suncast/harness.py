"""Hyperparameter tuning and rolling-window backtesting.

Validation re-trains on the most recent ``validation_train_days`` and
scores 30-day slices; the test backtest retrains daily (configurable
cadence) on a rolling multi-year window with a one-day gap before the
forecast day, forecasts the daylight hours, clamps negatives, converts
back to MW, and zero-fills the night hours so every test day carries a
complete 24-hour profile.

Hyperparameter candidates come from a Latin hypercube design: each
parameter range is cut into ``n`` equal-width intervals on its declared
scale and every candidate occupies a distinct interval per dimension,
matched by a seeded permutation.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np
import pandas as pd

from .cart import CartParams, fit_tree
from .dataset import DAYLIGHT_HOURS, FeatureMatrix
from .ensemble import (
    BoostParams,
    EnsembleModel,
    ForestParams,
    fit_boosted,
    fit_forest,
    fit_linear,
)
from .errors import ComputationError, PlanningError, ValidationError

METHODS = ("LR", "RT", "RF", "XGBoost")


@dataclass(frozen=True)
class ModelConfiguration:
    """One cell of the comparison matrix: method x feature set x grid."""

    method: str
    feature_set: str
    grid: str  # "average", "k5", "k12", ... (grid label)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")

    @property
    def config_id(self) -> str:
        return f"{self.method}-{self.feature_set}-{self.grid}"


@dataclass(frozen=True)
class ParamRange:
    lo: float
    hi: float
    scale: str = "linear"  # "linear" | "log" | "integer"

    def __post_init__(self):
        if self.lo >= self.hi:
            raise ValidationError(f"empty range [{self.lo}, {self.hi}]")
        if self.scale not in ("linear", "log", "integer"):
            raise ValidationError(f"unknown scale {self.scale!r}")
        if self.scale == "log" and self.lo <= 0:
            raise ValidationError("log scale requires positive bounds")


@dataclass(frozen=True)
class HyperCandidate:
    method: str
    params: dict


def default_ranges(method: str, n_features: int) -> dict[str, ParamRange]:
    """Default tuning ranges per method; override via the run configuration."""
    if method == "RT":
        return {
            "alpha": ParamRange(1e-5, 1e-1, "log"),
            "max_depth": ParamRange(2, 12, "integer"),
            "min_n": ParamRange(2, 40, "integer"),
        }
    if method == "RF":
        return {
            "mtry": ParamRange(1, n_features, "integer"),
            "min_n": ParamRange(2, 40, "integer"),
        }
    if method == "XGBoost":
        return {
            "eta": ParamRange(0.01, 0.3, "log"),
            "max_depth": ParamRange(2, 12, "integer"),
            "min_n": ParamRange(2, 40, "integer"),
            "mtry": ParamRange(1, n_features, "integer"),
            "gamma": ParamRange(0.0, 10.0, "linear"),
            "subsample": ParamRange(0.5, 1.0, "linear"),
        }
    raise ValidationError(f"method {method!r} has no tunable parameters")


def latin_hypercube(
    ranges: dict[str, ParamRange], n: int = 25, seed: int = 0, method: str = ""
) -> list[HyperCandidate]:
    """Space-filling design: one sample per equal-width stratum per dimension."""
    if n < 1:
        raise ValidationError("n must be positive")
    rng = np.random.default_rng(seed)
    columns = {}
    for name, r in ranges.items():
        perm = rng.permutation(n)
        u = rng.uniform(size=n)
        s = (perm + u) / n  # stratified positions in [0, 1)
        if r.scale == "linear":
            vals = r.lo + s * (r.hi - r.lo)
        elif r.scale == "log":
            vals = np.exp(np.log(r.lo) + s * (np.log(r.hi) - np.log(r.lo)))
        else:  # integer: uniform over {lo, ..., hi} with stratified underlying draw
            vals = np.minimum(np.floor(r.lo + s * (r.hi - r.lo + 1)), r.hi).astype(int)
        columns[name] = vals

    def native(v):
        return int(v) if isinstance(v, np.integer) else float(v)

    return [
        HyperCandidate(method=method, params={k: native(v[i]) for k, v in columns.items()})
        for i in range(n)
    ]


# -- window planning ----------------------------------------------------------

@dataclass(frozen=True)
class WindowSlice:
    train_start: date
    train_end: date
    eval_start: date
    eval_end: date

    @property
    def forecast_day(self) -> date:
        return self.eval_start


@dataclass
class WindowPlan:
    mode: str  # "validation" | "test"
    slices: list[WindowSlice]

    def __len__(self) -> int:
        return len(self.slices)


@dataclass
class WindowParams:
    validation_train_days: int = 731
    validation_slice_days: int = 30
    validation_slices: int = 12
    validation_start: date | None = None
    test_train_span_days: int = 1096  # offset from forecast day back to train start
    gap_days: int = 1
    test_start: date | None = None
    retrain_cadence_days: int = 1


def plan_windows(timeline_dates, mode: str, params: WindowParams | None = None) -> WindowPlan:
    """Build the rolling slices over a contiguous daily timeline.

    Test slices cover forecast days from ``test_start`` up to the last day
    that is followed by at least one further timeline day (a day counts as
    realized only once the next one has begun), training on
    ``[day - span, day - 1 - gap]``.
    """
    params = params or WindowParams()
    days = sorted(set(timeline_dates))
    if not days:
        raise PlanningError("empty timeline")
    first, last = days[0], days[-1]
    n_days = (last - first).days + 1

    if mode == "validation":
        train = params.validation_train_days
        slice_days = params.validation_slice_days
        n_slices = params.validation_slices
        needed = train + (n_slices - 1) * slice_days + 1
        if n_days < needed:
            raise PlanningError(
                f"timeline has {n_days} days; validation needs {train} training"
                f" + {n_slices * slice_days} evaluation days"
                f" ({needed} with a truncated final slice)"
            )
        start = params.validation_start or (first + timedelta(days=train))
        if start - timedelta(days=train) < first:
            raise PlanningError(
                f"validation start {start} leaves fewer than {train} training days"
            )
        slices = []
        for i in range(n_slices):
            eval_start = start + timedelta(days=i * slice_days)
            if eval_start > last:
                raise PlanningError(
                    f"validation slice {i + 1} starts {eval_start}, beyond the timeline"
                )
            eval_end = min(eval_start + timedelta(days=slice_days - 1), last)
            slices.append(
                WindowSlice(
                    train_start=eval_start - timedelta(days=train),
                    train_end=eval_start - timedelta(days=1),
                    eval_start=eval_start,
                    eval_end=eval_end,
                )
            )
        return WindowPlan(mode="validation", slices=slices)

    if mode == "test":
        span = params.test_train_span_days
        gap = params.gap_days
        start = params.test_start or (first + timedelta(days=span))
        if start - timedelta(days=span) < first:
            raise PlanningError(
                f"test start {start} leaves fewer than {span} days of history"
            )
        last_forecast = last - timedelta(days=1)
        if start > last_forecast:
            raise PlanningError("timeline too short for any test slice")
        slices = []
        day = start
        while day <= last_forecast:
            slices.append(
                WindowSlice(
                    train_start=day - timedelta(days=span),
                    train_end=day - timedelta(days=1 + gap),
                    eval_start=day,
                    eval_end=day,
                )
            )
            day += timedelta(days=1)
        for s in slices:  # no-leakage invariant
            assert (s.forecast_day - s.train_end).days >= 1 + gap
        return WindowPlan(mode="test", slices=slices)

    raise ValidationError(f"unknown plan mode {mode!r}")


# -- data bundle --------------------------------------------------------------

@dataclass
class ModelingData:
    """Features, target and MW context aligned on one timeline."""

    features: FeatureMatrix
    target: np.ndarray  # load factor
    asg_mw: np.ndarray
    ic_mw: np.ndarray
    outlier_days: frozenset = frozenset()

    def __post_init__(self):
        n = len(self.features)
        for arr in (self.target, self.asg_mw, self.ic_mw):
            if len(arr) != n:
                raise ValidationError("modeling data arrays must align with features")

    @property
    def dates(self) -> np.ndarray:
        return self.features.local_date

    @property
    def hours(self) -> np.ndarray:
        return self.features.local_hour

    def timeline_dates(self):
        return sorted(set(self.dates))


def _train_mask(data: ModelingData, start: date, end: date, hours=DAYLIGHT_HOURS):
    mask = (data.dates >= start) & (data.dates <= end)
    mask &= (data.hours >= hours[0]) & (data.hours <= hours[1])
    if data.outlier_days:
        mask &= ~np.isin(data.dates, list(data.outlier_days))
    return mask


def fit_method(
    method: str,
    X: np.ndarray,
    y: np.ndarray,
    hyperparams: dict | None,
    n_trees: int,
    lam: float,
    seed: int,
) -> EnsembleModel:
    """Fit one method with its hyperparameters; returns a uniform model."""
    hp = hyperparams or {}
    if method == "LR":
        return fit_linear(X, y)
    if method == "RT":
        tree = fit_tree(
            X,
            y,
            CartParams(
                alpha=float(hp.get("alpha", 0.0)),
                max_depth=int(hp.get("max_depth", 30)),
                min_n=int(hp.get("min_n", 5)),
            ),
        )
        return EnsembleModel(
            kind="forest", n_features=X.shape[1], trees=[tree],
            base_score=float(np.mean(y)), params={"method": "RT", **hp},
        )
    if method == "RF":
        return fit_forest(
            X,
            y,
            ForestParams(
                n_trees=n_trees,
                mtry=int(hp.get("mtry", max(1, X.shape[1] // 3))),
                min_n=int(hp.get("min_n", 5)),
                seed=seed,
            ),
        )
    if method == "XGBoost":
        return fit_boosted(
            X,
            y,
            BoostParams(
                n_trees=n_trees,
                eta=float(hp.get("eta", 0.1)),
                gamma=float(hp.get("gamma", 0.0)),
                max_depth=int(hp.get("max_depth", 6)),
                min_n=int(hp.get("min_n", 5)),
                mtry=int(hp["mtry"]) if "mtry" in hp else None,
                subsample=float(hp.get("subsample", 1.0)),
                lam=lam,
                seed=seed,
            ),
        )
    raise ValidationError(f"unknown method {method!r}")


def _derive_seed(base: int, *parts: int) -> int:
    return int(np.random.SeedSequence([base, *parts]).generate_state(1)[0])


# -- tuning -------------------------------------------------------------------

@dataclass
class TuneResult:
    best: HyperCandidate
    best_rmse: float
    rmse_per_candidate: list[float]  # NaN for failed candidates
    failures: list[int] = field(default_factory=list)


def tune(
    config: ModelConfiguration,
    data: ModelingData,
    plan: WindowPlan,
    candidates: list[HyperCandidate],
    n_trees: int = 600,
    lam: float = 1.0,
    seed: int = 0,
    workers: int = 1,
) -> TuneResult:
    """Pooled-RMSE argmin over the candidate list on the validation plan."""
    if config.method == "LR":
        raise ValidationError("LR has no tunable parameters")
    if plan.mode != "validation":
        raise ValidationError("tune expects a validation plan")
    if not candidates:
        raise ValidationError("no candidates supplied")

    tasks = [
        (ci, data, plan, config.method, cand.params, n_trees, lam, seed)
        for ci, cand in enumerate(candidates)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_tune_candidate, tasks))
    else:
        outcomes = [_tune_candidate(t) for t in tasks]

    rmses, failures = [], []
    for ci, (rmse, err) in enumerate(outcomes):
        if err is not None:
            warnings.warn(f"candidate {ci} failed and is excluded: {err}", stacklevel=2)
            failures.append(ci)
            rmses.append(float("nan"))
        else:
            rmses.append(rmse)
    if all(np.isnan(r) for r in rmses):
        raise ComputationError("every tuning candidate failed")
    best_idx = int(np.nanargmin(rmses))
    return TuneResult(
        best=candidates[best_idx],
        best_rmse=float(rmses[best_idx]),
        rmse_per_candidate=rmses,
        failures=failures,
    )


def _tune_candidate(task):
    ci, data, plan, method, params, n_trees, lam, seed = task
    try:
        preds, actuals = [], []
        for si, s in enumerate(plan.slices):
            train = _train_mask(data, s.train_start, s.train_end)
            eval_mask = (data.dates >= s.eval_start) & (data.dates <= s.eval_end)
            eval_mask &= (data.hours >= DAYLIGHT_HOURS[0]) & (data.hours <= DAYLIGHT_HOURS[1])
            if data.outlier_days:
                eval_mask &= ~np.isin(data.dates, list(data.outlier_days))
            if not train.any() or not eval_mask.any():
                raise ComputationError(f"slice {si} has no data")
            model = fit_method(
                method,
                data.features.values[train],
                data.target[train],
                params,
                n_trees,
                lam,
                _derive_seed(seed, ci, si),
            )
            lf = np.maximum(model.predict(data.features.values[eval_mask]), 0.0)
            preds.append(lf * data.ic_mw[eval_mask])
            actuals.append(data.asg_mw[eval_mask])
        err = np.concatenate(preds) - np.concatenate(actuals)
        return float(np.sqrt(np.mean(err**2))), None
    except Exception as exc:  # candidate-level isolation
        return float("nan"), repr(exc)


# -- backtest -----------------------------------------------------------------

@dataclass
class BacktestResult:
    config_id: str
    frame: pd.DataFrame  # columns: date, hour, actual_mw, forecast_mw
    tuned_params: dict
    skipped: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv_frame(self) -> pd.DataFrame:
        out = self.frame.copy()
        out["config_id"] = self.config_id
        return out[["date", "hour", "actual_mw", "forecast_mw", "config_id"]]


def _refit_groups(plan: WindowPlan, cadence: int):
    """Consecutive slices sharing one fitted model under the retrain cadence."""
    groups = []
    first_day = plan.slices[0].forecast_day
    for s in plan.slices:
        offset = (s.forecast_day - first_day).days
        if offset % cadence == 0 or not groups:
            groups.append([s])
        else:
            groups[-1].append(s)
    return groups


def _run_refit_group(task):
    gi, slices, data, method, params, n_trees, lam, seed, hours = task
    lead = slices[0]
    rows_out, skipped = [], []
    train = _train_mask(data, lead.train_start, lead.train_end, hours)
    if train.sum() < 10:
        return [], [(s.forecast_day, "insufficient training rows") for s in slices]
    model = fit_method(
        method, data.features.values[train], data.target[train],
        params, n_trees, lam, _derive_seed(seed, gi),
    )
    for s in slices:
        assert (s.forecast_day - s.train_end).days >= 2, "leakage guard"
        day_mask = data.dates == s.forecast_day
        fc_mask = day_mask & (data.hours >= hours[0]) & (data.hours <= hours[1])
        if not fc_mask.any():
            skipped.append((s.forecast_day, "no forecast-day rows"))
            continue
        lf = np.maximum(model.predict(data.features.values[fc_mask]), 0.0)
        mw = lf * data.ic_mw[fc_mask]
        by_hour = {}
        for h, v in zip(data.hours[fc_mask], mw):
            by_hour.setdefault(int(h), []).append(float(v))
        actual_by_hour = {}
        for h, a in zip(data.hours[day_mask], data.asg_mw[day_mask]):
            actual_by_hour.setdefault(int(h), []).append(float(a))
        for hour in range(24):
            fc = float(np.mean(by_hour[hour])) if hour in by_hour else 0.0
            act = float(np.mean(actual_by_hour[hour])) if hour in actual_by_hour else 0.0
            rows_out.append((s.forecast_day, hour, act, fc))
    return rows_out, skipped


def backtest(
    config: ModelConfiguration,
    tuned_params: dict | None,
    data: ModelingData,
    plan: WindowPlan,
    n_trees: int = 600,
    lam: float = 1.0,
    seed: int = 0,
    cadence: int = 1,
    workers: int = 1,
    hours: tuple[int, int] = DAYLIGHT_HOURS,
) -> BacktestResult:
    """Rolling day-ahead backtest; every test day yields 24 hourly rows."""
    if plan.mode != "test":
        raise ValidationError("backtest expects a test plan")
    if config.method != "LR" and tuned_params is None:
        tuned_params = {}
    groups = _refit_groups(plan, max(1, cadence))
    tasks = [
        (gi, group, data, config.method, tuned_params, n_trees, lam, seed, hours)
        for gi, group in enumerate(groups)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_refit_group, tasks))
    else:
        outcomes = [_run_refit_group(t) for t in tasks]

    rows, skipped = [], []
    for out_rows, out_skipped in outcomes:
        rows.extend(out_rows)
        skipped.extend(out_skipped)
    for day, reason in skipped:
        warnings.warn(f"slice {day} skipped: {reason}", stacklevel=2)
    frame = pd.DataFrame(rows, columns=["date", "hour", "actual_mw", "forecast_mw"])
    frame = frame.sort_values(["date", "hour"]).reset_index(drop=True)
    return BacktestResult(
        config_id=config.config_id,
        frame=frame,
        tuned_params=dict(tuned_params or {}),
        skipped=skipped,
        meta={"seed": seed, "cadence": cadence, "n_trees": n_trees, "lam": lam},
    )


def make_model_factory(
    config: ModelConfiguration,
    tuned_params: dict | None,
    data: ModelingData,
    plan: WindowPlan,
    n_trees: int = 600,
    lam: float = 1.0,
    seed: int = 0,
    hours: tuple[int, int] = DAYLIGHT_HOURS,
):
    """Factory retraining the configured model for a given forecast day.

    Used by the monthly SHAP schedule; the training window and seed for a
    day match what the backtest would have used on that day.
    """
    by_day = {s.forecast_day: s for s in plan.slices}
    first_day = plan.slices[0].forecast_day

    def factory(day):
        s = by_day.get(day)
        if s is None:
            raise ValidationError(f"day {day} is not in the test plan")
        train = _train_mask(data, s.train_start, s.train_end, hours)
        gi = (day - first_day).days
        return fit_method(
            config.method, data.features.values[train], data.target[train],
            tuned_params, n_trees, lam, _derive_seed(seed, gi),
        )

    return factory
