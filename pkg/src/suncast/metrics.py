"""Forecast losses and the bootstrap Model Confidence Set.

Aggregate SMAPE uses the ratio form ``2 * sum|e| / sum(yhat + y)``; the
per-observation SMAPE terms used by the MCS define ``2|e|/(yhat+y)`` as 0
whenever the denominator is 0, so all-night hours do not blow up.

The MCS runs iterative equivalence testing on pairwise loss differentials
with a moving-block bootstrap: the test statistic is the range statistic
(max absolute pairwise t-ratio); while the equivalence hypothesis is
rejected, the configuration with the largest standardized mean loss is
eliminated.  MCS p-values are made monotone by running maximum and the
membership sets are read off at both confidence levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ValidationError


@dataclass(frozen=True)
class AggregateMetrics:
    rmse: float
    mae: float
    smape: float
    smape_undefined: bool = False


def _check_pair(actual, forecast):
    actual = np.asarray(actual, dtype=float)
    forecast = np.asarray(forecast, dtype=float)
    if actual.shape != forecast.shape or actual.ndim != 1:
        raise ValidationError("actual and forecast must be aligned 1-D arrays")
    if len(actual) == 0:
        raise ValidationError("cannot evaluate an empty series")
    return actual, forecast


def aggregate_metrics(actual, forecast) -> AggregateMetrics:
    """RMSE, MAE and ratio-form SMAPE over all timepoints."""
    actual, forecast = _check_pair(actual, forecast)
    err = forecast - actual
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    denom = float(np.sum(forecast + actual))
    if denom == 0.0:
        smape, undefined = 0.0, True
    else:
        smape, undefined = float(2.0 * np.sum(np.abs(err)) / denom), False
    assert rmse >= mae - 1e-12, "power-mean inequality violated"
    return AggregateMetrics(rmse=rmse, mae=mae, smape=smape, smape_undefined=undefined)


def loss_series(actual, forecast) -> pd.DataFrame:
    """Per-observation losses: squared error, absolute error, SMAPE term."""
    actual, forecast = _check_pair(actual, forecast)
    err = forecast - actual
    denom = forecast + actual
    smape_t = np.where(denom == 0.0, 0.0, 2.0 * np.abs(err) / np.where(denom == 0, 1, denom))
    return pd.DataFrame(
        {"squared": err**2, "absolute": np.abs(err), "smape": smape_t}
    )


def daily_metrics(frame: pd.DataFrame) -> pd.DataFrame:
    """Per-day RMSE and SMAPE from a (date, actual_mw, forecast_mw) frame."""
    required = {"date", "actual_mw", "forecast_mw"}
    if not required <= set(frame.columns):
        raise ValidationError(f"daily_metrics needs columns {sorted(required)}")
    rows = []
    for day, grp in frame.groupby("date", sort=True):
        m = aggregate_metrics(grp["actual_mw"].to_numpy(), grp["forecast_mw"].to_numpy())
        rows.append({"date": day, "rmse": m.rmse, "smape": m.smape})
    return pd.DataFrame(rows)


def cumulative_metrics(daily: pd.DataFrame) -> pd.DataFrame:
    """Running sums of the daily metric series (plot-ready)."""
    out = daily.sort_values("date").reset_index(drop=True).copy()
    out["cum_rmse"] = out["rmse"].cumsum()
    out["cum_smape"] = out["smape"].cumsum()
    return out[["date", "cum_rmse", "cum_smape"]]


# -- Model Confidence Set ----------------------------------------------------

@dataclass
class McsResult:
    names: list[str]
    pvalues: dict[str, float]
    elimination_order: list[str]
    members: dict[float, set[str]] = field(default_factory=dict)

    def members_at(self, level: float) -> set[str]:
        """Configurations retained at a confidence level (e.g. 0.90)."""
        alpha = 1.0 - level
        return {name for name, p in self.pvalues.items() if p >= alpha}


def _block_bootstrap_indices(n_obs: int, block_length: int, rng) -> np.ndarray:
    n_blocks = int(np.ceil(n_obs / block_length))
    starts = rng.integers(0, n_obs, size=n_blocks)
    idx = (starts[:, None] + np.arange(block_length)[None, :]) % n_obs
    return idx.ravel()[:n_obs]


def model_confidence_set(
    losses: dict[str, np.ndarray],
    levels: tuple[float, float] = (0.99, 0.90),
    n_bootstrap: int = 1000,
    block_length: int = 24,
    seed: int = 0,
) -> McsResult:
    """Iterative MCS over aligned per-observation loss series.

    ``losses`` maps configuration name to its loss series; all series must
    share length and observation order.  ``levels`` are confidence levels.
    """
    names = list(losses)
    if len(names) < 2:
        raise ValidationError("the MCS needs at least two configurations")
    mat = np.column_stack([np.asarray(losses[n], dtype=float) for n in names])
    n_obs, m = mat.shape
    if n_obs < 2:
        raise ValidationError("loss series too short")
    if not (1 <= block_length <= n_obs):
        raise ValidationError("block_length must be in [1, n_obs]")

    rng = np.random.default_rng(seed)
    # One set of bootstrap draws, reused across elimination rounds: only the
    # per-configuration bootstrap means are ever needed.
    boot_means = np.empty((n_bootstrap, m))
    for b in range(n_bootstrap):
        idx = _block_bootstrap_indices(n_obs, block_length, rng)
        boot_means[b] = mat[idx].mean(axis=0)
    means = mat.mean(axis=0)

    survivors = list(range(m))
    pvalues: dict[str, float] = {}
    elimination: list[str] = []
    running_max = 0.0

    while len(survivors) > 1:
        sub = np.asarray(survivors)
        mu = means[sub]
        bm = boot_means[:, sub]
        k = len(sub)

        # pairwise statistics
        dbar = mu[:, None] - mu[None, :]
        boot_d = bm[:, :, None] - bm[:, None, :]
        var_d = ((boot_d - dbar[None, :, :]) ** 2).mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = np.where(
                var_d > 0,
                dbar / np.sqrt(np.where(var_d > 0, var_d, 1.0)),
                np.where(dbar == 0.0, 0.0, np.sign(dbar) * np.inf),
            )
        iu = np.triu_indices(k, 1)
        t_range = float(np.max(np.abs(tstat[iu]))) if k > 1 else 0.0

        if t_range == 0.0:
            # exact equivalence among all survivors
            p = 1.0
        else:
            centered = boot_d - dbar[None, :, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                boot_t = np.where(
                    var_d[None, :, :] > 0,
                    centered / np.sqrt(np.where(var_d[None, :, :] > 0, var_d, 1.0)),
                    0.0,
                )
            boot_range = np.max(np.abs(boot_t[:, iu[0], iu[1]]), axis=1)
            p = float(np.mean(boot_range >= t_range))

        running_max = max(running_max, p)
        if p == 1.0 and t_range == 0.0:
            break  # identical survivors are never separated

        # eliminate the configuration with the largest standardized mean loss
        d_i = dbar.mean(axis=1) * (k / (k - 1))  # mean over j != i
        boot_di = (bm - bm.mean(axis=1, keepdims=True)) * (k / (k - 1))
        var_i = ((boot_di - d_i[None, :]) ** 2).mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_i = np.where(
                var_i > 0,
                d_i / np.sqrt(np.where(var_i > 0, var_i, 1.0)),
                np.where(d_i == 0.0, 0.0, np.sign(d_i) * np.inf),
            )
        worst_pos = int(np.argmax(t_i))
        worst = survivors[worst_pos]
        pvalues[names[worst]] = running_max
        elimination.append(names[worst])
        survivors.remove(worst)

    for i in survivors:
        pvalues[names[i]] = 1.0

    result = McsResult(names=names, pvalues=pvalues, elimination_order=elimination)
    for level in levels:
        result.members[level] = result.members_at(level)
    # nesting check: higher confidence keeps at least as many members
    hi, lo = max(levels), min(levels)
    assert result.members[lo] <= result.members[hi]
    return result
