"""Exact per-prediction SHAP attribution for the fitted models.

Tree models use the exact polynomial-time path algorithm under the
tree-path conditional expectation: unreached branches are averaged with
training cover weights, so no background dataset is needed.  Ensemble
attributions combine per-tree values by the ensemble's own composition
rule (mean for forests, eta-weighted sum plus base score for boosting).
Linear models attribute ``coef * (x - training mean)``.

Additivity holds by construction: base value plus the row-sum of
attributions reproduces the model prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd
from numba import njit

from .cart import TreeModel
from .dataset import FeatureMatrix, FeatureName
from .ensemble import EnsembleModel
from .errors import ValidationError


@njit(cache=True)
def _unwound_sum(pd_, pz, po, pw, off, depth, i):
    one = po[off + i]
    zero = pz[off + i]
    nxt = pw[off + depth]
    total = 0.0
    if one != 0.0:
        for j in range(depth - 1, -1, -1):
            tmp = nxt * (depth + 1) / ((j + 1) * one)
            total += tmp
            nxt = pw[off + j] - tmp * zero * (depth - j) / (depth + 1)
    else:
        for j in range(depth - 1, -1, -1):
            total += pw[off + j] * (depth + 1) / (zero * (depth - j))
    return total


@njit(cache=True)
def _unwind(pd_, pz, po, pw, off, depth, i):
    one = po[off + i]
    zero = pz[off + i]
    nxt = pw[off + depth]
    for j in range(depth - 1, -1, -1):
        if one != 0.0:
            tmp = pw[off + j]
            pw[off + j] = nxt * (depth + 1) / ((j + 1) * one)
            nxt = tmp - pw[off + j] * zero * (depth - j) / (depth + 1)
        else:
            pw[off + j] = pw[off + j] * (depth + 1) / (zero * (depth - j))
    for j in range(i, depth):
        pd_[off + j] = pd_[off + j + 1]
        pz[off + j] = pz[off + j + 1]
        po[off + j] = po[off + j + 1]


@njit(cache=True)
def _tree_shap_row(feature, threshold, left, right, value, cover, x, phi,
                   pd_, pz, po, pw, st_node, st_depth, st_off, st_pz, st_po, st_pf):
    top = 0
    st_node[top] = 0
    st_depth[top] = 0
    st_off[top] = 0
    st_pz[top] = 1.0
    st_po[top] = 1.0
    st_pf[top] = -1
    top += 1
    while top > 0:
        top -= 1
        node = st_node[top]
        depth = st_depth[top]
        poff = st_off[top]
        p_zero = st_pz[top]
        p_one = st_po[top]
        p_feat = st_pf[top]

        moff = poff + depth + 1
        for i in range(depth + 1):
            pd_[moff + i] = pd_[poff + i]
            pz[moff + i] = pz[poff + i]
            po[moff + i] = po[poff + i]
            pw[moff + i] = pw[poff + i]
        # extend the path with the incoming split
        pd_[moff + depth] = p_feat
        pz[moff + depth] = p_zero
        po[moff + depth] = p_one
        pw[moff + depth] = 1.0 if depth == 0 else 0.0
        for i in range(depth - 1, -1, -1):
            pw[moff + i + 1] += p_one * pw[moff + i] * (i + 1) / (depth + 1)
            pw[moff + i] = p_zero * pw[moff + i] * (depth - i) / (depth + 1)

        if feature[node] < 0:
            for i in range(1, depth + 1):
                w = _unwound_sum(pd_, pz, po, pw, moff, depth, i)
                phi[pd_[moff + i]] += w * (po[moff + i] - pz[moff + i]) * value[node]
        else:
            f = feature[node]
            if x[f] < threshold[node]:
                hot, cold = left[node], right[node]
            else:
                hot, cold = right[node], left[node]
            hot_zero = cover[hot] / cover[node]
            cold_zero = cover[cold] / cover[node]
            inc_zero = 1.0
            inc_one = 1.0
            k = -1
            for i in range(depth + 1):
                if pd_[moff + i] == f:
                    k = i
                    break
            d2 = depth
            if k >= 0:
                inc_zero = pz[moff + k]
                inc_one = po[moff + k]
                _unwind(pd_, pz, po, pw, moff, d2, k)
                d2 -= 1
            # cold pushed first so the hot branch is processed first (LIFO)
            st_node[top] = cold
            st_depth[top] = d2 + 1
            st_off[top] = moff
            st_pz[top] = cold_zero * inc_zero
            st_po[top] = 0.0
            st_pf[top] = f
            top += 1
            st_node[top] = hot
            st_depth[top] = d2 + 1
            st_off[top] = moff
            st_pz[top] = hot_zero * inc_zero
            st_po[top] = inc_one
            st_pf[top] = f
            top += 1


def tree_base_value(tree: TreeModel) -> float:
    """Expected tree output with nothing known: cover-weighted leaf mean."""
    leaves = tree.feature < 0
    return float(np.dot(tree.value[leaves], tree.cover[leaves]) / tree.cover[0])


def _shap_one_tree(tree: TreeModel, X: np.ndarray) -> np.ndarray:
    if tree.cover[0] <= 0 or np.any(tree.cover <= 0):
        raise ValidationError(
            "tree lacks cover counts; refit so nodes retain training cohort sizes"
        )
    n, p = X.shape
    depth = max(tree.depth, 1)
    path_len = (depth + 3) * (depth + 4) // 2 + depth + 4
    pd_ = np.empty(path_len, dtype=np.int64)
    pz = np.empty(path_len)
    po = np.empty(path_len)
    pw = np.empty(path_len)
    m = tree.n_nodes + 1
    st_node = np.empty(m, dtype=np.int64)
    st_depth = np.empty(m, dtype=np.int64)
    st_off = np.empty(m, dtype=np.int64)
    st_pz = np.empty(m)
    st_po = np.empty(m)
    st_pf = np.empty(m, dtype=np.int64)
    phis = np.zeros((n, p))
    for r in range(n):
        _tree_shap_row(
            tree.feature, tree.threshold, tree.left, tree.right, tree.value,
            tree.cover, X[r], phis[r],
            pd_, pz, po, pw, st_node, st_depth, st_off, st_pz, st_po, st_pf,
        )
    return phis


@dataclass
class ShapMatrix:
    """Per-(row, feature) attributions plus the model base value."""

    values: np.ndarray  # (n, p)
    base_value: float
    names: tuple[FeatureName, ...]
    index: pd.DatetimeIndex | None = None

    def mean_abs(self) -> np.ndarray:
        return np.abs(self.values).mean(axis=0)


def _resolve_rows(model: EnsembleModel, rows) -> tuple[np.ndarray, tuple[FeatureName, ...], object]:
    if isinstance(rows, FeatureMatrix):
        return np.asarray(rows.values, dtype=np.float64), rows.names, rows.index
    X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if model.feature_names:
        names = tuple(FeatureName.parse(n) for n in model.feature_names)
    else:
        names = tuple(FeatureName(f"x{j}", None) for j in range(X.shape[1]))
    return X, names, None


def tree_shap(model: EnsembleModel, rows) -> ShapMatrix:
    """Exact SHAP values for every row under the fitted model."""
    X, names, index = _resolve_rows(model, rows)
    if X.shape[1] != model.n_features:
        raise ValidationError(
            f"rows have {X.shape[1]} features, model was fit on {model.n_features}"
        )
    X = np.ascontiguousarray(X)

    if model.kind == "linear":
        if model.feature_means is None:
            raise ValidationError("linear model lacks training means; refit to attribute")
        phis = model.coef[None, :] * (X - model.feature_means[None, :])
        base = float(model.intercept + model.coef @ model.feature_means)
    elif model.kind == "forest":
        if not model.trees:
            raise ValidationError("forest has no trees")
        phis = np.zeros((X.shape[0], X.shape[1]))
        base = 0.0
        for tree in model.trees:
            phis += _shap_one_tree(tree, X)
            base += tree_base_value(tree)
        phis /= len(model.trees)
        base /= len(model.trees)
    elif model.kind == "boosted":
        phis = np.zeros((X.shape[0], X.shape[1]))
        base = model.base_score
        for wk, tree in zip(model.tree_weights, model.trees):
            phis += wk * _shap_one_tree(tree, X)
            base += wk * tree_base_value(tree)
    else:
        raise ValidationError(f"unknown model kind {model.kind!r}")

    return ShapMatrix(values=phis, base_value=float(base), names=names, index=index)


# -- monthly schedule and aggregation views ----------------------------------

@dataclass
class ShapReport:
    months: list[str]  # "YYYY-MM" labels in chronological order
    matrices: list[ShapMatrix]
    names: tuple[FeatureName, ...]

    @property
    def monthly_importance(self) -> np.ndarray:
        return np.stack([m.mean_abs() for m in self.matrices])

    @property
    def overall_importance(self) -> np.ndarray:
        """Mean over months of the monthly mean-absolute attributions."""
        return self.monthly_importance.mean(axis=0)


def monthly_schedule(
    model_factory,
    features: FeatureMatrix,
    plan,
    hours: tuple[int, int] | None = (5, 21),
) -> ShapReport:
    """One attribution matrix per test month.

    ``model_factory(day)`` must return the model as retrained for forecast
    day ``day``; it is called once per month with the month's first
    forecast day, and the resulting model explains that month's rows
    (restricted to the modeled ``hours``, pass None for all 24).
    ``plan`` is a test WindowPlan or any iterable of forecast dates.
    """
    if hasattr(plan, "slices"):
        days = sorted({s.forecast_day for s in plan.slices})
    else:
        days = sorted(set(plan))
    if not days:
        raise ValidationError("monthly schedule needs at least one forecast day")

    months: dict[str, list[date]] = {}
    for d in days:
        months.setdefault(f"{d.year:04d}-{d.month:02d}", []).append(d)

    labels, matrices = [], []
    for label in sorted(months):
        month_days = set(months[label])
        mask = np.array([d in month_days for d in features.local_date])
        if hours is not None:
            lo, hi = hours
            mask &= (features.local_hour >= lo) & (features.local_hour <= hi)
        if not mask.any():
            warnings.warn(f"no feature rows for month {label}; skipped", stacklevel=2)
            continue
        model = model_factory(min(month_days))
        matrices.append(tree_shap(model, features.row_mask(mask)))
        labels.append(label)
    return ShapReport(months=labels, matrices=matrices, names=features.names)


def aggregate_views(report: ShapReport):
    """Location importance, feature importance, and the feature-location map.

    Solar angles carry no location, so they appear in the feature view but
    are excluded from the spatial views.
    """
    overall = report.overall_importance
    names = report.names

    heat: dict[tuple[str, object], float] = {}
    for imp, name in zip(overall, names):
        if name.variable in ("zenith", "azimuth"):
            continue
        loc = "avg" if name.cell_id is None else name.cell_id
        heat[(name.variable, loc)] = heat.get((name.variable, loc), 0.0) + float(imp)

    variables = sorted({v for v, _ in heat})
    locations = sorted({l for _, l in heat}, key=lambda x: (isinstance(x, str), x))
    heatmap = pd.DataFrame(0.0, index=variables, columns=locations)
    for (v, l), imp in heat.items():
        heatmap.loc[v, l] = imp

    location_importance = heatmap.sum(axis=0)
    location_importance.name = "importance"

    feature_rows = {v: float(heatmap.loc[v].mean()) for v in variables}
    for imp, name in zip(overall, names):
        if name.variable in ("zenith", "azimuth"):
            feature_rows[name.variable] = float(imp)
    feature_importance = pd.Series(feature_rows, name="importance").sort_values(
        ascending=False
    )
    return location_importance, feature_importance, heatmap
