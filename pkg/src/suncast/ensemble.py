"""Tree ensembles on top of the flat-array grower, plus the OLS baseline.

Random forest: bootstrap resamples (with replacement, expressed as integer
row weights) and uniform per-split feature sampling; trees grow unpruned
to the ``min_n`` stopping rule and predictions average across trees.

Boosting: squared-error gradient boosting in the XGBoost parametrization.
Trees fit the current residuals on a sampled row fraction; leaf values are
``sum(residual) / (count + lambda)`` and a split is admitted only when
``0.5 * gain - gamma > 0``.  Predictions accumulate ``eta`` times each
tree on top of the mean-target base score.

The linear baseline is ordinary least squares with an intercept, solved by
``numpy.linalg.lstsq`` (minimum-norm solution covers rank deficiency).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cart import TreeModel, grow_tree
from .errors import ValidationError

DEFAULT_N_TREES = 600  # fixed ensemble size used for method comparison


@dataclass
class ForestParams:
    n_trees: int = DEFAULT_N_TREES
    mtry: int = 1
    min_n: int = 5
    seed: int = 0
    bootstrap: bool = True
    sample_fraction: float = 1.0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be positive")
        if self.mtry < 1:
            raise ValidationError("mtry must be positive")
        if self.min_n < 1:
            raise ValidationError("min_n must be positive")
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ValidationError("sample_fraction must be in (0, 1]")


@dataclass
class BoostParams:
    n_trees: int = DEFAULT_N_TREES
    eta: float = 0.1
    gamma: float = 0.0
    max_depth: int = 6
    min_n: int = 5
    mtry: Optional[int] = None  # None = all features
    subsample: float = 1.0
    lam: float = 1.0  # leaf L2; not tuned, common default
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be positive")
        if not (0.0 < self.eta <= 1.0):
            raise ValidationError("eta must be in (0, 1]")
        if self.gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be positive")
        if self.min_n < 1:
            raise ValidationError("min_n must be positive")
        if not (0.0 < self.subsample <= 1.0):
            raise ValidationError("subsample must be in (0, 1]")
        if self.lam < 0:
            raise ValidationError("lam must be >= 0")


@dataclass
class EnsembleModel:
    """A fitted forest, boosted ensemble, or linear baseline."""

    kind: str  # "forest" | "boosted" | "linear"
    n_features: int
    trees: list[TreeModel] = field(default_factory=list)
    tree_weights: np.ndarray | None = None  # boosted: eta per tree
    base_score: float = 0.0
    coef: np.ndarray | None = None
    intercept: float = 0.0
    feature_means: np.ndarray | None = None  # linear SHAP centering
    params: dict = field(default_factory=dict)
    feature_names: list[str] | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValidationError(
                f"rows have {X.shape[1]} features, model was fit on {self.n_features}"
            )
        if self.kind == "linear":
            return self.intercept + X @ self.coef
        if self.kind == "forest":
            if not self.trees:
                return np.full(X.shape[0], self.base_score)
            acc = np.zeros(X.shape[0])
            for tree in self.trees:
                acc += tree.predict(X)
            return acc / len(self.trees)
        if self.kind == "boosted":
            acc = np.full(X.shape[0], self.base_score)
            for wk, tree in zip(self.tree_weights, self.trees):
                acc += wk * tree.predict(X)
            return acc
        raise ValidationError(f"unknown ensemble kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "n_features": self.n_features,
            "base_score": self.base_score,
            "params": self.params,
            "feature_names": self.feature_names,
        }
        if self.kind == "linear":
            d["coef"] = self.coef.tolist()
            d["intercept"] = self.intercept
            d["feature_means"] = (
                None if self.feature_means is None else self.feature_means.tolist()
            )
        else:
            d["trees"] = [t.to_dict() for t in self.trees]
            d["tree_weights"] = (
                None if self.tree_weights is None else np.asarray(self.tree_weights).tolist()
            )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        kind = d["kind"]
        model = cls(
            kind=kind,
            n_features=int(d["n_features"]),
            base_score=float(d.get("base_score", 0.0)),
            params=d.get("params", {}),
            feature_names=d.get("feature_names"),
        )
        if kind == "linear":
            model.coef = np.asarray(d["coef"], dtype=float)
            model.intercept = float(d["intercept"])
            fm = d.get("feature_means")
            model.feature_means = None if fm is None else np.asarray(fm, dtype=float)
        else:
            model.trees = [TreeModel.from_dict(t) for t in d["trees"]]
            tw = d.get("tree_weights")
            model.tree_weights = None if tw is None else np.asarray(tw, dtype=float)
        return model


def _check_xy(X, y):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValidationError("X must be 2-D and aligned with y")
    if len(y) == 0:
        raise ValidationError("cannot fit on empty data")
    return X, y


def fit_forest(X, y, params: ForestParams) -> EnsembleModel:
    """Bagged trees with per-split feature sampling, no pruning."""
    X, y = _check_xy(X, y)
    n, p = X.shape
    if params.mtry > p:
        raise ValidationError(f"mtry={params.mtry} exceeds feature count {p}")
    master = np.random.SeedSequence(params.seed)
    seeds = master.spawn(params.n_trees)
    trees = []
    for k in range(params.n_trees):
        rng = np.random.default_rng(seeds[k])
        if params.bootstrap:
            m = max(1, int(round(params.sample_fraction * n)))
            idx = rng.integers(0, n, size=m)
            weights = np.bincount(idx, minlength=n).astype(float)
        else:
            weights = np.ones(n)
        tree = grow_tree(
            X,
            y,
            weights=weights,
            max_depth=None,
            min_child_weight=params.min_n,
            mtry=params.mtry,
            rng=rng,
        )
        trees.append(tree)
    return EnsembleModel(
        kind="forest",
        n_features=p,
        trees=trees,
        base_score=float(y.mean()),
        params=vars(params).copy(),
    )


def fit_boosted(X, y, params: BoostParams) -> EnsembleModel:
    """Gradient boosting on squared error with second-order split gain."""
    X, y = _check_xy(X, y)
    n, p = X.shape
    mtry = params.mtry
    if mtry is not None and mtry > p:
        raise ValidationError(f"mtry={mtry} exceeds feature count {p}")
    rng = np.random.default_rng(params.seed)
    base = float(y.mean())
    pred = np.full(n, base)
    trees = []
    for _ in range(params.n_trees):
        residual = y - pred
        if params.subsample < 1.0:
            m = max(1, int(round(params.subsample * n)))
            rows = np.sort(rng.choice(n, size=m, replace=False))
        else:
            rows = np.arange(n)
        tree = grow_tree(
            X[rows],
            residual[rows],
            max_depth=params.max_depth,
            min_child_weight=params.min_n,
            mtry=mtry,
            lam=params.lam,
            min_gain=2.0 * params.gamma,
            rng=rng,
        )
        trees.append(tree)
        pred += params.eta * tree.predict(X)
    return EnsembleModel(
        kind="boosted",
        n_features=p,
        trees=trees,
        tree_weights=np.full(len(trees), params.eta),
        base_score=base,
        params=vars(params).copy(),
    )


def fit_linear(X, y) -> EnsembleModel:
    """Least squares with intercept; warns and continues on rank deficiency."""
    X, y = _check_xy(X, y)
    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        warnings.warn(
            f"design matrix rank {rank} < {design.shape[1]}; "
            "using minimum-norm least-squares solution",
            stacklevel=2,
        )
    return EnsembleModel(
        kind="linear",
        n_features=p,
        coef=coef[1:],
        intercept=float(coef[0]),
        base_score=float(y.mean()),
        feature_means=X.mean(axis=0),
        params={},
    )


def predict(model: EnsembleModel, X) -> np.ndarray:
    return model.predict(X)
