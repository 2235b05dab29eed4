"""Regression trees: greedy binary partitioning with sum-of-squares loss.

Trees are stored as flat parallel arrays (feature < 0 marks a leaf), which
keeps fitting and prediction numba-friendly and makes JSON serialization
and SHAP traversal straightforward.  The same grower also serves the
ensemble module: with ``lam`` (leaf L2) and ``min_gain`` it produces
second-order boosting trees, with ``lam = 0`` plain CART/forest trees.

Split search follows standard CART: candidate thresholds are midpoints
between consecutive distinct sorted feature values, the split maximizing
the SSE reduction wins, ties broken by lowest feature index then smallest
threshold.  Cost-complexity pruning uses the rpart convention: ``alpha``
is dimensionless, the effective penalty per leaf is ``alpha`` times the
root SSE.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import ValidationError


@dataclass
class CartParams:
    alpha: float = 0.0
    max_depth: int = 30
    min_n: int = 5

    def __post_init__(self):
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be positive")
        if self.min_n < 1:
            raise ValidationError("min_n must be positive")


@dataclass
class TreeModel:
    """A fitted tree as parallel node arrays; node 0 is the root."""

    feature: np.ndarray  # int32, -1 for leaves
    threshold: np.ndarray  # float64, NaN for leaves
    left: np.ndarray  # int32, -1 for leaves
    right: np.ndarray
    value: np.ndarray  # cohort prediction at every node
    cover: np.ndarray  # cohort weight sum at every node
    sse: np.ndarray  # cohort weighted SSE at every node
    n_features: int
    alpha: float = 0.0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ValidationError(
                f"row has {X.shape[1]} features, tree was fit on {self.n_features}"
            )
        out = np.empty(X.shape[0])
        _predict_kernel(self.feature, self.threshold, self.left, self.right, self.value, X, out)
        return out

    def training_sse(self) -> float:
        """Total SSE of the training cohort over the current leaves."""
        return float(self.sse[self.feature < 0].sum())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else t for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
            "sse": self.sse.tolist(),
            "n_features": self.n_features,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(
                [np.nan if t is None else t for t in d["threshold"]], dtype=np.float64
            ),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            cover=np.asarray(d["cover"], dtype=np.float64),
            sse=np.asarray(d["sse"], dtype=np.float64),
            n_features=int(d["n_features"]),
            alpha=float(d.get("alpha", 0.0)),
        )


@njit(cache=True)
def _predict_kernel(feature, threshold, left, right, value, X, out):
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]


@njit(cache=True)
def _grow_kernel(
    X, y, w, idx, scratch, vals,
    max_depth, min_child, lam, min_gain, pool, use_pool,
    feature, threshold, left, right, value, cover, sse,
    st_node, st_lo, st_hi, st_depth,
):
    """Grow a whole tree over the row-index segment machinery.

    ``idx`` holds row indexes; each node owns a contiguous segment that the
    chosen split partitions in place.  Node arrays are preallocated by the
    caller; returns the number of nodes written.
    """
    n_nodes = 0
    pool_next = 0
    p = X.shape[1]

    # root
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = idx.shape[0]
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    feature[0] = -1
    threshold[0] = np.nan
    left[0] = -1
    right[0] = -1

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]

        g_tot = 0.0
        h_tot = 0.0
        gg = 0.0
        for i in range(lo, hi):
            r = idx[i]
            g_tot += w[r] * y[r]
            h_tot += w[r]
            gg += w[r] * y[r] * y[r]
        node_sse = gg - g_tot * g_tot / h_tot
        if node_sse < 0.0:
            node_sse = 0.0
        value[node] = g_tot / (h_tot + lam)
        cover[node] = h_tot
        sse[node] = node_sse

        if depth >= max_depth or h_tot < 2.0 * min_child or node_sse <= 1e-12:
            continue

        parent_score = g_tot * g_tot / (h_tot + lam)
        best_gain = min_gain
        best_feat = -1
        best_thr = np.nan
        seg = hi - lo
        if use_pool:
            n_feats = pool.shape[1]
        else:
            n_feats = p
        for fi in range(n_feats):
            if use_pool:
                f = pool[pool_next, fi]
            else:
                f = fi
            for i in range(seg):
                vals[i] = X[idx[lo + i], f]
            order = np.argsort(vals[:seg])
            gl = 0.0
            hl = 0.0
            for i in range(seg - 1):
                r = idx[lo + order[i]]
                gl += w[r] * y[r]
                hl += w[r]
                v_lo = vals[order[i]]
                v_hi = vals[order[i + 1]]
                if v_lo == v_hi:
                    continue
                hr = h_tot - hl
                if hl < min_child or hr < min_child:
                    continue
                gr = g_tot - gl
                gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score
                if gain > best_gain:
                    thr = 0.5 * (v_lo + v_hi)
                    if thr <= v_lo:  # midpoint rounded onto the lower value
                        thr = v_hi
                    best_gain = gain
                    best_feat = f
                    best_thr = thr
        if use_pool:
            pool_next += 1
        if best_feat < 0:
            continue

        # stable partition of the segment around the threshold
        n_left = 0
        n_right = 0
        for i in range(lo, hi):
            r = idx[i]
            if X[r, best_feat] < best_thr:
                idx[lo + n_left] = r
                n_left += 1
            else:
                scratch[n_right] = r
                n_right += 1
        for i in range(n_right):
            idx[lo + n_left + i] = scratch[i]

        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        feature[li] = -1
        threshold[li] = np.nan
        left[li] = -1
        right[li] = -1
        feature[ri] = -1
        threshold[ri] = np.nan
        left[ri] = -1
        right[ri] = -1
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = li
        right[node] = ri

        st_node[top] = ri
        st_lo[top] = lo + n_left
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = li
        st_lo[top] = lo
        st_hi[top] = lo + n_left
        st_depth[top] = depth + 1
        top += 1
    return n_nodes


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    weights: Optional[np.ndarray] = None,
    max_depth: Optional[int] = None,
    min_child_weight: float = 1.0,
    mtry: Optional[int] = None,
    lam: float = 0.0,
    min_gain: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> TreeModel:
    """Grow a tree; leaf value is ``sum(w*y) / (sum(w) + lam)`` per cohort.

    ``min_gain`` is the strict admission threshold on the score gain
    (0 for plain SSE trees, ``2*gamma`` for boosting trees).
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise ValidationError("X must be 2-D and aligned with y")
    if len(y) == 0:
        raise ValidationError("cannot fit a tree on empty data")
    n, p = X.shape
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValidationError("weights must align with rows")
        if (w < 0).any():
            raise ValidationError("weights must be non-negative")
    live = w > 0
    if not live.any():
        raise ValidationError("all rows have zero weight")
    X, y, w = np.ascontiguousarray(X[live]), y[live], w[live]
    n = len(y)
    if mtry is not None and not (1 <= mtry <= p):
        raise ValidationError(f"mtry={mtry} outside [1, {p}]")
    if mtry is not None and mtry < p and rng is None:
        raise ValidationError("feature subsampling requires an rng")
    depth_cap = max_depth if max_depth is not None else 2**30

    use_pool = mtry is not None and mtry < p
    if use_pool:
        # pregenerated per-split feature subsets keep the RNG outside numba;
        # subsets are consumed in deterministic DFS order
        max_attempts = 2 * n + 2
        keys = rng.random((max_attempts, p))
        pool = np.sort(np.argsort(keys, axis=1)[:, :mtry], axis=1).astype(np.int64)
    else:
        pool = np.empty((1, 1), dtype=np.int64)

    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.full(max_nodes, np.nan)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes)
    cover = np.zeros(max_nodes)
    sse = np.zeros(max_nodes)
    idx = np.arange(n, dtype=np.int64)
    scratch = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    st_node = np.empty(max_nodes, dtype=np.int64)
    st_lo = np.empty(max_nodes, dtype=np.int64)
    st_hi = np.empty(max_nodes, dtype=np.int64)
    st_depth = np.empty(max_nodes, dtype=np.int64)

    n_nodes = _grow_kernel(
        X, y, w, idx, scratch, vals,
        depth_cap, float(min_child_weight), float(lam), float(min_gain),
        pool, use_pool,
        feature, threshold, left, right, value, cover, sse,
        st_node, st_lo, st_hi, st_depth,
    )
    return TreeModel(
        feature=feature[:n_nodes].copy(),
        threshold=threshold[:n_nodes].copy(),
        left=left[:n_nodes].copy(),
        right=right[:n_nodes].copy(),
        value=value[:n_nodes].copy(),
        cover=cover[:n_nodes].copy(),
        sse=sse[:n_nodes].copy(),
        n_features=p,
    )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: CartParams,
    weights: Optional[np.ndarray] = None,
) -> TreeModel:
    """CART: grow to the stopping rules, then weakest-link prune at alpha."""
    tree = grow_tree(
        X,
        y,
        weights=weights,
        max_depth=params.max_depth,
        min_child_weight=params.min_n,
    )
    if params.alpha > 0:
        tree = prune(tree, params.alpha)
    tree.alpha = params.alpha
    return tree


def _subtree_stats(tree: TreeModel):
    """Per-node (leaf count, summed leaf SSE) of the subtree below each node."""
    n = tree.n_nodes
    leaves = np.zeros(n, dtype=int)
    leaf_sse = np.zeros(n)
    # children always follow their parent in the arrays, so sweep backwards
    for i in range(n - 1, -1, -1):
        if tree.feature[i] < 0:
            leaves[i] = 1
            leaf_sse[i] = tree.sse[i]
        else:
            leaves[i] = leaves[tree.left[i]] + leaves[tree.right[i]]
            leaf_sse[i] = leaf_sse[tree.left[i]] + leaf_sse[tree.right[i]]
    return leaves, leaf_sse


def _compact(tree: TreeModel) -> TreeModel:
    """Drop unreachable nodes after collapses, preserving traversal order."""
    order = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if tree.feature[i] >= 0:
            stack.append(int(tree.right[i]))
            stack.append(int(tree.left[i]))
    remap = {old: new for new, old in enumerate(order)}
    idx = np.asarray(order)
    return TreeModel(
        feature=tree.feature[idx].copy(),
        threshold=tree.threshold[idx].copy(),
        left=np.asarray(
            [remap[int(tree.left[i])] if tree.feature[i] >= 0 else -1 for i in order],
            dtype=np.int32,
        ),
        right=np.asarray(
            [remap[int(tree.right[i])] if tree.feature[i] >= 0 else -1 for i in order],
            dtype=np.int32,
        ),
        value=tree.value[idx].copy(),
        cover=tree.cover[idx].copy(),
        sse=tree.sse[idx].copy(),
        n_features=tree.n_features,
        alpha=tree.alpha,
    )


def prune(tree: TreeModel, alpha: float) -> TreeModel:
    """Weakest-link pruning; returns the subtree minimizing SSE + penalty.

    The penalty per leaf is ``alpha * root SSE`` (rpart-style dimensionless
    alpha), so the result minimizes ``SSE(T) + alpha * R0 * |leaves(T)|``
    over the weakest-link sequence.
    """
    if alpha < 0:
        raise ValidationError("alpha must be >= 0")
    if alpha == 0.0:
        return _compact(tree)
    work = TreeModel(
        feature=tree.feature.copy(),
        threshold=tree.threshold.copy(),
        left=tree.left.copy(),
        right=tree.right.copy(),
        value=tree.value.copy(),
        cover=tree.cover.copy(),
        sse=tree.sse.copy(),
        n_features=tree.n_features,
        alpha=alpha,
    )
    lam_eff = alpha * float(tree.sse[0])
    while True:
        internal = np.flatnonzero(work.feature >= 0)
        if internal.size == 0:
            break
        leaves, leaf_sse = _subtree_stats(work)
        # g(t): SSE increase per leaf removed when collapsing node t
        g = (work.sse[internal] - leaf_sse[internal]) / (leaves[internal] - 1)
        weakest = int(internal[np.argmin(g)])
        if g.min() > lam_eff + 1e-12:
            break
        work.feature[weakest] = -1
        work.threshold[weakest] = np.nan
        work.left[weakest] = -1
        work.right[weakest] = -1
    return _compact(work)
