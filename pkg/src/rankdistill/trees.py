"""Least-squares regression trees grown best-first, the building block of
every boosted ranker and interpreter in the toolkit.

Split candidates are the midpoints between consecutive distinct sorted
feature values; a split must leave at least ``min_samples_leaf`` rows on
each side and strictly reduce the weighted squared error.  Leaves predict
the weighted mean of their targets; boosting callers overwrite leaf values
with their own Newton step via :meth:`RegressionTree.set_leaf_values`.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

_LEAF = -1


@dataclass
class RegressionTree:
    """Binary regression tree over dense float features.

    Parallel node arrays; ``feature[i] == -1`` marks a leaf.  Routing is
    ``x[feature] <= threshold -> left``.  ``feature`` holds 0-based column
    indices in memory; serialization converts to the 1-based external ids.
    """

    feature: np.ndarray    # (nodes,) intp, -1 for leaves
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray       # (nodes,) intp, -1 for leaves
    right: np.ndarray      # (nodes,) intp, -1 for leaves
    value: np.ndarray      # (nodes,) float64, meaningful at leaves

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature == _LEAF))

    def leaf_ids(self) -> np.ndarray:
        return np.flatnonzero(self.feature == _LEAF)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat != _LEAF)
            if active.size == 0:
                return node
            f = feat[active]
            go_left = X[active, f] <= self.threshold[node[active]]
            node[active] = np.where(
                go_left, self.left[node[active]], self.right[node[active]]
            )

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def set_leaf_values(self, leaf_values: dict[int, float]) -> None:
        for node_id, v in leaf_values.items():
            if self.feature[node_id] != _LEAF:
                raise ValueError(f"node {node_id} is not a leaf")
            self.value[node_id] = v

    def max_depth(self) -> int:
        depth = {0: 0}
        out = 0
        for i in range(self.n_nodes):
            d = depth[i]
            if self.feature[i] != _LEAF:
                depth[int(self.left[i])] = d + 1
                depth[int(self.right[i])] = d + 1
            else:
                out = max(out, d)
        return out


def _leaf_value(y: np.ndarray, w: np.ndarray) -> float:
    tot = w.sum()
    if tot > 0:
        return float(np.dot(w, y) / tot)
    return float(y.mean())


def _best_split(X, y, w, rows, feats, min_samples_leaf):
    """Best (gain, feature, threshold) over candidate splits of one node.

    Gain is the reduction in weighted SSE; candidates sit at midpoints
    between consecutive distinct sorted values of each candidate feature.
    Returns ``None`` when no candidate strictly improves.
    """
    m = rows.size
    if m < 2 * min_samples_leaf:
        return None
    yv = y[rows]
    if yv.max() == yv.min():
        return None
    Xs = X[np.ix_(rows, feats)]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    wv = w[rows][order]
    wy = (w[rows] * yv)[order]
    cw = np.cumsum(wv, axis=0)
    cwy = np.cumsum(wy, axis=0)
    tot_w = cw[-1]
    tot_wy = cwy[-1]

    # candidate p splits sorted rows [0, p) | [p, m)
    lw = cw[:-1]
    lwy = cwy[:-1]
    rw = tot_w - lw
    rwy = tot_wy - lwy
    counts = np.arange(1, m)
    valid = (xs[1:] > xs[:-1])
    valid &= (counts >= min_samples_leaf)[:, None]
    valid &= (counts <= m - min_samples_leaf)[:, None]
    valid &= (lw > 0) & (rw > 0)
    if not valid.any():
        return None

    with np.errstate(divide="ignore", invalid="ignore"):
        score = lwy * lwy / lw + rwy * rwy / rw
    score[~valid] = -np.inf
    flat = int(np.argmax(score))
    p, f = np.unravel_index(flat, score.shape)
    base = tot_wy[f] * tot_wy[f] / tot_w[f]
    gain = float(score[p, f] - base)
    if gain <= 1e-12 * max(1.0, abs(base)):
        return None
    a, b = xs[p, f], xs[p + 1, f]
    thr = (a + b) / 2.0
    if thr >= b:  # midpoint rounded up to b; fall back so b routes right
        thr = a
    return gain, int(feats[f]), float(thr)


def fit_regression_tree(
    X,
    y,
    sample_weight=None,
    *,
    max_leaves: int = 10,
    min_samples_leaf: int = 1,
    feature_indices=None,
) -> RegressionTree:
    """Grow a least-squares tree, repeatedly splitting the best leaf.

    ``feature_indices`` restricts split candidates to those 0-based
    columns (the interpreter feature regimes rely on this); leaf values
    stay weighted target means.  All-equal targets yield a single leaf.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-d matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("y must be 1-d with one target per row of X")
    if sample_weight is None:
        w = np.ones(X.shape[0], dtype=np.float64)
    else:
        w = np.asarray(sample_weight, dtype=np.float64)
        if w.shape != y.shape:
            raise ValueError("sample_weight must match y")
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be >= 0 and not all zero")
    if max_leaves < 1:
        raise ValueError("max_leaves must be >= 1")
    if feature_indices is None:
        feats = np.arange(X.shape[1], dtype=np.intp)
    else:
        feats = np.asarray(sorted(set(int(i) for i in feature_indices)), dtype=np.intp)
        if feats.size == 0 or feats[0] < 0 or feats[-1] >= X.shape[1]:
            raise ValueError("feature_indices out of range")

    feature = [_LEAF]
    threshold = [0.0]
    left = [_LEAF]
    right = [_LEAF]
    value = [_leaf_value(y, w)]
    rows_of = {0: np.arange(X.shape[0], dtype=np.intp)}

    heap: list[tuple[float, int, int, int, float]] = []
    counter = 0

    def consider(node_id: int) -> None:
        nonlocal counter
        found = _best_split(X, y, w, rows_of[node_id], feats, min_samples_leaf)
        if found is not None:
            gain, f, thr = found
            heapq.heappush(heap, (-gain, counter, node_id, f, thr))
            counter += 1

    if max_leaves > 1:
        consider(0)
    n_leaves = 1
    while n_leaves < max_leaves and heap:
        _, _, node_id, f, thr = heapq.heappop(heap)
        rows = rows_of.pop(node_id)
        mask = X[rows, f] <= thr
        for child_rows in (rows[mask], rows[~mask]):
            child = len(feature)
            feature.append(_LEAF)
            threshold.append(0.0)
            left.append(_LEAF)
            right.append(_LEAF)
            value.append(_leaf_value(y[child_rows], w[child_rows]))
            rows_of[child] = child_rows
        feature[node_id] = f
        threshold[node_id] = thr
        left[node_id] = len(feature) - 2
        right[node_id] = len(feature) - 1
        n_leaves += 1
        if n_leaves < max_leaves:
            consider(left[node_id])
            consider(right[node_id])

    return RegressionTree(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        value=np.asarray(value, dtype=np.float64),
    )
