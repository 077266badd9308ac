"""Weighted least-squares gradient boosting with depth-limited regression trees.

Split search is exact and greedy: every boundary between consecutive distinct
values of every feature is scored by weighted squared-error reduction. Ties
go to the lower threshold, then to the lower feature index, so fitting is
fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MIN_GAIN = 1e-12


@dataclass
class RegressionTree:
    """Flat array encoding; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            go_left = X[rows[active], feat[active]] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RegressionTree:
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
        )


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature stable argsort, shape (n_features, n_samples)."""
    return np.argsort(X, axis=0, kind="stable").T.copy()


def _best_split(X, order, r, w, min_leaf):
    """Best (gain, feature, threshold, n_left) for the samples in ``order``.

    ``order`` has shape (n_features, m): the node's samples sorted by each feature.
    """
    n_feat, m = order.shape
    if m < 2 * min_leaf:
        return None
    ws = w[order]
    wr = ws * r[order]
    cw = np.cumsum(ws, axis=1)
    cwr = np.cumsum(wr, axis=1)
    total_w = cw[:, -1:]
    total_wr = cwr[:, -1:]
    # candidate i puts sorted positions [0, i] on the left
    lw = cw[:, :-1]
    lwr = cwr[:, :-1]
    rw = total_w - lw
    rwr = total_wr - lwr
    xs = np.take_along_axis(X.T, order, axis=1)
    valid = xs[:, :-1] < xs[:, 1:]
    n_left = np.arange(1, m)
    valid &= (n_left >= min_leaf)[None, :] & ((m - n_left) >= min_leaf)[None, :]
    valid &= (lw > 0) & (rw > 0)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = lwr**2 / lw + rwr**2 / rw - total_wr**2 / total_w
    gain = np.where(valid, gain, -np.inf)
    pos = np.argmax(gain, axis=1)  # first maximum -> lowest threshold
    per_feature = gain[np.arange(n_feat), pos]
    f = int(np.argmax(per_feature))
    best = float(per_feature[f])
    scale = float(total_wr[0, 0] ** 2 / total_w[0, 0]) if total_w[0, 0] > 0 else 0.0
    if not np.isfinite(best) or best <= _MIN_GAIN * max(1.0, scale):
        return None
    i = int(pos[f])
    lo, hi = xs[f, i], xs[f, i + 1]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return best, f, float(thr), i + 1


def fit_tree(X, order, r, w, max_depth: int, min_samples_leaf: int):
    """Fit one tree to residuals ``r``; returns the tree and each sample's leaf id."""
    n = X.shape[0]
    feature, threshold, left, right, value = [], [], [], [], []
    leaf_of = np.zeros(n, dtype=np.int64)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.ones(n, dtype=bool), 0)]
    while stack:
        node, mask, depth = stack.pop()
        members = order[mask[order]].reshape(order.shape[0], -1)
        wsum = w[members[0]].sum()
        value[node] = float((w[members[0]] * r[members[0]]).sum() / wsum) if wsum > 0 else 0.0
        split = _best_split(X, members, r, w, min_samples_leaf) if depth < max_depth else None
        if split is None:
            leaf_of[mask] = node
            continue
        _, f, thr, _ = split
        go_left = mask & (X[:, f] <= thr)
        go_right = mask & ~go_left
        lnode = new_node()
        rnode = new_node()
        feature[node] = f
        threshold[node] = thr
        left[node] = lnode
        right[node] = rnode
        # right pushed first so the left subtree is numbered first
        stack.append((rnode, go_right, depth + 1))
        stack.append((lnode, go_left, depth + 1))

    tree = RegressionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
    )
    return tree, leaf_of


@dataclass
class BoostedTrees:
    base: float
    learning_rate: float
    trees: list[RegressionTree]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.base)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def weighted_sse(y, pred, w) -> float:
    return float((w * (y - pred) ** 2).sum())


def fit_boosted(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    n_trees: int,
    max_depth: int,
    learning_rate: float,
    min_samples_leaf: int,
) -> tuple[BoostedTrees, list[float]]:
    """Boost squared-error trees; returns the ensemble and the per-iteration training loss.

    Boosting stops early once a tree cannot split (the residuals then have
    zero weighted mean and nothing further can be gained).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    base = float((w * y).sum() / w.sum()) if w.sum() > 0 else float(y.mean())
    pred = np.full(y.shape[0], base)
    losses = [weighted_sse(y, pred, w)]
    trees: list[RegressionTree] = []
    order = presort(X)
    for _ in range(n_trees):
        tree, leaf_of = fit_tree(X, order, y - pred, w, max_depth, min_samples_leaf)
        if tree.n_leaves == 1:
            break
        pred = pred + learning_rate * tree.value[leaf_of]
        trees.append(tree)
        losses.append(weighted_sse(y, pred, w))
    return BoostedTrees(base=base, learning_rate=learning_rate, trees=trees), losses
