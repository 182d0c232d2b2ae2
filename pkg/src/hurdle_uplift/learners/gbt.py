"""Gradient-boosted regression and classification trees.

Trees are grown depth-wise with an exact greedy split search over presorted
feature values. Regression minimises weighted squared error, classification
minimises weighted log loss with Newton leaf values. The split search and the
ensemble traversal run in the compiled kernel when available.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._backend import get_kernels

REGRESSION = "regression"
BINARY = "binary"
TASKS = (REGRESSION, BINARY)

FORMAT_VERSION = 1
_MARGIN_CLIP = 30.0
_RATE_CLIP = 1e-6
_MAX_BACKTRACK = 30


@dataclass(frozen=True)
class GbtParams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf_weight: float = 10.0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_leaf_weight < 0:
            raise ValueError("min_leaf_weight must be >= 0")


@dataclass(frozen=True, eq=False)
class Tree:
    """One regression tree in flat array form.

    ``feature[i] < 0`` marks node ``i`` as a leaf holding ``value[i]``; otherwise
    rows with ``x[feature] <= threshold`` go to ``left[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] >= 0:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
            else:
                best = max(best, d)
        return best


@dataclass(frozen=True, eq=False)
class GbtModel:
    task: str
    base_score: float
    trees: tuple
    learning_rate: float
    max_depth: int
    min_leaf_weight: float
    n_features: int
    train_loss: tuple = ()
    _packed: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        object.__setattr__(self, "_packed", _pack(self.trees))

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def params(self) -> GbtParams:
        return GbtParams(self.n_trees, self.max_depth, self.learning_rate, self.min_leaf_weight)

    def truncated(self, n_trees: int) -> "GbtModel":
        """The same ensemble restricted to its first ``n_trees`` trees."""
        if not 0 <= n_trees <= self.n_trees:
            raise ValueError("n_trees out of range")
        return GbtModel(
            self.task,
            self.base_score,
            self.trees[:n_trees],
            self.learning_rate,
            self.max_depth,
            self.min_leaf_weight,
            self.n_features,
            self.train_loss[: n_trees + 1],
        )


def _pack(trees):
    if not trees:
        empty_i = np.zeros(0, dtype=np.intp)
        return dict(
            feature=empty_i,
            threshold=np.zeros(0),
            left=empty_i,
            right=empty_i,
            value=np.zeros(0),
            start=empty_i,
        )
    sizes = [t.n_nodes for t in trees]
    start = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.intp)
    return dict(
        feature=np.ascontiguousarray(np.concatenate([t.feature for t in trees]), dtype=np.intp),
        threshold=np.ascontiguousarray(np.concatenate([t.threshold for t in trees]), dtype=np.float64),
        left=np.ascontiguousarray(np.concatenate([t.left for t in trees]), dtype=np.intp),
        right=np.ascontiguousarray(np.concatenate([t.right for t in trees]), dtype=np.intp),
        value=np.ascontiguousarray(np.concatenate([t.value for t in trees]), dtype=np.float64),
        start=start,
    )


def _sigmoid(z):
    z = np.clip(z, -_MARGIN_CLIP, _MARGIN_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def _loss(task, y, w, margin):
    if task == REGRESSION:
        r = y - margin
        return float(np.dot(w, r * r) / w.sum())
    z = np.clip(margin, -_MARGIN_CLIP, _MARGIN_CLIP)
    # log(1 + e^z) - y z, stable for both signs
    ll = np.logaddexp(0.0, z) - y * z
    return float(np.dot(w, ll) / w.sum())


def _check_xy(X, y, weights, task):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot fit on empty data")
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("X and y must be finite")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValueError(f"weights have shape {w.shape}, expected ({n},)")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if w.sum() <= 0:
            raise ValueError("weights must not all be zero")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if task == BINARY and not np.all((y == 0) | (y == 1)):
        raise ValueError("binary task requires labels in {0, 1}")
    # rescaling to mean one makes the fit invariant to the weight scale
    w = w / w.mean()
    return X, y, w


def fit_gbt(
    X,
    y,
    weights=None,
    task: str = REGRESSION,
    params: Optional[GbtParams] = None,
    backend: Optional[str] = None,
) -> GbtModel:
    """Fit a boosted tree ensemble.

    Each round fits one tree to the Newton step of the current loss; the tree's
    contribution is halved until the training loss does not increase, so the
    recorded ``train_loss`` sequence is monotone.

    Parameters
    ----------
    X : (n, p) array
    y : (n,) array; labels in {0, 1} for ``task="binary"``
    weights : optional (n,) non-negative instance weights
    task : "regression" or "binary"
    params : GbtParams
    backend : force "compiled" or "python" kernels; default is the active one
    """
    params = params or GbtParams()
    X, y, w = _check_xy(X, y, weights, task)
    kern = get_kernels(backend)
    n, p = X.shape

    ybar = float(np.dot(w, y) / w.sum())
    if task == REGRESSION:
        base = ybar
    else:
        r = min(max(ybar, _RATE_CLIP), 1.0 - _RATE_CLIP)
        base = float(np.log(r / (1.0 - r)))

    margin = np.full(n, base)
    losses = [_loss(task, y, w, margin)]
    trees = []
    if params.n_trees > 0:
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.intp)
        xs_sorted = np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))
        finder = kern.SplitFinder(X, order, xs_sorted, float(params.min_leaf_weight))
    lr = params.learning_rate

    for _ in range(params.n_trees):
        if task == REGRESSION:
            g = w * (margin - y)
            h = w.copy()
        else:
            prob = _sigmoid(margin)
            g = w * (prob - y)
            h = w * (prob * (1.0 - prob))
        tree, leaf_of_row = _grow_tree(finder, g, h, w, params)
        step = lr * tree.value[leaf_of_row]
        scale = 1.0
        new_loss = _loss(task, y, w, margin + step)
        tries = 0
        while new_loss > losses[-1] and tries < _MAX_BACKTRACK:
            scale *= 0.5
            new_loss = _loss(task, y, w, margin + scale * step)
            tries += 1
        if new_loss > losses[-1]:
            scale = 0.0
            new_loss = losses[-1]
        if scale != 1.0:
            tree = Tree(tree.feature, tree.threshold, tree.left, tree.right, tree.value * scale)
            step = lr * tree.value[leaf_of_row]
        margin = margin + step
        losses.append(new_loss)
        trees.append(tree)

    return GbtModel(
        task=task,
        base_score=base,
        trees=tuple(trees),
        learning_rate=lr,
        max_depth=params.max_depth,
        min_leaf_weight=params.min_leaf_weight,
        n_features=p,
        train_loss=tuple(losses),
    )


def _grow_tree(finder, g, h, w, params):
    n = g.shape[0]
    finder.start_tree(g, h, w)
    node_of = finder.node_of
    tree_node = np.zeros(n, dtype=np.intp)
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    current = [0]
    for depth in range(params.max_depth + 1):
        m = len(current)
        act = node_of >= 0
        nd = node_of[act]
        g_tot = np.bincount(nd, weights=g[act], minlength=m)
        h_tot = np.bincount(nd, weights=h[act], minlength=m)
        w_tot = np.bincount(nd, weights=w[act], minlength=m)
        for j, tid in enumerate(current):
            value[tid] = -g_tot[j] / h_tot[j] if h_tot[j] > 0 else 0.0
        if depth == params.max_depth:
            break
        pscore = np.zeros(m)
        pos = h_tot > 0
        pscore[pos] = g_tot[pos] ** 2 / h_tot[pos]
        best_gain = 1e-12 * (1.0 + pscore)
        best_feat = np.full(m, -1, dtype=np.intp)
        best_thr = np.zeros(m)
        finder.find_best(g_tot, h_tot, w_tot, best_gain, best_feat, best_thr)
        split = best_feat >= 0
        if not split.any():
            break
        left_local = np.full(m, -1, dtype=np.intp)
        right_local = np.full(m, -1, dtype=np.intp)
        nxt = []
        for j in np.flatnonzero(split):
            tid = current[j]
            feature[tid] = int(best_feat[j])
            threshold[tid] = float(best_thr[j])
            for side in (left_local, right_local):
                side[j] = len(nxt)
                nxt.append(len(feature))
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            left[tid] = nxt[left_local[j]]
            right[tid] = nxt[right_local[j]]
        finder.apply(
            best_feat, best_thr, left_local, right_local, len(nxt),
            partition=depth + 1 < params.max_depth,
        )
        act = node_of >= 0
        tree_node[act] = np.asarray(nxt, dtype=np.intp)[node_of[act]]
        current = nxt
    tree = Tree(
        np.asarray(feature, dtype=np.intp),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp),
        np.asarray(value, dtype=np.float64),
    )
    return tree, tree_node


def _margins(model: GbtModel, X, checkpoints, backend=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} feature columns, got "
            f"{X.shape[1] if X.ndim == 2 else X.shape}"
        )
    ck = np.asarray(checkpoints, dtype=np.intp)
    if np.any(np.diff(ck) < 0) or (ck.size and (ck[0] < 0 or ck[-1] > model.n_trees)):
        raise ValueError("checkpoints must be sorted tree counts within the ensemble")
    pk = model._packed
    kern = get_kernels(backend)
    return kern.predict_margin(
        X, pk["feature"], pk["threshold"], pk["left"], pk["right"], pk["value"],
        pk["start"], float(model.base_score), float(model.learning_rate), ck,
    )


def predict(model: GbtModel, X, backend: Optional[str] = None) -> np.ndarray:
    """Regression predictions, or probabilities for a binary model."""
    margin = _margins(model, X, [model.n_trees], backend)[0]
    return _sigmoid(margin) if model.task == BINARY else margin


def predict_staged(model: GbtModel, X, n_trees: Sequence[int], backend=None) -> np.ndarray:
    """Predictions after each tree count in ``n_trees`` (sorted), shape (k, n)."""
    margin = _margins(model, X, list(n_trees), backend)
    return _sigmoid(margin) if model.task == BINARY else margin


# -- flat text serialisation -------------------------------------------------

def dumps(model: GbtModel) -> str:
    """Serialise to the versioned one-node-per-line text format.

    Layout::

        gbt v1 task=<task> base_score=<f> learning_rate=<f> max_depth=<i>
            min_leaf_weight=<f> n_features=<i> n_trees=<i>     (one line)
        tree <index> <n_nodes>
        <node> split <feature> <threshold> <left> <right>
        <node> leaf <value>
        end

    Floats are written with ``repr`` so they round-trip exactly.
    """
    lines = [
        f"gbt v{FORMAT_VERSION} task={model.task} base_score={model.base_score!r} "
        f"learning_rate={model.learning_rate!r} max_depth={model.max_depth} "
        f"min_leaf_weight={model.min_leaf_weight!r} n_features={model.n_features} "
        f"n_trees={model.n_trees}"
    ]
    for k, t in enumerate(model.trees):
        lines.append(f"tree {k} {t.n_nodes}")
        for i in range(t.n_nodes):
            if t.feature[i] >= 0:
                lines.append(
                    f"{i} split {int(t.feature[i])} {float(t.threshold[i])!r} "
                    f"{int(t.left[i])} {int(t.right[i])}"
                )
            else:
                lines.append(f"{i} leaf {float(t.value[i])!r}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads(text: str) -> GbtModel:
    return read_lines(iter(text.splitlines()))


def read_lines(lines) -> GbtModel:
    """Parse one serialised model from an iterator of lines, stopping at ``end``."""
    header = next(lines).split()
    if len(header) < 2 or header[0] != "gbt":
        raise ValueError("not a gbt model block")
    if header[1] != f"v{FORMAT_VERSION}":
        raise ValueError(f"unsupported gbt format version {header[1]}")
    meta = dict(kv.split("=", 1) for kv in header[2:])
    n_trees = int(meta["n_trees"])
    trees = []
    for _ in range(n_trees):
        _, _, n_nodes = next(lines).split()
        n_nodes = int(n_nodes)
        feature = np.full(n_nodes, -1, dtype=np.intp)
        threshold = np.zeros(n_nodes)
        left = np.full(n_nodes, -1, dtype=np.intp)
        right = np.full(n_nodes, -1, dtype=np.intp)
        value = np.zeros(n_nodes)
        for _ in range(n_nodes):
            parts = next(lines).split()
            i = int(parts[0])
            if parts[1] == "split":
                feature[i] = int(parts[2])
                threshold[i] = float(parts[3])
                left[i] = int(parts[4])
                right[i] = int(parts[5])
            elif parts[1] == "leaf":
                value[i] = float(parts[2])
            else:
                raise ValueError(f"bad node line: {' '.join(parts)}")
        trees.append(Tree(feature, threshold, left, right, value))
    if next(lines).strip() != "end":
        raise ValueError("gbt block not terminated by 'end'")
    return GbtModel(
        task=meta["task"],
        base_score=float(meta["base_score"]),
        trees=tuple(trees),
        learning_rate=float(meta["learning_rate"]),
        max_depth=int(meta["max_depth"]),
        min_leaf_weight=float(meta["min_leaf_weight"]),
        n_features=int(meta["n_features"]),
    )
