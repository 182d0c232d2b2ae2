"""Cross-validated grid search over boosted-tree hyperparameters."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .gbt import BINARY, REGRESSION, GbtParams, fit_gbt, predict_staged

OBJECTIVES = ("tol", "logloss", "mse")
_PROB_CLIP = 1e-12


@dataclass(frozen=True)
class HyperGrid:
    n_trees: tuple = (50, 100, 200)
    max_depth: tuple = (2, 3, 4)
    learning_rate: tuple = (0.05, 0.1)
    min_leaf_weight: tuple = (10.0,)

    def __post_init__(self):
        for name in ("n_trees", "max_depth", "learning_rate", "min_leaf_weight"):
            vals = tuple(sorted(set(getattr(self, name))))
            if not vals:
                raise ValueError(f"grid axis {name} is empty")
            object.__setattr__(self, name, vals)

    def points(self) -> list:
        """All grid points in tie-break order: smaller (n_trees, depth, rate) first."""
        return [
            GbtParams(n, d, lr, m)
            for n, d, lr, m in itertools.product(
                self.n_trees, self.max_depth, self.learning_rate, self.min_leaf_weight
            )
        ]

    def __len__(self):
        return len(self.n_trees) * len(self.max_depth) * len(self.learning_rate) * len(self.min_leaf_weight)


@dataclass(frozen=True)
class GridResult:
    best: GbtParams
    scores: dict  # GbtParams -> mean out-of-fold objective


def transformed_outcome(y, t, e):
    """Y* = t y / e - (1 - t) y / (1 - e); its mean given x is the CATE under randomization."""
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if np.any((e <= 0) | (e >= 1)):
        raise ValueError("propensity must lie strictly inside (0, 1)")
    return t * y / e - (1.0 - t) * y / (1.0 - e)


def score(objective, pred, y, t=None, e=0.5, weights=None):
    """Objective value of predictions ``pred`` (lower is better)."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if objective == "tol":
        if t is None:
            raise ValueError("objective 'tol' requires the treatment column t")
        loss = (transformed_outcome(y, t, e) - pred) ** 2
    elif objective == "mse":
        loss = (y - pred) ** 2
    elif objective == "logloss":
        p = np.clip(pred, _PROB_CLIP, 1.0 - _PROB_CLIP)
        loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    else:
        raise ValueError(f"unknown objective {objective!r}")
    if weights is None:
        return float(np.mean(loss))
    w = np.asarray(weights, dtype=np.float64)
    return float(np.dot(w, loss) / w.sum())


def gbt_learner(X, target, weights=None, task=REGRESSION, backend=None):
    """Default learner: fit a GBT on ``target`` and return staged test predictions."""
    X = np.asarray(X, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    def run(train, test, params, stages):
        w = None if weights is None else np.asarray(weights)[train]
        model = fit_gbt(X[train], target[train], w, task=task, params=params, backend=backend)
        return predict_staged(model, X[test], stages, backend=backend)

    return run


def grid_search(
    X,
    y,
    t=None,
    grid: Optional[HyperGrid] = None,
    folds=None,
    objective: str = "mse",
    *,
    task: Optional[str] = None,
    target=None,
    weights=None,
    e=0.5,
    learner: Optional[Callable] = None,
    backend=None,
) -> GridResult:
    """Pick the grid point with the lowest mean out-of-fold objective.

    ``y`` (and ``t`` for TOL) is what predictions are scored against; the
    default learner is trained on ``target`` (defaults to ``y``). Tree counts
    are evaluated from one staged fit per remaining hyperparameter
    combination. ``learner(train_rows, test_rows, params, stages)`` may
    replace the default to tune estimators whose predictions are not a plain
    GBT output (for example a CATE formed from two model evaluations).
    Exact ties go to the earlier point in :meth:`HyperGrid.points` order.
    """
    grid = grid or HyperGrid()
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "tol" and t is None:
        raise ValueError("objective 'tol' requires the treatment column t")
    if folds is None:
        raise ValueError("a fold plan is required")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if folds.fold.shape[0] != X.shape[0]:
        raise ValueError("fold plan does not cover the rows of X")
    if task is None:
        task = BINARY if objective == "logloss" else REGRESSION
    if learner is None:
        learner = gbt_learner(X, y if target is None else target, weights, task, backend)
    e_arr = np.broadcast_to(np.asarray(e, dtype=np.float64), y.shape)
    stages = list(grid.n_trees)

    totals = {pt: 0.0 for pt in grid.points()}
    for j in range(folds.k):
        train, test = folds.split(j)
        w_te = None if weights is None else np.asarray(weights)[test]
        t_te = None if t is None else np.asarray(t)[test]
        for d, lr, m in itertools.product(grid.max_depth, grid.learning_rate, grid.min_leaf_weight):
            preds = learner(train, test, GbtParams(stages[-1], d, lr, m), stages)
            for s, n_trees in enumerate(stages):
                totals[GbtParams(n_trees, d, lr, m)] += score(
                    objective, preds[s], y[test], t_te, e_arr[test], w_te
                )
    scores = {pt: totals[pt] / folds.k for pt in grid.points()}
    best = None
    for pt in grid.points():
        if best is None or scores[pt] < scores[best]:
            best = pt
    return GridResult(best, scores)
