"""Random forest and gradient boosting on score vectors, with their tuning."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..data import derive_seed
from . import _trees
from .linear import clamp_proba


@dataclass(frozen=True)
class ForestSettings:
    """Forest size and the stepwise mtry search.

    Starting from ``floor(sqrt(K))`` (or ``mtry`` if given), mtry is divided
    and multiplied by ``step_factor`` while the OOB error drops by more
    than ``improve`` (relative); the mtry with the lowest OOB error wins.
    Search trials use ``n_trees_try`` trees; the returned forest is regrown
    with ``n_trees`` at the chosen mtry.
    """

    n_trees: int = 500
    n_trees_try: int = 50
    mtry: int | None = None
    tune: bool = True
    step_factor: float = 1.5
    improve: float = 0.01
    min_leaf: int = 1


@dataclass(frozen=True, eq=False)
class RandomForestModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    n_features: int
    mtry: int
    oob_error: float  # from the search forest at the chosen mtry when tuned
    tuning_trace: tuple[tuple[int, float], ...] = ()

    @property
    def n_trees(self) -> int:
        return self.offsets.size - 1

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _trees.forest_votes(self.feature, self.threshold, self.left, self.right, self.value, self.offsets, X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return clamp_proba(self.votes(X).mean(0))


def _grow_forest(X, y, n_trees, mtry, min_leaf, seed, with_oob=True):
    *tree, inbag = _trees.grow_forest(X, y.astype(float), n_trees, mtry, min_leaf, seed % (2**32))
    if not with_oob:
        return tree, float("nan")
    votes = _trees.forest_votes(*tree, X)
    return tree, float(_trees.oob_error(votes, inbag, y.astype(np.int64)))


def fit_random_forest(X: np.ndarray, y: np.ndarray, settings: ForestSettings = ForestSettings(), seed: int = 0):
    X = np.ascontiguousarray(X, dtype=float)
    p = X.shape[1]
    start = settings.mtry if settings.mtry is not None else max(1, int(math.floor(math.sqrt(p))))
    start = min(max(1, start), p)
    trials: dict[int, float] = {}

    def trial(m):
        if m not in trials:
            _, trials[m] = _grow_forest(X, y, settings.n_trees_try, m, settings.min_leaf, derive_seed(seed, 1, m))
        return trials[m]

    if settings.tune and p > 1:
        err0 = trial(start)
        for direction in (-1, 1):
            cur, err_old = start, err0
            while True:
                nxt = max(1, math.ceil(cur / settings.step_factor)) if direction < 0 else min(
                    p, math.floor(cur * settings.step_factor)
                )
                if nxt == cur or err_old == 0:
                    break
                err_cur = trial(nxt)
                if 1.0 - err_cur / err_old <= settings.improve:
                    break
                cur, err_old = nxt, err_cur
        best = min(sorted(trials), key=lambda m: (np.nan_to_num(trials[m], nan=np.inf), m))
    else:
        best = start
    # the final forest's own OOB error is only needed when no search ran
    tree, err = _grow_forest(X, y, settings.n_trees, best, settings.min_leaf, derive_seed(seed, 0), best not in trials)
    if best in trials:
        err = trials[best]
    trace = tuple((m, trials[m]) for m in sorted(trials))
    return RandomForestModel(*tree, n_features=p, mtry=best, oob_error=err, tuning_trace=trace)


@dataclass(frozen=True)
class GbmSettings:
    n_trees: tuple[int, ...] = (50, 100, 150)
    depth: tuple[int, ...] = (1, 2, 3)
    shrinkage: tuple[float, ...] = (0.1, 0.05)
    min_node: tuple[int, ...] = (5, 10)
    n_folds: int = 5


@dataclass(frozen=True, eq=False)
class GbmModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    init_score: float
    n_features: int
    n_trees: int
    depth: int
    shrinkage: float
    min_node: int
    cv_log_loss: float = float("nan")

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _trees.boosted_score(
            self.feature, self.threshold, self.left, self.right, self.value, self.offsets, self.init_score, X
        )

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return clamp_proba(expit(self.decision(X)))


def _log_loss(y, raw):
    # log(1 + exp(-s)) with s = +raw for y=1 and -raw for y=0
    s = np.where(y == 1, raw, -raw)
    return float(np.mean(np.logaddexp(0.0, -s)))


def fit_gbm(X: np.ndarray, y: np.ndarray, settings: GbmSettings = GbmSettings(), seed: int = 0) -> GbmModel:
    """Logistic-loss boosting tuned by k-fold cross-validated log-loss.

    Each (depth, shrinkage, min_node) combination is boosted once per fold
    up to the largest tree count; smaller counts are read off the staged
    predictions.
    """
    X = np.ascontiguousarray(X, dtype=float)
    yf = y.astype(float)
    n = X.shape[0]
    folds = np.array_split(np.random.default_rng(seed).permutation(n), min(settings.n_folds, n))
    max_trees = max(settings.n_trees)
    stages = sorted(settings.n_trees)
    results = []
    for depth, shrink, min_node in itertools.product(settings.depth, settings.shrinkage, settings.min_node):
        losses = np.zeros(len(stages))
        for val in folds:
            tr = np.setdiff1d(np.arange(n), val)
            *_, staged = _trees.boost(X[tr], yf[tr], max_trees, depth, min_node, shrink, X[val])
            for j, s in enumerate(stages):
                losses[j] += _log_loss(y[val], staged[s - 1]) * val.size / n
        for j, s in enumerate(stages):
            results.append((losses[j], s, depth, shrink, min_node))
    # first minimum in grid order
    loss, n_trees, depth, shrink, min_node = min(results, key=lambda r: r[0])
    empty = np.empty((0, X.shape[1]))
    *tree, f0, _ = _trees.boost(X, yf, n_trees, depth, min_node, shrink, empty)
    return GbmModel(*tree, init_score=float(f0), n_features=X.shape[1], n_trees=n_trees, depth=depth,
                    shrinkage=shrink, min_node=min_node, cv_log_loss=loss)
