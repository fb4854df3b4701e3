"""Probability-emitting binary classifiers on FPC score vectors."""

from __future__ import annotations

import enum
from typing import Any, Union

import numpy as np

from ..errors import DegenerateLabelsError, ShapeError
from .forest import (
    ForestSettings,
    GbmModel,
    GbmSettings,
    RandomForestModel,
    fit_gbm,
    fit_random_forest,
)
from .linear import (
    PROB_EPS,
    LdaModel,
    LogitModel,
    NaiveBayesModel,
    QdaModel,
    clamp_proba,
    fit_lda,
    fit_logit,
    fit_naive_bayes,
    fit_qda,
)


class ClassifierKind(str, enum.Enum):
    LOGIT = "logit"
    LDA = "lda"
    QDA = "qda"
    NAIVE_BAYES = "naivebayes"
    RANDOM_FOREST = "rf"
    GBM = "gbm"

    @classmethod
    def parse(cls, name: str | ClassifierKind) -> ClassifierKind:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        aliases = {"nb": "naivebayes", "randomforest": "rf", "logistic": "logit"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown classifier {name!r}; choose from {[k.value for k in cls]}") from None


ClassifierModel = Union[LogitModel, LdaModel, QdaModel, NaiveBayesModel, RandomForestModel, GbmModel]


def check_training_matrix(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"expected (n, K) scores and n labels, got {X.shape} and {y.shape}")
    if not np.all(np.isfinite(X)):
        raise ShapeError("scores contain non-finite entries")
    if not np.all((y == 0) | (y == 1)):
        raise ShapeError("labels must be 0/1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise DegenerateLabelsError(f"all {y.size} training labels equal {y[0]}")
    return X, y


def fit(kind: ClassifierKind | str, X, y, tuning: Any = None, seed: int = 0) -> ClassifierModel:
    """Fit a classifier of ``kind`` on scores ``X`` (n x K) and 0/1 labels ``y``.

    ``tuning`` is a :class:`ForestSettings` for RF or :class:`GbmSettings`
    for GBM; other kinds ignore it.
    """
    kind = ClassifierKind.parse(kind)
    X, y = check_training_matrix(X, y)
    if kind is ClassifierKind.LOGIT:
        return fit_logit(X, y)
    if kind is ClassifierKind.LDA:
        return fit_lda(X, y)
    if kind is ClassifierKind.QDA:
        return fit_qda(X, y)
    if kind is ClassifierKind.NAIVE_BAYES:
        return fit_naive_bayes(X, y)
    if kind is ClassifierKind.RANDOM_FOREST:
        return fit_random_forest(X, y, tuning if isinstance(tuning, ForestSettings) else ForestSettings(), seed)
    return fit_gbm(X, y, tuning if isinstance(tuning, GbmSettings) else GbmSettings(), seed)


def kind_of(model: ClassifierModel) -> ClassifierKind:
    return {
        LogitModel: ClassifierKind.LOGIT,
        LdaModel: ClassifierKind.LDA,
        QdaModel: ClassifierKind.QDA,
        NaiveBayesModel: ClassifierKind.NAIVE_BAYES,
        RandomForestModel: ClassifierKind.RANDOM_FOREST,
        GbmModel: ClassifierKind.GBM,
    }[type(model)]


def n_features(model: ClassifierModel) -> int:
    if isinstance(model, LogitModel):
        return model.coef.size
    if isinstance(model, (LdaModel, QdaModel, NaiveBayesModel)):
        return model.means.shape[1]
    return model.n_features


def predict_proba(model: ClassifierModel, scores) -> np.ndarray | float:
    """P(Y = 1 | scores), clamped to ``[1e-12, 1 - 1e-12]``.

    Accepts one score vector (returns a float) or an (m, K) matrix.
    """
    x = np.asarray(scores, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != n_features(model):
        raise ShapeError(f"model expects {n_features(model)} scores, got shape {x.shape}")
    p = model.predict_proba(X)
    return float(p[0]) if single else p


def predict_label(model: ClassifierModel, scores) -> np.ndarray | int:
    p = predict_proba(model, scores)
    if np.ndim(p) == 0:
        return int(p > 0.5)
    return (p > 0.5).astype(np.int64)


__all__ = [
    "ClassifierKind",
    "ClassifierModel",
    "ForestSettings",
    "GbmSettings",
    "LogitModel",
    "LdaModel",
    "QdaModel",
    "NaiveBayesModel",
    "RandomForestModel",
    "GbmModel",
    "PROB_EPS",
    "clamp_proba",
    "fit",
    "predict_proba",
    "predict_label",
    "kind_of",
]
