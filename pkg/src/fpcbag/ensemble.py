"""Bootstrap ensembles of FPCA + classifier replicas and their aggregation rules.

Every replica owns its FPCA fit: a curve is always scored through the
mean, eigenfunctions and noise variance estimated from that replica's
resample before its classifier sees the scores.

The rule functions come in two layers. The ``*_from_*`` helpers act on
precomputed replica outputs (a ``(B, m)`` matrix of probabilities or
votes), which is what the experiment driver uses. The ``predict_*``
functions take a fitted :class:`EnsembleModel` and curves.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Any, Iterable, Mapping, Sequence

import numpy as np

from . import classifiers
from .calibration import CalibrationModel, fit_calibration
from .classifiers import ClassifierKind, ClassifierModel
from .data import FunctionalDataset, SparseCurve, derive_seed
from .errors import FpcbagError, ReplicaError
from .fpca import FpcaConfig, FpcaModel, fit_fpca

MAX_REDRAWS = 20


class AggregationRule(str, enum.Enum):
    SINGLE = "single"
    MAJORITY = "majority"
    OOB_WEIGHT = "oobweight"
    BAYESIAN = "bayesian"

    @classmethod
    def parse(cls, name: str | AggregationRule) -> AggregationRule:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        aliases = {"majorityvote": "majority", "vote": "majority", "oob": "oobweight", "bayes": "bayesian"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown rule {name!r}; choose from {[r.value for r in cls]}") from None


class CalibrationMode(str, enum.Enum):
    ALL_REPLICAS = "all-replicas"
    OOB_ONLY = "oob-only"

    @classmethod
    def parse(cls, name: str | CalibrationMode) -> CalibrationMode:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"all": "all-replicas", "oob": "oob-only"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown calibration mode {name!r}") from None


@dataclass(frozen=True, eq=False)
class Replica:
    fpca: FpcaModel
    classifier: ClassifierModel
    inbag: np.ndarray  # sorted training indices drawn, with repeats
    oob_error: float
    attempts: int = 1

    @property
    def n_components(self) -> int:
        return self.fpca.n_components

    def predict_proba(self, curves: Sequence[SparseCurve]) -> np.ndarray:
        return classifiers.predict_proba(self.classifier, self.fpca.scores(curves))


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """B fitted replicas plus their in-bag bookkeeping.

    ``train_proba[b, i]`` caches replica ``b``'s probability for training
    curve ``i``; OOB errors and calibration inputs are read from it.
    """

    replicas: tuple[Replica, ...]
    classifier_kind: ClassifierKind
    train_ids: tuple[str, ...]
    train_labels: np.ndarray
    train_proba: np.ndarray

    def __post_init__(self):
        if not self.replicas:
            raise ValueError("an ensemble needs at least one replica")

    @property
    def B(self) -> int:
        return len(self.replicas)

    @property
    def oob_errors(self) -> np.ndarray:
        return np.array([r.oob_error for r in self.replicas])

    @property
    def inbag(self) -> tuple[np.ndarray, ...]:
        return tuple(r.inbag for r in self.replicas)

    @property
    def k_values(self) -> np.ndarray:
        return np.array([r.n_components for r in self.replicas])

    def oob_mask(self) -> np.ndarray:
        """``(B, n)`` boolean: training curve ``i`` is out of bag for replica ``b``."""
        mask = np.ones((self.B, len(self.train_ids)), bool)
        for b, r in enumerate(self.replicas):
            mask[b, r.inbag] = False
        return mask

    @property
    def oob_coverage(self) -> bool:
        """True when every training curve is out of bag for some replica."""
        return bool(self.oob_mask().any(0).all())

    def replica_proba(self, curves: Iterable[SparseCurve]) -> np.ndarray:
        """``(B, m)`` probabilities, each replica scoring through its own FPCA."""
        curves = list(curves)
        return np.stack([r.predict_proba(curves) for r in self.replicas])


# rules on precomputed replica outputs


def votes_from_proba(proba: np.ndarray) -> np.ndarray:
    return (np.asarray(proba) > 0.5).astype(np.int64)


def majority_from_votes(votes: np.ndarray) -> np.ndarray:
    votes = np.asarray(votes)
    return (2 * votes.sum(0) > votes.shape[0]).astype(np.int64)


def oob_weights(errors: Sequence[float]) -> np.ndarray:
    """``1 / e_b`` with zero errors replaced by the smallest non-zero error."""
    e = np.asarray(errors, float)
    if np.any(~np.isfinite(e)) or np.any(e < 0):
        raise ValueError("OOB errors must be finite and non-negative")
    positive = e[e > 0]
    if positive.size == 0:
        return np.ones_like(e)
    return 1.0 / np.where(e > 0, e, positive.min())


def oob_weighted_from_votes(votes: np.ndarray, errors: Sequence[float]) -> np.ndarray:
    w = oob_weights(errors)
    score = w @ np.asarray(votes, float) / w.sum()
    return (score > 0.5).astype(np.int64)


def aggregate_from_proba(proba: np.ndarray) -> np.ndarray:
    return np.asarray(proba, float).mean(0)


def bayesian_from_proba(proba: np.ndarray, calib: CalibrationModel) -> tuple[np.ndarray, np.ndarray]:
    pi = np.asarray(calib.predict_proba(aggregate_from_proba(proba)), float)
    return pi, (pi > 0.5).astype(np.int64)


# fitting


def _draw_replica(
    train: FunctionalDataset,
    labels: np.ndarray,
    fpca_config: FpcaConfig,
    seed: int,
    b: int,
):
    n = len(train)
    last = None
    for attempt in range(MAX_REDRAWS):
        rng = np.random.default_rng(derive_seed(seed, b, attempt))
        idx = np.sort(rng.integers(0, n, size=n))
        y = labels[idx]
        if y.min() == y.max():
            last = "resample contains a single class"
            continue
        if np.unique(idx).size == n:
            last = "resample leaves no curve out of bag"
            continue
        sample = train.subset(idx)
        try:
            fpca = fit_fpca(sample, fpca_config)
            scores = fpca.scores(sample)
        except FpcbagError as exc:
            last = f"FPCA failed: {exc}"
            continue
        return idx, fpca, scores, y, attempt
    raise ReplicaError(f"replica {b}: no usable resample in {MAX_REDRAWS} draws ({last})")


def bootstrap_fit_many(
    train: FunctionalDataset,
    kinds: Sequence[ClassifierKind | str],
    B: int = 100,
    fpca_config: FpcaConfig = FpcaConfig(),
    tuning: Mapping[ClassifierKind, Any] | None = None,
    seed: int = 0,
) -> dict[ClassifierKind, EnsembleModel]:
    """One ensemble per classifier kind on shared resamples and FPCA fits.

    Resampling, redraws and FPCA do not depend on the classifier, so each
    returned ensemble equals what :func:`bootstrap_fit` gives for its kind
    with the same seed.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    kinds = [ClassifierKind.parse(k) for k in kinds]
    tuning = dict(tuning or {})
    labels = train.labels
    n = len(train)
    curves = list(train)
    reps: dict[ClassifierKind, list[Replica]] = {k: [] for k in kinds}
    proba: dict[ClassifierKind, np.ndarray] = {k: np.empty((B, n)) for k in kinds}
    for b in range(B):
        idx, fpca, scores, y, attempt = _draw_replica(train, labels, fpca_config, seed, b)
        train_scores = fpca.scores(curves)
        oob = np.ones(n, bool)
        oob[idx] = False
        for kind in kinds:
            clf = classifiers.fit(kind, scores, y, tuning.get(kind), seed=derive_seed(seed, b, attempt, 1))
            p = classifiers.predict_proba(clf, train_scores)
            err = float(np.mean((p[oob] > 0.5) != labels[oob]))
            proba[kind][b] = p
            reps[kind].append(Replica(fpca, clf, idx, err, attempt + 1))
    ids = tuple(str(c.id) for c in curves)
    return {
        k: EnsembleModel(tuple(reps[k]), k, ids, np.asarray(labels).copy(), proba[k]) for k in kinds
    }


def bootstrap_fit(
    train: FunctionalDataset,
    kind: ClassifierKind | str,
    B: int = 100,
    fpca_config: FpcaConfig = FpcaConfig(),
    tuning: Any = None,
    seed: int = 0,
) -> EnsembleModel:
    """Fit B bootstrap replicas of FPCA + ``kind``.

    A resample with a single class, with no out-of-bag curve, or whose
    FPCA fails is redrawn, at most ``MAX_REDRAWS`` times per replica.
    """
    kind = ClassifierKind.parse(kind)
    return bootstrap_fit_many(train, [kind], B, fpca_config, {kind: tuning}, seed)[kind]


# curve-level rules


def _as_list(curves) -> tuple[list[SparseCurve], bool]:
    if isinstance(curves, SparseCurve):
        return [curves], True
    return list(curves), False


def _unwrap(x: np.ndarray, single: bool):
    if not single:
        return x
    v = x[0]
    return int(v) if np.issubdtype(np.asarray(x).dtype, np.integer) else float(v)


def predict_majority(model: EnsembleModel, curves):
    """Majority vote of replica labels; an exact tie goes to class 0."""
    curves, single = _as_list(curves)
    return _unwrap(majority_from_votes(votes_from_proba(model.replica_proba(curves))), single)


def predict_oob_weighted(model: EnsembleModel, curves):
    curves, single = _as_list(curves)
    votes = votes_from_proba(model.replica_proba(curves))
    return _unwrap(oob_weighted_from_votes(votes, model.oob_errors), single)


def aggregate_proba(model: EnsembleModel, curves):
    curves, single = _as_list(curves)
    return _unwrap(aggregate_from_proba(model.replica_proba(curves)), single)


def training_aggregated_probs(
    model: EnsembleModel,
    train: FunctionalDataset | None = None,
    mode: CalibrationMode | str = CalibrationMode.ALL_REPLICAS,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregated training probabilities, labels and the fallback flags.

    In ``oob-only`` mode curve ``i`` averages the replicas where it was out
    of bag; a curve never out of bag falls back to all replicas and is
    flagged. ``train`` defaults to the ensemble's own training set.
    """
    mode = CalibrationMode.parse(mode)
    if train is None or tuple(str(c.id) for c in train) == model.train_ids:
        proba = model.train_proba
        labels = model.train_labels
    else:
        proba = model.replica_proba(train)
        labels = train.labels
    n = proba.shape[1]
    if mode is CalibrationMode.ALL_REPLICAS:
        return proba.mean(0), np.asarray(labels), np.zeros(n, bool)
    if proba is not model.train_proba:
        raise ValueError("oob-only mode needs the ensemble's own training set")
    mask = model.oob_mask()
    counts = mask.sum(0)
    fallback = counts == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_mean = (proba * mask).sum(0) / counts
    return np.where(fallback, proba.mean(0), oob_mean), np.asarray(labels), fallback


def calibrate(
    model: EnsembleModel,
    mode: CalibrationMode | str = CalibrationMode.ALL_REPLICAS,
    prior_scale0: float = 10.0,
    prior_scale1: float = 2.5,
) -> CalibrationModel:
    p, y, _ = training_aggregated_probs(model, None, mode)
    return fit_calibration(p, y, prior_scale0, prior_scale1)


def predict_bayesian(model: EnsembleModel, calib: CalibrationModel, curves):
    """Calibrated probability and label (1 iff probability > 0.5)."""
    curves, single = _as_list(curves)
    pi, label = bayesian_from_proba(model.replica_proba(curves), calib)
    if single:
        return float(pi[0]), int(label[0])
    return pi, label


def write_summary(model: EnsembleModel, fh: IO[str], calib: CalibrationModel | None = None) -> None:
    """Per-replica diagnostics, then the calibration coefficients if given."""
    fh.write("# replicas\n")
    fh.write("replica,n_components,oob_error,noise_variance,distinct_curves,attempts\n")
    for b, r in enumerate(model.replicas):
        fh.write(
            f"{b},{r.n_components},{r.oob_error!r},{r.fpca.noise_variance!r},"
            f"{np.unique(r.inbag).size},{r.attempts}\n"
        )
    if calib is not None:
        fh.write("# calibration\n")
        fh.write("beta0,beta1,prior_scale0,prior_scale1,converged,iterations\n")
        fh.write(
            f"{calib.beta0!r},{calib.beta1!r},{calib.prior_scale0!r},{calib.prior_scale1!r},"
            f"{int(calib.converged)},{calib.iterations}\n"
        )
