"""Monte Carlo and repeated-split experiments with error tables.

Each repetition is a pure function of the configuration and its index,
so results do not depend on how repetitions are spread over workers.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import classifiers
from .classifiers import ClassifierKind, ForestSettings, GbmSettings
from .data import CsvSchema, FunctionalDataset, SplitSpec, derive_seed, load_long_csv, sparsify, split
from .ensemble import (
    AggregationRule,
    CalibrationMode,
    bayesian_from_proba,
    bootstrap_fit_many,
    calibrate,
    majority_from_votes,
    oob_weighted_from_votes,
    votes_from_proba,
)
from .errors import ExperimentError, FpcbagError
from .fpca import FpcaConfig, fit_fpca
from .simulate import generate, scenario

ALL_CLASSIFIERS = tuple(ClassifierKind)
ALL_RULES = tuple(AggregationRule)
ENSEMBLE_RULES = (AggregationRule.MAJORITY, AggregationRule.OOB_WEIGHT, AggregationRule.BAYESIAN)


@dataclass(frozen=True)
class RealDataSource:
    """A long-format CSV, optionally sparsified, split at random each repetition."""

    path: str
    train_fraction: float
    sparsify_range: tuple[int, int] | None = None
    schema: CsvSchema = CsvSchema()
    domain: tuple[float, float] | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on.

    Exactly one of ``scenario`` and ``real_data`` selects the source.
    ``single_fpca`` configures the FPCA of the Single rule and defaults to
    ``fpca`` (used by every bootstrap replica).
    """

    scenario: int | None = 1
    real_data: RealDataSource | None = None
    classifiers: tuple[ClassifierKind, ...] = ALL_CLASSIFIERS
    rules: tuple[AggregationRule, ...] = ALL_RULES
    repetitions: int = 100
    B: int = 100
    n_train: int | None = None
    n_test: int = 100
    fpca: FpcaConfig = FpcaConfig()
    single_fpca: FpcaConfig | None = None
    calibration_mode: CalibrationMode = CalibrationMode.ALL_REPLICAS
    prior_scale0: float = 10.0
    prior_scale1: float = 2.5
    forest: ForestSettings = ForestSettings()
    gbm: GbmSettings = GbmSettings()
    seed: int = 0
    workers: int = 1
    max_failure_fraction: float = 0.10

    def __post_init__(self):
        object.__setattr__(self, "classifiers", tuple(ClassifierKind.parse(k) for k in self.classifiers))
        object.__setattr__(self, "rules", tuple(AggregationRule.parse(r) for r in self.rules))
        object.__setattr__(self, "calibration_mode", CalibrationMode.parse(self.calibration_mode))
        if (self.scenario is None) == (self.real_data is None):
            raise ValueError("give exactly one of scenario and real_data")
        if self.scenario is not None:
            scenario(self.scenario)  # validates the id
        if not self.classifiers or not self.rules:
            raise ValueError("classifier and rule selections must be nonempty")
        if len(set(self.classifiers)) != len(self.classifiers) or len(set(self.rules)) != len(self.rules):
            raise ValueError("duplicate classifier or rule")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.n_test < 2:
            raise ValueError("n_test must be at least 2")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def tuning(self) -> dict[ClassifierKind, object]:
        return {ClassifierKind.RANDOM_FOREST: self.forest, ClassifierKind.GBM: self.gbm}

    @property
    def ensemble_rules(self) -> tuple[AggregationRule, ...]:
        return tuple(r for r in self.rules if r is not AggregationRule.SINGLE)


@dataclass(frozen=True)
class RepetitionResult:
    rep: int
    errors: np.ndarray | None  # (classifiers, rules) in percent
    k_single: int | None = None
    k_replicas: tuple[int, ...] = ()
    failure: str | None = None


@dataclass(frozen=True, eq=False)
class ResultsTable:
    """Per-repetition test errors (percent) for every (classifier, rule).

    ``errors`` has shape ``(R_ok, n_classifiers, n_rules)`` and holds only
    successful repetitions, listed in ``reps``.
    """

    classifiers: tuple[ClassifierKind, ...]
    rules: tuple[AggregationRule, ...]
    reps: tuple[int, ...]
    errors: np.ndarray
    failures: tuple[tuple[int, str], ...] = ()
    k_single: tuple[int, ...] = ()
    k_replicas: tuple[tuple[int, ...], ...] = ()

    @property
    def n_reps(self) -> int:
        return len(self.reps)

    def mean(self) -> np.ndarray:
        return self.errors.mean(0)

    def sd(self) -> np.ndarray:
        """Standard deviation over repetitions (0 for a single repetition)."""
        if self.n_reps < 2:
            return np.zeros(self.errors.shape[1:])
        return self.errors.std(0, ddof=1)

    def cell(self, kind, rule) -> np.ndarray:
        i = self.classifiers.index(ClassifierKind.parse(kind))
        j = self.rules.index(AggregationRule.parse(rule))
        return self.errors[:, i, j]


def _datasets(config: ExperimentConfig, rep: int, data: FunctionalDataset | None):
    if config.scenario is not None:
        base = scenario(config.scenario)
        if config.n_train is not None:
            base = replace(base, n=config.n_train)
        train = generate(base.with_seed(derive_seed(config.seed, rep, 0)))
        test = generate(replace(base, n=config.n_test).with_seed(derive_seed(config.seed, rep, 1)))
        return train, test
    src = config.real_data
    if src.sparsify_range is not None:
        data = sparsify(data, src.sparsify_range, derive_seed(config.seed, rep, 0))
    return split(data, SplitSpec(src.train_fraction, derive_seed(config.seed, rep, 1)))


def _test_error(pred: np.ndarray, y: np.ndarray) -> float:
    return 100.0 * float(np.mean(np.asarray(pred) != y))


def run_repetition(config: ExperimentConfig, rep: int, data: FunctionalDataset | None = None) -> RepetitionResult:
    """Fit every requested rule for one repetition and score the test set."""
    try:
        with warnings.catch_warnings():
            # separation is expected for some resamples and handled by the fits
            warnings.simplefilter("ignore", classifiers.linear.SeparationWarning)
            return _run_repetition(config, rep, data)
    except (FpcbagError, np.linalg.LinAlgError) as exc:
        return RepetitionResult(rep, None, failure=f"{type(exc).__name__}: {exc}")


def _run_repetition(config: ExperimentConfig, rep: int, data: FunctionalDataset | None) -> RepetitionResult:
    train, test = _datasets(config, rep, data)
    y_test = test.labels
    kinds = config.classifiers
    rules = config.rules
    errors = np.full((len(kinds), len(rules)), np.nan)
    k_single = None
    if AggregationRule.SINGLE in rules:
        fpca = fit_fpca(train, config.single_fpca or config.fpca)
        k_single = fpca.n_components
        X, Xt = fpca.scores(train), fpca.scores(test)
        j = rules.index(AggregationRule.SINGLE)
        for i, kind in enumerate(kinds):
            model = classifiers.fit(kind, X, train.labels, config.tuning.get(kind), seed=derive_seed(config.seed, rep, 3))
            errors[i, j] = _test_error(classifiers.predict_label(model, Xt), y_test)
    k_replicas: tuple[int, ...] = ()
    if config.ensemble_rules:
        ensembles = bootstrap_fit_many(
            train, kinds, config.B, config.fpca, config.tuning, seed=derive_seed(config.seed, rep, 2)
        )
        first = ensembles[kinds[0]]
        k_replicas = tuple(int(k) for k in first.k_values)
        # replicas share their FPCA fits across classifier kinds
        test_scores = [r.fpca.scores(test) for r in first.replicas]
        for i, kind in enumerate(kinds):
            ens = ensembles[kind]
            proba = np.stack(
                [classifiers.predict_proba(r.classifier, s) for r, s in zip(ens.replicas, test_scores)]
            )
            votes = votes_from_proba(proba)
            for j, rule in enumerate(rules):
                if rule is AggregationRule.MAJORITY:
                    errors[i, j] = _test_error(majority_from_votes(votes), y_test)
                elif rule is AggregationRule.OOB_WEIGHT:
                    errors[i, j] = _test_error(oob_weighted_from_votes(votes, ens.oob_errors), y_test)
                elif rule is AggregationRule.BAYESIAN:
                    calib = calibrate(ens, config.calibration_mode, config.prior_scale0, config.prior_scale1)
                    errors[i, j] = _test_error(bayesian_from_proba(proba, calib)[1], y_test)
    return RepetitionResult(rep, errors, k_single, k_replicas)


def _load_source(config: ExperimentConfig) -> FunctionalDataset | None:
    if config.real_data is None:
        return None
    src = config.real_data
    return load_long_csv(src.path, src.schema, src.domain)


def _run_chunk(args) -> list[RepetitionResult]:
    config, reps, data = args
    return [run_repetition(config, r, data) for r in reps]


def run_experiment(config: ExperimentConfig, progress=None) -> ResultsTable:
    """Run all repetitions and collect the error table.

    Failed repetitions are excluded and listed; more than
    ``max_failure_fraction`` of them raises :class:`ExperimentError`.
    ``progress`` is called with each finished :class:`RepetitionResult`.
    """
    data = _load_source(config)
    reps = list(range(config.repetitions))
    results: list[RepetitionResult] = []
    if config.workers == 1:
        for r in reps:
            res = run_repetition(config, r, data)
            results.append(res)
            if progress:
                progress(res)
    else:
        chunks = [[r] for r in reps]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for batch in pool.map(_run_chunk, [(config, c, data) for c in chunks]):
                for res in batch:
                    results.append(res)
                    if progress:
                        progress(res)
    results.sort(key=lambda res: res.rep)
    ok = [res for res in results if res.failure is None]
    failures = tuple((res.rep, res.failure) for res in results if res.failure is not None)
    if len(failures) > config.max_failure_fraction * config.repetitions:
        raise ExperimentError(
            f"{len(failures)} of {config.repetitions} repetitions failed; first: rep {failures[0][0]}: {failures[0][1]}"
        )
    if not ok:
        raise ExperimentError("no repetition succeeded")
    return ResultsTable(
        classifiers=config.classifiers,
        rules=config.rules,
        reps=tuple(res.rep for res in ok),
        errors=np.stack([res.errors for res in ok]),
        failures=failures,
        k_single=tuple(res.k_single for res in ok if res.k_single is not None),
        k_replicas=tuple(res.k_replicas for res in ok),
    )


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def emit_outputs(table: ResultsTable, directory: str | os.PathLike) -> dict[str, Path]:
    """Write summary, long-format errors, running means, failures and K counts."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        name: out / f"{name}.csv"
        for name in ("summary", "errors_long", "trace", "failures", "k_values")
    }
    mean, sd = table.mean(), table.sd()
    cells = [(i, kind, j, rule) for i, kind in enumerate(table.classifiers) for j, rule in enumerate(table.rules)]
    with open(paths["summary"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["classifier", "rule", "mean_error_pct", "se_pct", "n_reps"])
        for i, kind, j, rule in cells:
            w.writerow([kind.value, rule.value, _fmt(mean[i, j]), _fmt(sd[i, j]), table.n_reps])
    with open(paths["errors_long"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "classifier", "rule", "error_pct"])
        for r, rep in enumerate(table.reps):
            for i, kind, j, rule in cells:
                w.writerow([rep + 1, kind.value, rule.value, _fmt(table.errors[r, i, j])])
    running = np.cumsum(table.errors, 0) / np.arange(1, table.n_reps + 1)[:, None, None]
    with open(paths["trace"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "classifier", "rule", "running_mean_pct"])
        for r, rep in enumerate(table.reps):
            for i, kind, j, rule in cells:
                w.writerow([rep + 1, kind.value, rule.value, _fmt(running[r, i, j])])
    with open(paths["failures"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "error"])
        for rep, msg in table.failures:
            w.writerow([rep + 1, msg])
    with open(paths["k_values"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "model", "k"])
        for r, rep in enumerate(table.reps):
            if r < len(table.k_single):
                w.writerow([rep + 1, "single", table.k_single[r]])
            for b, k in enumerate(table.k_replicas[r] if r < len(table.k_replicas) else ()):
                w.writerow([rep + 1, f"replica{b + 1}", k])
    return paths


def read_summary(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
