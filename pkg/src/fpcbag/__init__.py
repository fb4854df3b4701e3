"""Bagged classification of sparse functional data through FPC scores."""

from .calibration import CalibrationModel, fit_calibration
from .classifiers import ClassifierKind, predict_label, predict_proba
from .data import CsvSchema, FunctionalDataset, SparseCurve, SplitSpec, load_long_csv, sparsify, split, write_long_csv
from .ensemble import (
    AggregationRule,
    CalibrationMode,
    EnsembleModel,
    aggregate_proba,
    bootstrap_fit,
    predict_bayesian,
    predict_majority,
    predict_oob_weighted,
    training_aggregated_probs,
)
from .experiment import ExperimentConfig, ResultsTable, emit_outputs, run_experiment
from .fpca import FpcaConfig, FpcaModel, fit_fpca, pace_scores
from .simulate import ScenarioConfig, generate, scenario

__version__ = "0.1.0"

__all__ = [
    "AggregationRule",
    "CalibrationMode",
    "CalibrationModel",
    "ClassifierKind",
    "CsvSchema",
    "EnsembleModel",
    "ExperimentConfig",
    "FpcaConfig",
    "FpcaModel",
    "FunctionalDataset",
    "ResultsTable",
    "ScenarioConfig",
    "SparseCurve",
    "SplitSpec",
    "aggregate_proba",
    "bootstrap_fit",
    "emit_outputs",
    "fit_calibration",
    "fit_fpca",
    "generate",
    "load_long_csv",
    "pace_scores",
    "predict_bayesian",
    "predict_label",
    "predict_majority",
    "predict_oob_weighted",
    "predict_proba",
    "run_experiment",
    "scenario",
    "sparsify",
    "split",
    "training_aggregated_probs",
    "write_long_csv",
]
