"""Training, evaluation, gain measurement and reporting."""
from .config import FEASIBILITY_TEST, STRATEGIES, WARM_START, ConfigError, ExperimentConfig, parse_overrides
from .gain import GainReport, GainSample, compute_gain, gain_percent, predicted_active_set, truth_predictions
from .metrics import (ClassificationMetrics, Confusion, auc, bce, classification_metrics, confusion, mse,
                      roc_curve)
from .report import aggregate, report, write_roc
from .training import (Targets, TrainedRun, TrainingError, evaluate_classification, evaluate_regression,
                       load_run, model_specs, train_model)

__all__ = [
    "ExperimentConfig", "ConfigError", "parse_overrides", "WARM_START", "FEASIBILITY_TEST", "STRATEGIES",
    "GainReport", "GainSample", "compute_gain", "gain_percent", "predicted_active_set", "truth_predictions",
    "ClassificationMetrics", "Confusion", "auc", "bce", "classification_metrics", "confusion", "mse",
    "roc_curve", "aggregate", "report", "write_roc", "Targets", "TrainedRun", "TrainingError",
    "evaluate_classification", "evaluate_regression", "load_run", "model_specs", "train_model",
]
