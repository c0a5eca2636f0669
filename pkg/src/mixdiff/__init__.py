"""Mixup-based out-of-distribution detection for models reachable only through their outputs."""

from .backend import LinearSoftmaxModel, LocalBackend, RemoteBackend, fit_logistic, grad_input
from .core import (
    AccessLevel,
    AuxStrategy,
    BaseScore,
    LabeledDataset,
    MixDiffConfig,
    ModelOutput,
    OracleSelection,
    OracleSet,
    load_dataset,
    save_dataset,
)
from .engine import MixDiffResult, attack_dataset, mixdiff_score, pgd_attack, run_detection
from .errors import MixDiffError
from .metrics import ScoredSet, aucpr, auroc, fpr_at_tpr, metric_report, threshold_mass
from .scoring import ScoreFn
from .theory import find_calibrating_aux, omega_terms, verify_taylor_decay

__version__ = "0.1.0"

__all__ = [
    "AccessLevel",
    "AuxStrategy",
    "BaseScore",
    "LabeledDataset",
    "LinearSoftmaxModel",
    "LocalBackend",
    "MixDiffConfig",
    "MixDiffError",
    "MixDiffResult",
    "ModelOutput",
    "OracleSelection",
    "OracleSet",
    "RemoteBackend",
    "ScoreFn",
    "ScoredSet",
    "attack_dataset",
    "aucpr",
    "auroc",
    "find_calibrating_aux",
    "fit_logistic",
    "fpr_at_tpr",
    "grad_input",
    "load_dataset",
    "metric_report",
    "mixdiff_score",
    "omega_terms",
    "pgd_attack",
    "run_detection",
    "save_dataset",
    "threshold_mass",
    "verify_taylor_decay",
]
