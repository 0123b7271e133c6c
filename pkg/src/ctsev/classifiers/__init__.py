"""Severity classifiers over per-scan feature vectors."""
from .base import CLASS_VALUES, Model, check_dataset
from .ensemble import DEFAULT_PRIORITY, EnsembleModel, build_ensemble, vote
from .ert import ErtModel, ErtParams, train_ert
from .gboost import GboostModel, GbParams, train_gboost
from .knn import KnnModel, train_knn
from .logreg import LogregModel, LogregParams, loss_and_grad, train_logreg
from .model_io import MODEL_KINDS, load_model, save_model
from .svm import SvmModel, SvmParams, kkt_violation, smo, train_svm

__all__ = [
    "CLASS_VALUES", "Model", "check_dataset",
    "DEFAULT_PRIORITY", "EnsembleModel", "build_ensemble", "vote",
    "ErtModel", "ErtParams", "train_ert",
    "GboostModel", "GbParams", "train_gboost",
    "KnnModel", "train_knn",
    "LogregModel", "LogregParams", "loss_and_grad", "train_logreg",
    "MODEL_KINDS", "load_model", "save_model",
    "SvmModel", "SvmParams", "kkt_violation", "smo", "train_svm",
]
