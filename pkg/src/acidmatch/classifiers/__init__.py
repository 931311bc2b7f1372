"""Binary match classifiers over pairwise feature vectors."""

from .cascade import CascadeModel, fit_cascade, train_cascade
from .models import (
    FAMILIES,
    STRATEGIES,
    TrainedModel,
    auc,
    fit,
    kde_logpdf,
    kfold_indices,
    lr_objective,
    predict_proba,
    silverman_bandwidth,
    svm_objective,
    svm_subgradient_descent,
    train,
)
from .persist import dumps_model, load_model, loads_model, save_model

__all__ = [
    "CascadeModel", "FAMILIES", "STRATEGIES", "TrainedModel", "auc", "dumps_model", "fit", "fit_cascade",
    "kde_logpdf", "kfold_indices", "load_model", "loads_model", "lr_objective", "predict_proba", "save_model",
    "silverman_bandwidth", "svm_objective", "svm_subgradient_descent", "train", "train_cascade",
]
