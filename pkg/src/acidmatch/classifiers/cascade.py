"""Two-stage naive Bayes: weed out clear non-matches, then decide among look-alikes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from ..errors import InsufficientDataError
from .models import _as_matrix, fit, TrainedModel


@dataclass
class CascadeModel:
    stage1: TrainedModel
    stage2: TrainedModel
    stage1_threshold: float = 0.5
    manifest: dict = field(default_factory=dict)

    family = "Cascade"
    strategy = "skip_feature"

    def decision_function(self, X) -> np.ndarray:
        X = _as_matrix(X)
        out = np.full(len(X), -np.inf)
        passed = self.stage1.predict_matrix(X) >= self.stage1_threshold
        if passed.any():
            out[passed] = self.stage2.decision_function(X[passed])
        return out

    def predict_matrix(self, X) -> np.ndarray:
        return expit(self.decision_function(X))


def fit_cascade(X_random, y_random, X_hard, y_hard, config: Optional[dict] = None, seed: int = 0) -> CascadeModel:
    config = dict(config or {})
    th = float(config.pop("stage1_threshold", 0.5))
    stage1 = fit("NaiveBayesKDE", X_random, y_random, config, seed)
    X = np.vstack([_as_matrix(X_random), _as_matrix(X_hard)])
    y = np.concatenate([np.asarray(y_random, dtype=bool), np.asarray(y_hard, dtype=bool)])
    # stage 2 sees matches and the similar-name non-matches that survive stage 1
    from_hard = np.r_[np.zeros(len(y_random), dtype=bool), np.ones(len(y_hard), dtype=bool)]
    keep = (stage1.predict_matrix(X) >= th) & (y | from_hard)
    if y[keep].all() or not y[keep].any():
        raise InsufficientDataError("stage-2 training set is single-class after stage-1 filtering")
    stage2 = fit("NaiveBayesKDE", X[keep], y[keep], config, seed)
    return CascadeModel(stage1, stage2, th, {"seed": seed, "n_stage2": int(keep.sum())})


def train_cascade(ds_random, ds_hard, featurizer, config: Optional[dict] = None, seed: int = 0) -> CascadeModel:
    return fit_cascade(featurizer.pairs(ds_random.id1, ds_random.id2), ds_random.label,
                       featurizer.pairs(ds_hard.id1, ds_hard.id2), ds_hard.label, config, seed)
