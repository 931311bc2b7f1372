"""The four classifier families over (n, 5) feature matrices with NaN as MISSING."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import erf, expit, logsumexp
from scipy.stats import norm

from ..core import AttributeKind, FeatureVector
from ..errors import NonFiniteFeatureError, SingleClassError
from ..rng import stream

FAMILIES = ("NaiveBayesKDE", "LogisticRegression", "LinearSVM", "DecisionTree")
STRATEGIES = {
    "NaiveBayesKDE": ("skip_feature",),
    "LogisticRegression": ("impute_median",),
    "LinearSVM": ("impute_negative_one",),
    "DecisionTree": ("all_branches", "impute_negative_one"),
}
FRIENDS_COL = AttributeKind.FRIENDS.slot
_GRID = 2049
_BANDWIDTH_FLOOR = 1e-3
_LEAF_PRIOR = 0.1
KERNEL_RADIUS = 3.0
TAIL_WEIGHT = 1e-4
_KERNEL_MASS = float(erf(KERNEL_RADIUS / np.sqrt(2)))


@dataclass
class TrainedModel:
    family: str
    strategy: str
    params: dict
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in STRATEGIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.strategy not in STRATEGIES[self.family]:
            raise ValueError(f"strategy {self.strategy!r} is incompatible with {self.family}")
        self._cache = None

    def decision_function(self, X) -> np.ndarray:
        """Log-odds of a match; ranks pairs even where p rounds to 0 or 1."""
        X = _as_matrix(X)
        if self._cache is None:
            self._cache = _PREPARE[self.family](self.params)
        return _PREDICT[self.family](self.params, self._cache, X, self.strategy)

    def predict_matrix(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def digest(self) -> str:
        blob = json.dumps({"family": self.family, "strategy": self.strategy, "params": self.params},
                          sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, FeatureVector):
        X = X.as_array()
    X = np.asarray(X, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def predict_proba(model, fv) -> float | np.ndarray:
    """Match probability for one FeatureVector, or an array for a matrix."""
    single = isinstance(fv, FeatureVector) or np.asarray(fv).ndim == 1
    p = model.predict_matrix(fv)
    return float(p[0]) if single else p


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=bool)
    if len(X) != len(y):
        raise ValueError("X and y differ in length")
    if np.isinf(X).any():
        raise NonFiniteFeatureError("feature matrix contains infinite values")
    if y.all() or not y.any():
        raise SingleClassError("training data needs both match and non-match examples")
    return X, y


# --- naive Bayes with per-feature Gaussian KDE ----------------------------------------

def silverman_bandwidth(v: np.ndarray) -> float:
    n = len(v)
    if n < 2:
        return _BANDWIDTH_FLOOR
    sigma = float(np.std(v, ddof=1))
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sigma
    return max(0.9 * spread * n ** -0.2, _BANDWIDTH_FLOOR)


def kde_logpdf(values: np.ndarray, h: float, x: np.ndarray) -> np.ndarray:
    """Log density of the fitted per-feature KDE, evaluated in blocks.

    Gaussian kernels are truncated at KERNEL_RADIUS bandwidths and
    renormalized, so the estimate carries all of its mass within that
    distance of the data. A ``TAIL_WEIGHT`` share goes to one broad Gaussian
    over the sample; the density stays positive everywhere and likelihood
    ratios stay finite.
    """
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.empty(len(x))
    kernel_norm = -np.log(len(values) * h * np.sqrt(2 * np.pi) * _KERNEL_MASS)
    center = 0.5 * (values.min() + values.max())
    scale = float(np.std(values)) + KERNEL_RADIUS * h
    for s in range(0, len(x), 2048):
        z = (x[s:s + 2048, None] - values[None, :]) / h
        with np.errstate(divide="ignore"):
            body = logsumexp(np.where(np.abs(z) <= KERNEL_RADIUS, -0.5 * z * z, -np.inf), axis=1) + kernel_norm
        out[s:s + 2048] = body
    tail = norm.logpdf(x, center, scale)
    return np.logaddexp(np.log1p(-TAIL_WEIGHT) + out, np.log(TAIL_WEIGHT) + tail)


def _fit_nb(X, y, config, seed) -> dict:
    params = {"log_prior": [], "kde": []}
    # a class bandwidth never drops below the pooled one; point masses would
    # otherwise give near-infinite likelihood ratios just off the mass
    pooled = []
    for j in range(X.shape[1]):
        v = X[:, j]
        v = v[~np.isnan(v)]
        pooled.append(silverman_bandwidth(v) if len(v) else _BANDWIDTH_FLOOR)
    for cls in (False, True):
        Xc = X[y == cls]
        params["log_prior"].append(float(np.log(len(Xc) / len(X))))
        per_feature = []
        for j in range(X.shape[1]):
            v = Xc[:, j]
            v = np.sort(v[~np.isnan(v)])
            h = max(silverman_bandwidth(v), pooled[j]) if len(v) else None
            per_feature.append({"values": v.tolist(), "h": h})
        params["kde"].append(per_feature)
    return params


def _prepare_nb(params):
    grids = []
    for per_feature in params["kde"]:
        row = []
        for kde in per_feature:
            if not kde["values"]:
                row.append(None)
                continue
            v, h = np.asarray(kde["values"]), kde["h"]
            # nodes hug both sides of every kernel edge, so interpolation
            # never smears the truncation step across a grid cell
            edges = np.unique(np.concatenate([v - KERNEL_RADIUS * h, v + KERNEL_RADIUS * h]))
            eps = 1e-9 * h
            grid = np.unique(np.concatenate([np.linspace(v[0] - 6 * h, v[-1] + 6 * h, _GRID),
                                             edges - eps, edges + eps]))
            row.append((v, h, grid, kde_logpdf(v, h, grid)))
        grids.append(row)
    return grids


def _nb_loglik(entry, x: np.ndarray) -> np.ndarray:
    v, h, grid, logf = entry
    out = np.interp(x, grid, logf)
    outside = (x < grid[0]) | (x > grid[-1])
    if outside.any():
        out[outside] = kde_logpdf(v, h, x[outside])
    return out


def _predict_nb(params, grids, X, strategy) -> np.ndarray:
    score = np.tile(np.asarray(params["log_prior"], dtype=float), (len(X), 1))
    for j in range(X.shape[1]):
        entries = [grids[0][j], grids[1][j]]
        col = X[:, j]
        obs = ~np.isnan(col)
        if not obs.any() or any(e is None for e in entries):
            continue
        for c in (0, 1):
            score[obs, c] += _nb_loglik(entries[c], col[obs])
    return score[:, 1] - score[:, 0]


# --- shared linear preprocessing ----------------------------------------------------

def _linear_transform(X, params) -> np.ndarray:
    X = X.copy()
    lc = params.get("log_col")
    if lc is not None:
        X[:, lc] = np.log1p(np.maximum(X[:, lc], 0.0))
    fill = np.asarray(params["fill"])
    miss = np.isnan(X)
    X[miss] = np.broadcast_to(fill, X.shape)[miss]
    return (X - np.asarray(params["mean"])) / np.asarray(params["scale"])


def _linear_setup(X, strategy, config) -> dict:
    log_col = config.get("log_col", FRIENDS_COL if X.shape[1] == len(AttributeKind) else None)
    Z = X.copy()
    if log_col is not None:
        Z[:, log_col] = np.log1p(np.maximum(Z[:, log_col], 0.0))
    if strategy == "impute_median":
        med = np.nanmedian(np.where(np.isnan(Z).all(axis=0), 0.0, Z), axis=0)
        fill = np.where(np.isnan(med), 0.0, med)
    else:
        fill = np.full(Z.shape[1], -1.0)
    params = {"log_col": log_col, "fill": fill.tolist(), "mean": [0.0] * Z.shape[1], "scale": [1.0] * Z.shape[1]}
    if config.get("standardize", True):
        T = _linear_transform(X, params)
        sd = T.std(axis=0)
        params["mean"] = T.mean(axis=0).tolist()
        params["scale"] = np.where(sd > 1e-12, sd, 1.0).tolist()
    return params


# --- logistic regression ----------------------------------------------------------------

def lr_objective(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    """Mean log-likelihood minus (lam/2)|w|^2, and its gradient; theta = (w, b)."""
    w, b = theta[:-1], theta[-1]
    z = Z @ w + b
    ll = np.mean(y * z - np.logaddexp(0.0, z)) - 0.5 * lam * w @ w
    r = (y - expit(z)) / len(y)
    grad = np.append(Z.T @ r - lam * w, r.sum())
    return float(ll), grad


def _fit_lr(X, y, config, seed) -> dict:
    lam = float(config.get("l2", 1e-3))
    params = _linear_setup(X, "impute_median", config)
    Z = _linear_transform(X, params)
    yf = y.astype(float)

    def neg(theta):
        ll, g = lr_objective(theta, Z, yf, lam)
        return -ll, -g

    res = minimize(neg, np.zeros(Z.shape[1] + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": 1000, "gtol": 1e-10, "ftol": 1e-14})
    params.update({"w": res.x[:-1].tolist(), "b": float(res.x[-1]), "l2": lam})
    return params


def _predict_lr(params, cache, X, strategy) -> np.ndarray:
    Z = _linear_transform(X, params)
    return Z @ np.asarray(params["w"]) + params["b"]


# --- linear SVM -------------------------------------------------------------------------

def svm_objective(theta, Z, ys, lam) -> float:
    w, b = theta[:-1], theta[-1]
    return float(0.5 * lam * w @ w + np.mean(np.maximum(0.0, 1.0 - ys * (Z @ w + b))))


def svm_subgradient_descent(Z, ys, lam, epochs=300, step=1.0) -> tuple[np.ndarray, list[float]]:
    """Full-batch hinge subgradient descent with step halving.

    A step is accepted only when it does not increase the objective, so the
    recorded per-epoch objective is nonincreasing by construction.
    """
    theta = np.zeros(Z.shape[1] + 1)
    obj = svm_objective(theta, Z, ys, lam)
    history = [obj]
    for _ in range(epochs):
        w, b = theta[:-1], theta[-1]
        active = ys * (Z @ w + b) < 1.0
        g = np.append(lam * w - (ys[active, None] * Z[active]).sum(axis=0) / len(ys), -ys[active].sum() / len(ys))
        if not g.any():
            break
        eta = step
        for _ in range(40):
            cand = theta - eta * g
            cobj = svm_objective(cand, Z, ys, lam)
            if cobj <= obj:
                theta, obj = cand, cobj
                break
            eta *= 0.5
        else:
            history.append(obj)
            break
        step = min(2 * eta, 1e3)
        history.append(obj)
    return theta, history


def _platt(margins, y, ridge: float = 1e-4) -> tuple[float, float]:
    """Logistic link p = expit(a*m + b) on training margins.

    A small ridge on the slope keeps ``a`` finite on separable data.
    """
    t = y.astype(float)

    def neg(ab):
        z = ab[0] * margins + ab[1]
        r = expit(z) - t
        loss = np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * ridge * ab[0] ** 2
        return float(loss), np.array([np.mean(r * margins) + ridge * ab[0], np.mean(r)])

    res = minimize(neg, np.array([1.0, 0.0]), jac=True, method="L-BFGS-B")
    return float(res.x[0]), float(res.x[1])


def auc(scores, y) -> float:
    """Area under the ROC curve via the rank statistic, ties counted half."""
    from scipy.stats import rankdata

    y = np.asarray(y, dtype=bool)
    n_pos, n_neg = y.sum(), (~y).sum()
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    r = rankdata(scores)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def kfold_indices(n: int, k: int, seed: int, y=None) -> list[np.ndarray]:
    """Stratified fold assignment when ``y`` is given."""
    rng = stream(seed, "kfold")
    fold = np.empty(n, dtype=np.int64)
    groups = [np.arange(n)] if y is None else [np.flatnonzero(y), np.flatnonzero(~np.asarray(y, dtype=bool))]
    for g in groups:
        perm = rng.permutation(g)
        fold[perm] = np.arange(len(perm)) % k
    return [np.flatnonzero(fold == i) for i in range(k)]


def _svm_fit_raw(Z, y, lam, epochs):
    theta, history = svm_subgradient_descent(Z, np.where(y, 1.0, -1.0), lam, epochs)
    return theta, history


def _fit_svm(X, y, config, seed) -> dict:
    params = _linear_setup(X, "impute_negative_one", config)
    Z = _linear_transform(X, params)
    epochs = int(config.get("epochs", 300))
    grid = config.get("l2_grid", [1e-4, 1e-3, 1e-2, 1e-1])
    if "l2" in config:
        lam, cv = float(config["l2"]), None
    else:
        k = min(int(config.get("folds", 10)), int(y.sum()), int((~y).sum()))
        cv = {}
        folds = kfold_indices(len(y), k, seed, y) if k >= 2 else []
        for cand in grid:
            scores = []
            for test in folds:
                train = np.setdiff1d(np.arange(len(y)), test)
                if y[train].all() or not y[train].any() or y[test].all() or not y[test].any():
                    continue
                th, _ = _svm_fit_raw(Z[train], y[train], cand, epochs)
                scores.append(auc(Z[test] @ th[:-1] + th[-1], y[test]))
            cv[str(cand)] = float(np.mean(scores)) if scores else float("nan")
        valid = {c: s for c, s in cv.items() if not np.isnan(s)}
        lam = float(max(valid, key=lambda c: (valid[c], float(c)))) if valid else float(grid[0])
    theta, history = _svm_fit_raw(Z, y, lam, epochs)
    a, b = _platt(Z @ theta[:-1] + theta[-1], y)
    params.update({"w": theta[:-1].tolist(), "b": float(theta[-1]), "l2": lam, "cv_auc": cv,
                   "platt": [a, b], "calibration": "logistic link on training margins",
                   "objective_final": history[-1]})
    return params


def _predict_svm(params, cache, X, strategy) -> np.ndarray:
    Z = _linear_transform(X, params)
    m = Z @ np.asarray(params["w"]) + params["b"]
    a, b = params["platt"]
    return a * m + b


# --- decision tree ----------------------------------------------------------------------

def _gini_best_split(x, y, w, min_leaf):
    """Best threshold on observed values; returns (gain, thr, w_left, w_right) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    cw = np.cumsum(ws)
    cp = np.cumsum(ws * ys)
    total, pos = cw[-1], cp[-1]
    distinct = np.flatnonzero(xs[1:] > xs[:-1])
    if len(distinct) == 0:
        return None
    wl, pl = cw[distinct], cp[distinct]
    wr, pr = total - wl, pos - pl
    ok = (wl >= min_leaf) & (wr >= min_leaf)
    if not ok.any():
        return None
    gl = 1 - (pl / wl) ** 2 - ((wl - pl) / wl) ** 2
    gr = 1 - (pr / wr) ** 2 - ((wr - pr) / wr) ** 2
    parent = 1 - (pos / total) ** 2 - ((total - pos) / total) ** 2
    gain = parent - (wl * gl + wr * gr) / total
    gain[~ok] = -np.inf
    k = int(np.argmax(gain))
    thr = 0.5 * (xs[distinct[k]] + xs[distinct[k] + 1])
    return float(gain[k]), float(thr), float(wl[k]), float(wr[k])


def _grow(X, y, w, depth, cfg) -> dict:
    total = w.sum()
    pos = (w * y).sum()
    # m-estimate toward 1/2 with a tiny pseudo-count: pure leaves stay near
    # 0 or 1 but rank by their support instead of tying
    leaf = {"p": float((pos + 0.5 * _LEAF_PRIOR) / (total + _LEAF_PRIOR)), "w": float(total)}
    if depth >= cfg["max_depth"] or total < 2 * cfg["min_leaf"] or pos in (0.0, total):
        return leaf
    best = None
    for j in range(X.shape[1]):
        obs = ~np.isnan(X[:, j])
        if obs.sum() < 2:
            continue
        r = _gini_best_split(X[obs, j], y[obs], w[obs], cfg["min_leaf"])
        if r is None:
            continue
        frac = w[obs].sum() / total
        gain = frac * r[0]
        if best is None or gain > best[0] + 1e-15:
            best = (gain, j, r[1], r[2] / (r[2] + r[3]))
    if best is None or best[0] <= 1e-12:
        return leaf
    _, j, thr, fl = best
    col = X[:, j]
    miss = np.isnan(col)
    left = miss | (col <= thr)
    right = miss | (col > thr)
    wl = np.where(miss, w * fl, w)[left]
    wr = np.where(miss, w * (1 - fl), w)[right]
    return {"feature": j, "thr": thr, "left_frac": fl,
            "left": _grow(X[left], y[left], wl, depth + 1, cfg),
            "right": _grow(X[right], y[right], wr, depth + 1, cfg)}


def _fit_dt(X, y, config, seed, strategy="all_branches") -> dict:
    cfg = {"max_depth": int(config.get("max_depth", 8)), "min_leaf": float(config.get("min_leaf", 5))}
    if strategy == "impute_negative_one":
        X = np.where(np.isnan(X), -1.0, X)
    return {"tree": _grow(X, y.astype(float), np.ones(len(y)), 0, cfg), **cfg}


def _tree_predict(node, X) -> np.ndarray:
    if "p" in node:
        return np.full(len(X), node["p"])
    out = np.empty(len(X))
    col = X[:, node["feature"]]
    miss = np.isnan(col)
    left = ~miss & (col <= node["thr"])
    right = ~miss & (col > node["thr"])
    if left.any():
        out[left] = _tree_predict(node["left"], X[left])
    if right.any():
        out[right] = _tree_predict(node["right"], X[right])
    if miss.any():
        f = node["left_frac"]
        out[miss] = f * _tree_predict(node["left"], X[miss]) + (1 - f) * _tree_predict(node["right"], X[miss])
    return out


def _predict_dt(params, cache, X, strategy) -> np.ndarray:
    if strategy == "impute_negative_one":
        X = np.where(np.isnan(X), -1.0, X)
    p = _tree_predict(params["tree"], X)
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


_FIT: dict[str, Callable] = {
    "NaiveBayesKDE": _fit_nb,
    "LogisticRegression": _fit_lr,
    "LinearSVM": _fit_svm,
    "DecisionTree": _fit_dt,
}
_PREPARE = {
    "NaiveBayesKDE": _prepare_nb,
    "LogisticRegression": lambda p: None,
    "LinearSVM": lambda p: None,
    "DecisionTree": lambda p: None,
}
_PREDICT = {
    "NaiveBayesKDE": _predict_nb,
    "LogisticRegression": _predict_lr,
    "LinearSVM": _predict_svm,
    "DecisionTree": _predict_dt,
}


def fit(family: str, X, y, config: Optional[dict] = None, seed: int = 0, strategy: Optional[str] = None,
        manifest: Optional[dict] = None) -> TrainedModel:
    """Fit ``family`` on a feature matrix; the strategy defaults per family."""
    if family not in _FIT:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    X, y = check_training_data(X, y)
    config = dict(config or {})
    strategy = strategy or STRATEGIES[family][0]
    if strategy not in STRATEGIES[family]:
        raise ValueError(f"strategy {strategy!r} is incompatible with {family}")
    if family == "DecisionTree":
        params = _fit_dt(X, y, config, seed, strategy)
    else:
        params = _FIT[family](X, y, config, seed)
    info = {"seed": seed, "hyperparameters": config, "n_train": int(len(y)), "n_pos": int(y.sum())}
    info.update(manifest or {})
    return TrainedModel(family, strategy, params, info)


def train(family: str, ds, featurizer, config: Optional[dict] = None, seed: int = 0,
          strategy: Optional[str] = None) -> TrainedModel:
    """Fit ``family`` on a PairDataset using ``featurizer`` for the features."""
    X = featurizer.pairs(ds.id1, ds.id2)
    provenance = sorted(set(ds.provenance.tolist()))
    return fit(family, X, ds.label, config, seed, strategy, {"provenance": provenance})
