import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import trapezoid
from scipy.special import expit

from acidmatch.classifiers import (
    FAMILIES,
    TrainedModel,
    dumps_model,
    fit,
    fit_cascade,
    kde_logpdf,
    load_model,
    loads_model,
    lr_objective,
    predict_proba,
    save_model,
    silverman_bandwidth,
    svm_objective,
    svm_subgradient_descent,
    train,
)
from acidmatch.classifiers.models import _nb_loglik, _prepare_nb
from acidmatch.core import FeatureVector
from acidmatch.errors import ModelFormatError, ModelVersionError, NonFiniteFeatureError, SingleClassError
from acidmatch.evaluation import pr_curve_from_scores

FAMILY_STRATEGIES = [(f, None) for f in FAMILIES] + [("DecisionTree", "impute_negative_one")]


def toy(n=20):
    X = np.vstack([np.ones((n, 5)), np.zeros((n, 5))])
    return X, np.r_[np.ones(n, bool), np.zeros(n, bool)]


def noisy(n=300, seed=0, missing=0.2):
    rng = np.random.default_rng(seed)
    y = rng.random(n) < 0.4
    X = rng.normal(0.3 + 0.4 * y[:, None], 0.2, (n, 5))
    X[:, 4] = rng.poisson(1 + 4 * y)
    X[rng.random((n, 5)) < missing] = np.nan
    return X, y


@pytest.fixture(scope="module")
def noisy_models():
    X, y = noisy()
    return {(f, s): fit(f, X, y, seed=1, strategy=s) for f, s in FAMILY_STRATEGIES}


# --- training ---------------------------------------------------------------------

@pytest.mark.parametrize("family,strategy", FAMILY_STRATEGIES)
def test_separable_toy_set(family, strategy):
    X, y = toy()
    model = fit(family, X, y, seed=0, strategy=strategy)
    p = model.predict_matrix(X)
    assert ((p >= 0.5) == y).all()
    assert predict_proba(model, FeatureVector(1.0, 1.0, 1.0, 1.0, 1.0)) > 0.99


@pytest.mark.parametrize("family", FAMILIES)
def test_single_class_rejected(family):
    X, _ = toy()
    with pytest.raises(SingleClassError):
        fit(family, X, np.ones(len(X), bool))


def test_non_finite_rejected():
    X, y = toy()
    X[0, 0] = np.inf
    with pytest.raises(NonFiniteFeatureError):
        fit("LogisticRegression", X, y)


def test_incompatible_strategy():
    X, y = toy()
    with pytest.raises(ValueError):
        fit("NaiveBayesKDE", X, y, strategy="impute_median")
    with pytest.raises(ValueError):
        TrainedModel("LinearSVM", "all_branches", {})


@pytest.mark.parametrize("family,strategy", FAMILY_STRATEGIES)
def test_deterministic_given_seed(family, strategy):
    X, y = noisy(seed=3)
    a = fit(family, X, y, seed=7, strategy=strategy)
    b = fit(family, X, y, seed=7, strategy=strategy)
    assert a.digest() == b.digest()
    np.testing.assert_array_equal(a.predict_matrix(X), b.predict_matrix(X))


def test_train_records_provenance(small_world):
    from acidmatch.sampling import build_random_sampled, undersample
    from acidmatch.similarity import Featurizer

    sn1, sn2, gt = small_world
    ds = undersample(build_random_sampled(gt, sn1, sn2, 60, seed=0), seed=0)
    model = train("LogisticRegression", ds, Featurizer(sn1, sn2), seed=4)
    assert model.manifest["provenance"] == ["random_sampled"]
    assert model.manifest["seed"] == 4 and model.manifest["n_train"] == 120


# --- prediction ----------------------------------------------------------------------

def test_all_missing_under_nb_is_prior():
    X, y = noisy()
    model = fit("NaiveBayesKDE", X, y)
    p = predict_proba(model, np.full(5, np.nan))
    assert p == pytest.approx(y.mean(), abs=1e-12)


def test_all_missing_under_svm_is_imputed_vector():
    X, y = noisy()
    model = fit("LinearSVM", X, y)
    prm = model.params
    assert prm["fill"] == [-1.0] * 5
    z = (np.full(5, -1.0) - np.asarray(prm["mean"])) / np.asarray(prm["scale"])
    a, b = prm["platt"]
    expected = expit(a * (z @ np.asarray(prm["w"]) + prm["b"]) + b)
    p = predict_proba(model, np.full(5, np.nan))
    assert np.isfinite(p) and p == pytest.approx(expected, rel=1e-12)


vectors = arrays(float, (8, 5), elements=st.none().map(lambda _: np.nan) | st.floats(-2, 40))


@settings(max_examples=40)
@given(vectors)
def test_probability_range(noisy_models, X):
    for model in noisy_models.values():
        p = model.predict_matrix(X)
        assert ((0.0 <= p) & (p <= 1.0)).all()


def test_recall_nonincreasing_in_threshold(noisy_models):
    X, y = noisy(seed=9)
    for model in noisy_models.values():
        curve = pr_curve_from_scores(model.predict_matrix(X), y, 101)
        recalls = [pt.recall for pt in curve]
        assert all(a >= b for a, b in zip(recalls, recalls[1:]))


# --- analytic checks --------------------------------------------------------------------

def test_lr_gradient_matches_central_differences():
    X, y = noisy(seed=5, missing=0.0)
    Z = (X - X.mean(0)) / X.std(0)
    rng = np.random.default_rng(11)
    eps = 1e-6
    for _ in range(10):
        theta = rng.normal(0, 1, 6)
        _, g = lr_objective(theta, Z, y.astype(float), 1e-3)
        num = np.array([(lr_objective(theta + eps * e, Z, y, 1e-3)[0] - lr_objective(theta - eps * e, Z, y, 1e-3)[0])
                        / (2 * eps) for e in np.eye(6)])
        assert np.linalg.norm(g - num) / max(np.linalg.norm(g), 1e-12) <= 1e-5


def test_svm_objective_nonincreasing():
    X, y = toy()
    ys = np.where(y, 1.0, -1.0)
    theta, history = svm_subgradient_descent(X, ys, lam=1e-2, epochs=200)
    assert all(b <= a for a, b in zip(history, history[1:]))
    assert history[-1] < history[0]
    assert svm_objective(theta, X, ys, 1e-2) == pytest.approx(history[-1])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_svm_objective_nonincreasing_on_noisy_data(seed):
    X, y = noisy(seed=seed, missing=0.0)
    _, history = svm_subgradient_descent(X, np.where(y, 1.0, -1.0), lam=1e-3, epochs=100)
    assert all(b <= a for a, b in zip(history, history[1:]))


def _integral(values, h):
    lo, hi = values.min() - 3 * h, values.max() + 3 * h
    grid = np.linspace(lo, hi, 20001)
    return trapezoid(np.exp(kde_logpdf(values, h, grid)), grid)


def test_fitted_nb_densities_integrate_to_one(noisy_models):
    # the friends count of non-matches is a point mass at 0, the hardest case
    model = noisy_models[("NaiveBayesKDE", None)]
    for per_class in model.params["kde"]:
        for kde in per_class:
            v = np.asarray(kde["values"])
            assert _integral(v, kde["h"]) == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=25)
@given(arrays(float, st.integers(1, 200), elements=st.floats(0, 1) | st.sampled_from([0.0, 1.0])))
def test_kde_normalization_property(v):
    h = silverman_bandwidth(v)
    assert _integral(v, h) == pytest.approx(1.0, abs=1e-3)


def test_nb_grid_matches_exact_density(noisy_models):
    model = noisy_models[("NaiveBayesKDE", None)]
    rng = np.random.default_rng(3)
    for row in _prepare_nb(model.params):
        for entry in row:
            v, h, grid, _ = entry
            x = np.concatenate([rng.uniform(grid[0] - h, grid[-1] + h, 20000), v + 3 * h * (1 + 1e-6)])
            assert np.abs(_nb_loglik(entry, x) - kde_logpdf(v, h, x)).max() < 1e-4


def test_silverman_rule():
    v = np.random.default_rng(0).normal(0, 1, 1000)
    sigma = v.std(ddof=1)
    iqr = np.subtract(*np.percentile(v, [75, 25])) / 1.34
    assert silverman_bandwidth(v) == pytest.approx(0.9 * min(sigma, iqr) * 1000 ** -0.2)


# --- cascade ---------------------------------------------------------------------------

def _hard_world(seed):
    """Matches agree on everything; hard negatives share names but not the rest."""
    rng = np.random.default_rng(seed)
    n = 400
    pos = np.column_stack([rng.uniform(0.85, 1, n), rng.uniform(0.8, 1, n), rng.uniform(0.6, 1, n),
                           rng.uniform(0.7, 1, n), rng.poisson(4, n)])
    easy = np.column_stack([rng.uniform(0, 0.6, n), rng.uniform(0, 0.6, n), rng.uniform(0, 0.3, n),
                            rng.uniform(0.3, 0.7, n), rng.poisson(0.2, n)])
    hard = np.column_stack([rng.uniform(0.85, 1, n), rng.uniform(0.7, 1, n), rng.uniform(0, 0.4, n),
                            rng.uniform(0.3, 0.7, n), rng.poisson(0.3, n)])
    return pos, easy, hard


def test_cascade_weeds_out_name_mismatch():
    pos, easy, hard = _hard_world(0)
    model = fit_cascade(np.vstack([pos, easy]), np.r_[np.ones(400), np.zeros(400)], hard, np.zeros(400))
    p = model.predict_matrix(np.array([[0.0, 0.0, np.nan, np.nan, np.nan]]))
    assert p[0] == 0.0


def test_cascade_routes_name_twins_to_stage_two():
    pos, easy, hard = _hard_world(1)
    model = fit_cascade(np.vstack([pos, easy]), np.r_[np.ones(400), np.zeros(400)], hard, np.zeros(400))
    twin = np.array([[1.0, 1.0, np.nan, 0.5, np.nan]])
    assert model.stage1.predict_matrix(twin)[0] >= 0.5
    assert model.predict_matrix(twin)[0] == pytest.approx(model.stage2.predict_matrix(twin)[0])
    assert model.predict_matrix(twin)[0] < 0.5


def test_cascade_precision_not_worse_than_plain_nb():
    pos, easy, hard = _hard_world(2)
    y_rand = np.r_[np.ones(400), np.zeros(400)]
    cascade = fit_cascade(np.vstack([pos, easy]), y_rand, hard, np.zeros(400))
    plain = fit("NaiveBayesKDE", np.vstack([pos, easy]), y_rand)
    tpos, teasy, thard = _hard_world(3)
    Xt = np.vstack([tpos, teasy, thard])
    yt = np.r_[np.ones(400, bool), np.zeros(800, bool)]
    recall = 0.8

    def precision_at(model):
        s = model.decision_function(Xt)
        th = np.sort(s[yt])[::-1][int(recall * yt.sum()) - 1]
        sel = s >= th
        return yt[sel].mean()

    assert precision_at(cascade) >= precision_at(plain)


# --- persistence -----------------------------------------------------------------------

@pytest.mark.parametrize("family,strategy", FAMILY_STRATEGIES)
def test_roundtrip_bit_identical(noisy_models, tmp_path, family, strategy):
    model = noisy_models[(family, strategy)]
    save_model(model, tmp_path / "m.txt")
    loaded = load_model(tmp_path / "m.txt")
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 10, (1000, 5))
    X[rng.random(X.shape) < 0.3] = np.nan
    np.testing.assert_array_equal(model.predict_matrix(X), loaded.predict_matrix(X))
    assert loaded.manifest == model.manifest
    assert (tmp_path / "m.txt").read_text().startswith("ACIDMATCH-MODEL v1\n")


def test_cascade_roundtrip():
    pos, easy, hard = _hard_world(0)
    model = fit_cascade(np.vstack([pos, easy]), np.r_[np.ones(400), np.zeros(400)], hard, np.zeros(400))
    again = loads_model(dumps_model(model))
    X = np.vstack([pos[:50], hard[:50]])
    np.testing.assert_array_equal(model.predict_matrix(X), again.predict_matrix(X))


def test_bad_magic(tmp_path):
    (tmp_path / "m.txt").write_text("SOMETHING-ELSE v1\n{}\n")
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "m.txt")
    (tmp_path / "b.bin").write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "b.bin")


def test_version_mismatch(noisy_models):
    text = dumps_model(noisy_models[("LinearSVM", None)])
    with pytest.raises(ModelVersionError):
        loads_model(text.replace("ACIDMATCH-MODEL v1", "ACIDMATCH-MODEL v0", 1))


def test_corrupt_body(noisy_models):
    text = dumps_model(noisy_models[("LinearSVM", None)])
    with pytest.raises(ModelFormatError):
        loads_model(text[: len(text) // 2])
