import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpcbag import classifiers
from fpcbag.classifiers import (
    PROB_EPS,
    ClassifierKind,
    ForestSettings,
    GbmSettings,
    LdaModel,
    LogitModel,
    fit,
    predict_label,
    predict_proba,
)
from fpcbag.classifiers import _trees
from fpcbag.classifiers.linear import fit_lda, fit_qda
from fpcbag.errors import DegenerateLabelsError, SeparationWarning, ShapeError

import oracles

FAST_RF = ForestSettings(n_trees=100, n_trees_try=30)
FAST_GBM = GbmSettings(n_trees=(20, 40), depth=(1, 2), shrinkage=(0.1,), min_node=(5,), n_folds=3)
TUNING = {ClassifierKind.RANDOM_FOREST: FAST_RF, ClassifierKind.GBM: FAST_GBM}


def _two_gaussians(rng, n=200, k=3, shift=1.0):
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, k))
    X[:, 0] += shift * (2 * y - 1)
    return X, y


def test_kind_parsing():
    assert ClassifierKind.parse("NB") is ClassifierKind.NAIVE_BAYES
    assert ClassifierKind.parse("random_forest") is ClassifierKind.RANDOM_FOREST
    with pytest.raises(ValueError):
        ClassifierKind.parse("svm")


def test_single_class_rejected():
    with pytest.raises(DegenerateLabelsError):
        fit("lda", np.zeros((4, 2)), np.zeros(4))


def test_shape_checks(rng):
    X, y = _two_gaussians(rng, 20)
    with pytest.raises(ShapeError):
        fit("lda", X, y[:-1])
    model = fit("lda", X, y)
    with pytest.raises(ShapeError):
        predict_proba(model, np.zeros((2, 5)))


def test_logit_matches_statsmodels(rng):
    sm = pytest.importorskip("statsmodels.api")
    X, y = _two_gaussians(rng, 300, shift=0.6)
    model = fit("logit", X, y)
    ref = sm.Logit(y, sm.add_constant(X)).fit(disp=0)
    np.testing.assert_allclose(np.r_[model.intercept, model.coef], ref.params, atol=1e-7)


def test_logit_separation_warns():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    with pytest.warns(SeparationWarning):
        model = fit("logit", X, y)
    p = predict_proba(model, X)
    assert np.all((p >= 0) & (p <= 1))


def test_null_logit_is_half():
    model = LogitModel(0.0, np.zeros(3), True, 0)
    np.testing.assert_allclose(predict_proba(model, np.random.default_rng(0).normal(size=(5, 3))), 0.5)


def test_lda_symmetric_boundary():
    model = LdaModel(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.eye(2), np.array([0.5, 0.5]))
    assert predict_proba(model, np.zeros(2)) == pytest.approx(0.5, abs=1e-15)
    d = model.discriminants(np.array([[0.0, 3.0], [0.0, -7.0]]))
    np.testing.assert_allclose(d[:, 0], d[:, 1], atol=1e-14)


def test_lda_matches_sklearn(rng):
    lda = pytest.importorskip("sklearn.discriminant_analysis")
    X, y = _two_gaussians(rng, 120, k=4, shift=0.8)
    ours = fit_lda(X, y)
    ref = lda.LinearDiscriminantAnalysis(solver="lsqr").fit(X, y)
    # sklearn pools with divisor n, ours with n - 2
    n = y.size
    coef = np.linalg.solve(ours.covariance, ours.means[1] - ours.means[0])
    np.testing.assert_allclose(coef, ref.coef_[0] * (n - 2) / n, rtol=1e-8)


def test_qda_matches_sklearn(rng):
    qda = pytest.importorskip("sklearn.discriminant_analysis")
    X, y = _two_gaussians(rng, 150, k=3, shift=0.5)
    X[y == 1] *= 1.7
    ours = fit("qda", X, y)
    ref = qda.QuadraticDiscriminantAnalysis(reg_param=0.0).fit(X, y)
    Xt = rng.normal(size=(50, 3)) * 1.5
    np.testing.assert_allclose(predict_proba(ours, Xt), ref.predict_proba(Xt)[:, 1], atol=1e-9)


def test_qda_reduces_to_lda(rng):
    X, y = _two_gaussians(rng, 100, k=3)
    lda = fit_lda(X, y)
    qda = fit_qda(X, y)
    forced = qda.__class__(qda.means, np.stack([lda.covariance] * 2), lda.priors)
    Xt = rng.normal(size=(40, 3))
    np.testing.assert_allclose(forced.log_odds(Xt), lda.log_odds(Xt), atol=1e-8)


def test_naive_bayes_near_bayes_rule():
    rng = np.random.default_rng(4)
    mu0, mu1 = np.array([0.0, 0.0]), np.array([1.0, 0.5])
    v0, v1 = np.array([1.0, 2.0]), np.array([1.5, 1.0])

    def draw(n):
        y = rng.integers(0, 2, n)
        X = np.where(y[:, None] == 1, rng.normal(mu1, np.sqrt(v1), (n, 2)), rng.normal(mu0, np.sqrt(v0), (n, 2)))
        return X, y

    X, y = draw(5000)
    model = fit("naivebayes", X, y)
    Xt, yt = draw(200_000)
    err = np.mean(predict_label(model, Xt) != yt)
    bayes = oracles.gaussian_bayes_risk_diag(mu0, v0, mu1, v1)
    assert abs(err - bayes) < 0.02


def test_lda_boundary_is_affine(rng):
    X, y = _two_gaussians(rng, 200, k=3, shift=0.7)
    for kind in ("lda", "logit"):
        model = fit(kind, X, y)
        pts = []
        for direction in rng.normal(size=(3, 3)):
            base = rng.normal(size=3) * 0.2
            lo, hi = base - 10 * direction, base + 10 * direction
            f = lambda x: predict_proba(model, x) - 0.5
            if f(lo) * f(hi) > 0:
                lo, hi = base - 10 * np.eye(3)[0], base + 10 * np.eye(3)[0]
            for _ in range(200):
                mid = (lo + hi) / 2
                if f(lo) * f(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            pts.append((lo + hi) / 2)
        # all boundary points satisfy one affine equation
        A = np.column_stack([np.ones(3), np.array(pts)])
        normal = np.r_[model.intercept, model.coef] if kind == "logit" else None
        if normal is None:
            normal = np.r_[0.0, np.linalg.solve(model.covariance, model.means[1] - model.means[0])]
            normal[0] = model.log_odds(np.zeros((1, 3)))[0]
        np.testing.assert_allclose(A @ normal, 0.0, atol=1e-8)


def test_label_threshold():
    model = LogitModel(0.0, np.array([1.0]), True, 0)
    logit = lambda p: np.log(p / (1 - p))
    assert predict_label(model, np.array([logit(0.7)])) == 1
    assert predict_label(model, np.array([0.0])) == 0
    assert predict_label(model, np.array([logit(0.49)])) == 0


def test_rf_unanimous_vote_clamped():
    X = np.r_[np.zeros((10, 1)), np.ones((10, 1))]
    y = np.repeat([0, 1], 10)
    model = fit("rf", X, y, ForestSettings(tune=False))
    assert model.n_trees == 500
    assert predict_proba(model, np.array([5.0])) == 1 - PROB_EPS
    assert predict_proba(model, np.array([-5.0])) == PROB_EPS


def test_rf_learns_signal(rng):
    X, y = _two_gaussians(rng, 300, shift=1.5)
    Xt, yt = _two_gaussians(rng, 300, shift=1.5)
    model = fit("rf", X, y, FAST_RF, seed=1)
    assert np.mean(predict_label(model, Xt) != yt) < 0.15
    assert 0 <= model.oob_error < 0.25
    assert 1 <= model.mtry <= 3


def test_full_tree_fits_training_data(rng):
    X = rng.normal(size=(60, 2))
    y = (X[:, 0] * X[:, 1] > 0).astype(float)
    idx = np.arange(60)
    w = np.ones(60)
    order = _trees.global_order(X)
    cap = 121
    arrays = [np.empty(cap, np.int32), np.empty(cap), np.empty(cap, np.int32), np.empty(cap, np.int32), np.empty(cap)]
    leaf_of = np.empty(60, np.int64)
    _trees._grow(X, y, idx, w, order, 2, 1 << 30, 1, *arrays, leaf_of)
    np.testing.assert_array_equal(arrays[4][leaf_of], y)


def test_oob_error_counts_only_out_of_bag():
    votes = np.array([[1, 0, 1], [0, 0, 1], [1, 1, 0]], np.int8)
    inbag = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], np.int32)
    y = np.array([1, 1, 0])
    # sample 0: trees 0,2 vote 1,1 -> 1 ok; sample 1: tree 1,2 vote 0,1 -> tie -> 0 wrong; sample 2: trees 0,1 -> 1 wrong
    assert _trees.oob_error(votes, inbag, y) == pytest.approx(2 / 3)


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_boosting_matches_sklearn(rng, depth):
    ens = pytest.importorskip("sklearn.ensemble")
    X = rng.normal(size=(150, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=150) > 0).astype(float)
    Xt = rng.normal(size=(40, 3))
    *tree, f0, staged = _trees.boost(X, y, 30, depth, 5, 0.1, Xt)
    ref = ens.GradientBoostingClassifier(
        n_estimators=30, learning_rate=0.1, max_depth=depth, min_samples_leaf=5,
        criterion="squared_error", subsample=1.0, random_state=0,
    ).fit(X, y)
    np.testing.assert_allclose(staged[-1], ref.decision_function(Xt), atol=1e-8)


def test_gbm_fit_and_tuning(rng):
    X, y = _two_gaussians(rng, 200, shift=1.2)
    model = fit("gbm", X, y, FAST_GBM, seed=2)
    assert model.n_trees in (20, 40) and model.depth in (1, 2)
    assert np.isfinite(model.cv_log_loss)
    Xt, yt = _two_gaussians(rng, 400, shift=1.2)
    assert np.mean(predict_label(model, Xt) != yt) < 0.2


@given(st.integers(0, 2**31), st.sampled_from(list(ClassifierKind)))
def test_probability_range_and_determinism(seed, kind):
    rng = np.random.default_rng(seed)
    X, y = _two_gaussians(rng, 40, k=2, shift=rng.uniform(0, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        a = fit(kind, X, y, TUNING.get(kind), seed=seed % 1000)
        b = fit(kind, X, y, TUNING.get(kind), seed=seed % 1000)
    Xt = rng.normal(size=(25, 2)) * 10
    pa, pb = predict_proba(a, Xt), predict_proba(b, Xt)
    assert np.all((pa >= PROB_EPS) & (pa <= 1 - PROB_EPS))
    assert np.array_equal(pa, pb)


@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_tree_labels_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    X, y = _two_gaussians(rng, 40, k=2)
    Xt = rng.normal(size=(20, 2))
    for kind in (ClassifierKind.RANDOM_FOREST, ClassifierKind.GBM):
        a = fit(kind, X, y, TUNING[kind], seed=3)
        b = fit(kind, X * c, y, TUNING[kind], seed=3)
        assert np.array_equal(predict_label(a, Xt), predict_label(b, Xt * c))


def test_kind_of_round_trip(rng):
    X, y = _two_gaussians(rng, 40)
    for kind in ClassifierKind:
        assert classifiers.kind_of(fit(kind, X, y, TUNING.get(kind))) is kind
