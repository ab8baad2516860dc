import math

import numpy as np
import pytest
from scipy import stats

from tempsel import analytic
from tempsel.dataset import LabeledDataset
from tempsel.errors import InvalidInputError
from tempsel.model import GaussianHead, SoftmaxHead, TemperedModel
from tempsel.network import NetworkSpec
from tempsel.predictive import (
    PAPER_BETA_GRID,
    PredictiveDensity,
    accuracy,
    evaluate,
    grid_search,
    lpd,
    mse,
    point_predict,
    smpd_logdensity,
    tmpd_logdensity,
)


def bias_only_regression(sigma2=1.0):
    """1-input affine model with zero slope: each sample is just a mean (its bias)."""
    return TemperedModel(NetworkSpec((1, 1)), GaussianHead(sigma2))


def means(*mus):
    return np.array([[0.0, m] for m in mus])


def test_two_component_mixture_example():
    pd = PredictiveDensity("SM", means(1.0, -1.0), bias_only_regression())
    assert abs(smpd_logdensity(pd, [0.0], 0.0) - (-1.418939)) < 1e-6
    assert abs(smpd_logdensity(pd, [0.0], 0.0) - stats.norm.logpdf(0, 1, 1)) < 1e-14


def test_single_and_duplicated_samples(rng):
    model = TemperedModel(NetworkSpec((2, 3, 1)), GaussianHead(0.5))
    theta = rng.standard_normal(model.num_params)
    x, y = rng.standard_normal(2), 0.3
    one = PredictiveDensity("SM", theta[None], model)
    two = PredictiveDensity("SM", np.stack([theta, theta]), model)
    plain = float(model.loglik(theta, 1.0, LabeledDataset(x[None], [y]))[0])
    assert abs(smpd_logdensity(one, x, y) - plain) < 1e-14
    assert abs(smpd_logdensity(two, x, y) - plain) < 1e-14


def test_tm_component_variance():
    pd = PredictiveDensity("TM", means(0.2), bias_only_regression(0.6), beta=3.0)
    assert abs(tmpd_logdensity(pd, [0.0], 1.0) - stats.norm.logpdf(1.0, 0.2, math.sqrt(0.2))) < 1e-14


def test_kind_checks():
    pd = PredictiveDensity("SM", means(0.0), bias_only_regression())
    with pytest.raises(InvalidInputError):
        tmpd_logdensity(pd, [0.0], 0.0)
    with pytest.raises(InvalidInputError):
        PredictiveDensity("XX", means(0.0), bias_only_regression())
    with pytest.raises(InvalidInputError):
        PredictiveDensity("SM", np.zeros((0, 2)), bias_only_regression())


def random_predictive(rng, kind_head):
    if kind_head == "gauss":
        model = TemperedModel(NetworkSpec((3, 4, 1)), GaussianHead(0.3))
        data = LabeledDataset(rng.standard_normal((20, 3)), rng.standard_normal(20))
    else:
        model = TemperedModel(NetworkSpec((3, 4, 3)), SoftmaxHead(3))
        data = LabeledDataset(rng.standard_normal((20, 3)), rng.integers(0, 3, 20), num_classes=3)
    samples = rng.standard_normal((7, model.num_params))
    return model, samples, data


@pytest.mark.parametrize("head", ["gauss", "softmax"])
def test_sm_tm_coincide_at_beta_one(rng, head):
    model, samples, data = random_predictive(rng, head)
    sm = PredictiveDensity("SM", samples, model)
    tm = PredictiveDensity("TM", samples, model, 1.0)
    np.testing.assert_array_equal(sm.logdensity(data), tm.logdensity(data))


@pytest.mark.parametrize("head", ["gauss", "softmax"])
def test_jensen_lower_bound(rng, head):
    model, samples, data = random_predictive(rng, head)
    for pd in (PredictiveDensity("SM", samples, model), PredictiveDensity("TM", samples, model, 4.0)):
        comp = pd.component_logpdf(data)
        assert np.all(pd.logdensity(data) >= comp.mean(axis=0) - 1e-12)


def test_regression_point_predictions_identical(rng):
    model, samples, data = random_predictive(rng, "gauss")
    sm = PredictiveDensity("SM", samples, model)
    tm = PredictiveDensity("TM", samples, model, 17.0)
    np.testing.assert_array_equal(sm.point_predict(data.inputs), tm.point_predict(data.inputs))
    by_hand = np.mean([model.outputs(s, data.inputs[:1])[0, 0] for s in samples])
    assert abs(point_predict(sm, data.inputs[0]) - by_hand) < 1e-12


def test_logsumexp_stability():
    pd = PredictiveDensity("SM", means(0.0, 1e3), bias_only_regression(1e-6))
    v = smpd_logdensity(pd, [0.0], 0.0)
    assert math.isfinite(v) and abs(v - (stats.norm.logpdf(0, 0, 1e-3) - math.log(2))) < 1e-9
    # both components around -1e6 or lower
    far = PredictiveDensity("SM", means(1.0, 1.001), bias_only_regression(1e-6))
    assert math.isfinite(smpd_logdensity(far, [0.0], 0.0))


def test_lpd_examples(rng):
    pd = PredictiveDensity("SM", means(1.0, -1.0, 0.5), bias_only_regression(0.8))
    ys = [0.1, -0.7, 2.0]
    data = LabeledDataset(np.zeros((3, 1)), ys)
    manual = 0.0
    for y in ys:
        manual += math.log(sum(stats.norm.pdf(y, m, math.sqrt(0.8)) for m in (1.0, -1.0, 0.5)) / 3)
    assert abs(lpd(pd, data) - manual / 3) < 1e-12
    single = LabeledDataset(np.zeros((1, 1)), [0.1])
    assert lpd(pd, single) == smpd_logdensity(pd, [0.0], 0.1)
    with pytest.raises(InvalidInputError):
        lpd(pd, LabeledDataset(np.zeros((0, 1)), np.zeros(0)))


def test_lpd_of_true_density_is_negative_entropy(rng):
    pd = PredictiveDensity("SM", means(0.4), bias_only_regression(2.0))
    y = rng.normal(0.4, math.sqrt(2.0), 200000)
    entropy = 0.5 * math.log(2 * math.pi * math.e * 2.0)
    assert abs(lpd(pd, LabeledDataset(np.zeros((len(y), 1)), y)) + entropy) < 0.01


def test_classification_point_predictions():
    model = TemperedModel(NetworkSpec((1, 3)), SoftmaxHead(3))
    # two samples whose logits (bias only) both favour class 2
    s1 = np.array([0, 0, 0, 0.1, 0.2, 2.0])
    s2 = np.array([0, 0, 0, 0.3, -1.0, 1.0])
    pd = PredictiveDensity("SM", np.stack([s1, s2]), model)
    assert point_predict(pd, np.array([0.5])) == 2
    one = PredictiveDensity("SM", s1[None], model)
    assert point_predict(one, np.array([0.0])) == int(np.argmax(s1[3:]))


def test_mse_and_accuracy():
    pd = PredictiveDensity("SM", means(0.0), bias_only_regression())
    perfect = LabeledDataset(np.zeros((4, 1)), np.zeros(4))
    assert mse(pd, perfect) == 0.0
    y = np.random.default_rng(0).standard_normal(100000)
    y = (y - y.mean()) / y.std()
    assert abs(mse(pd, LabeledDataset(np.zeros((len(y), 1)), y)) - 1.0) < 1e-9

    model = TemperedModel(NetworkSpec((1, 2)), SoftmaxHead(2))
    theta = np.array([[1.0, -1.0, 0.0, 0.0]])  # logits (x, -x): predicts 0 when x > 0
    cls = PredictiveDensity("SM", theta, model)
    data = LabeledDataset(np.array([[1.0], [2.0], [-1.0], [-3.0]]), [0, 0, 1, 0], num_classes=2)
    assert accuracy(cls, data) == 0.75
    with pytest.raises(InvalidInputError):
        mse(cls, data)
    with pytest.raises(InvalidInputError):
        accuracy(pd, perfect)


def test_evaluate_keys(rng):
    model, samples, data = random_predictive(rng, "softmax")
    assert set(evaluate(samples, model, 2.0, data)) == {"lpd_sm", "lpd_tm", "accuracy", "accuracy_tm"}
    model, samples, data = random_predictive(rng, "gauss")
    assert set(evaluate(samples, model, 2.0, data)) == {"lpd_sm", "lpd_tm", "mse"}


def conjugate_problem(seed=0, n=60, d=2):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    X, y = analytic.linreg_truth_draws(w, 0.5, n, rng)
    Xt, yt = analytic.linreg_truth_draws(w, 0.5, 200, rng)
    X1 = np.hstack([X, np.ones((n, 1))])
    setup = analytic.ConjugateLinRegSetup(X1, y, 0.3, 2.0)
    model = TemperedModel(NetworkSpec((d, 1)), GaussianHead(0.3))
    return setup, model, LabeledDataset(Xt, yt, "test"), np.hstack([Xt, np.ones((200, 1))])


def test_tmpd_matches_closed_form_within_mc_error():
    setup, model, test, Xt1 = conjugate_problem()
    beta = 2.5
    draws = analytic.linreg_sample_posterior(setup, beta, 10000, np.random.default_rng(1))
    pd = PredictiveDensity("TM", draws, model, beta)
    comp = pd.component_logpdf(test)  # (S, n)
    exact = analytic.linreg_tmpd_logdensity(setup, beta, Xt1, test.targets)
    # MC standard error of the mixture density, propagated to the log scale
    dens = np.exp(comp - comp.max(axis=0))
    se = dens.std(axis=0, ddof=1) / np.sqrt(dens.shape[0]) / dens.mean(axis=0)
    assert np.all(np.abs(pd.logdensity(test) - exact) < 3 * se + 1e-12)


def test_default_grid_and_single_grid():
    assert PAPER_BETA_GRID == (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)
    setup, model, test, _ = conjugate_problem()
    draws = lambda beta: analytic.linreg_sample_posterior(setup, beta, 50, np.random.default_rng(0))
    res = grid_search([3.0], draws, test, test, model)
    assert res.selected_beta == {"lpd_sm": 3.0, "lpd_tm": 3.0, "mse": 3.0}


def test_grid_rows_match_closed_form():
    # with n = 2000 the posterior is narrow enough that 4000 draws resolve the TM-PD even at beta = 1000
    setup, model, test, Xt1 = conjugate_problem(seed=2, n=2000)
    S = 4000
    draws = lambda beta: analytic.linreg_sample_posterior(setup, beta, S, np.random.default_rng(int(beta * 10)))
    res = grid_search(PAPER_BETA_GRID, draws, test, test, model)
    for row in res.rows:
        pd = PredictiveDensity("TM", draws(row.beta), model, row.beta)
        comp = pd.component_logpdf(test)
        dens = np.exp(comp - comp.max(axis=0))
        pointwise_se = dens.std(axis=0, ddof=1) / np.sqrt(S) / dens.mean(axis=0)
        exact = float(np.mean(analytic.linreg_tmpd_logdensity(setup, row.beta, Xt1, test.targets)))
        assert abs(row.test["lpd_tm"] - exact) < 3 * pointwise_se.mean() + 1e-12


def test_grid_failures_and_ties():
    setup, model, test, _ = conjugate_problem()
    fixed = analytic.linreg_sample_posterior(setup, 1.0, 20, np.random.default_rng(0))

    def pipeline(beta):
        if beta == 10.0:
            raise FloatingPointError("diverged")
        return fixed

    res = grid_search([3.0, 1.0, 10.0], pipeline, test, test, model)
    failed = [r for r in res.rows if r.failed]
    assert len(failed) == 1 and failed[0].beta == 10.0 and "diverged" in failed[0].error
    # SM-PD and mse do not depend on beta with identical samples: tie broken toward the smaller beta
    assert res.selected_beta["lpd_sm"] == 1.0 and res.selected_beta["mse"] == 1.0
    np.testing.assert_array_equal(res.betas, [3.0, 1.0, 10.0])
    with pytest.raises(InvalidInputError):
        grid_search([], pipeline, test, test, model)
