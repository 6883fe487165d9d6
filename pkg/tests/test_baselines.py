import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from icdenoise.baselines import (
    BaselineKind,
    applicable_kinds,
    bayes_linear,
    bayes_linear_mse,
    bayes_mixture,
    bayes_mixture_general,
    bayes_mixture_zerovar,
    bayes_sphere,
    empirical_projector,
    evaluate_baseline,
    mean_and_stderr,
    ordered_mean,
    predict_baseline,
)
from icdenoise.errors import InvalidArgument
from icdenoise.numerics import RngStream
from icdenoise.tasks import Case, TaskInstance, TaskSpec, sample_dataset, sample_task


def test_linear_bayes_risk_closed_form(linear_spec):
    assert bayes_linear_mse(linear_spec) == pytest.approx(16 / 3)


def test_linear_bayes_monte_carlo(linear_spec):
    b = sample_dataset(linear_spec, 4000, 2, RngStream(5))
    m, se = mean_and_stderr(((predict_baseline("bayes_linear", b) - b.targets) ** 2).sum(axis=1))
    assert abs(m - 16 / 3) < 4 * se


def test_linear_bayes_is_gaussian_posterior_mean(gen):
    # oracle: conditional mean of a jointly Gaussian (x, x + z) pair in basis coordinates
    spec = TaskSpec(Case.LINEAR_SUBSPACE, n=5, d=2, sigma0_sq=1.5, sigmaZ_sq=0.4)
    task = sample_task(spec, gen)
    q = gen.normal(size=5)
    Cx = 1.5 * task.projector
    post = Cx @ np.linalg.solve(Cx + 0.4 * np.eye(5), q)
    np.testing.assert_allclose(bayes_linear(task, q), post, atol=1e-12)


def test_sphere_bayes_matches_quadrature_on_circle(gen):
    # d = 1: the posterior over the angle on a circle, integrated numerically
    spec = TaskSpec(Case.SPHERE, n=4, d=1, R=1.3, sigmaZ_sq=0.5)
    task = sample_task(spec, gen)
    B = task.basis
    for _ in range(5):
        q = gen.normal(size=4)
        c = B.T @ q
        w = lambda t: np.exp(1.3 * (c[0] * np.cos(t) + c[1] * np.sin(t)) / 0.5)
        Z = integrate.quad(w, 0, 2 * np.pi, epsabs=1e-13)[0]
        m = [integrate.quad(lambda t: 1.3 * f(t) * w(t), 0, 2 * np.pi, epsabs=1e-13)[0] / Z
             for f in (np.cos, np.sin)]
        np.testing.assert_allclose(bayes_sphere(task, q), B @ np.array(m), atol=1e-9)


def test_sphere_bayes_importance_sampling(gen):
    spec = TaskSpec(Case.SPHERE, n=6, d=3, R=1.0, sigmaZ_sq=0.3)
    task = sample_task(spec, gen)
    q = task.basis @ gen.normal(size=4) * 0.6 + 0.1 * gen.normal(size=6)
    from icdenoise.tasks import sample_tokens
    X = sample_tokens(task, 400000, gen)
    lw = -((X - q[:, None]) ** 2).sum(axis=0) / (2 * 0.3)
    w = np.exp(lw - lw.max())
    np.testing.assert_allclose(bayes_sphere(task, q), X @ w / w.sum(), atol=5e-3)


def test_sphere_bayes_zero_projection(gen):
    spec = TaskSpec(Case.SPHERE, n=4, d=1)
    task = TaskInstance(spec, basis=np.eye(4)[:, :2])
    np.testing.assert_array_equal(bayes_sphere(task, np.array([0, 0, 1.0, 2.0])), np.zeros(4))


def test_mixture_single_component_is_gaussian_posterior(gen):
    spec = TaskSpec(Case.GAUSSIAN_MIXTURE, n=4, K=1, sigma0_sq=0.3, sigmaZ_sq=0.2)
    task = sample_task(spec, gen)
    q = gen.normal(size=4)
    mu = task.centers[:, 0]
    expected = (0.3 * q + 0.2 * mu) / 0.5
    np.testing.assert_allclose(bayes_mixture(task, q), expected, atol=1e-13)
    np.testing.assert_allclose(bayes_mixture_zerovar(task, q), mu, atol=1e-13)


def test_mixture_general_agrees_with_equal_variance_form(gen, mixture_spec):
    task = sample_task(mixture_spec, gen)
    q = gen.normal(size=16)
    a = bayes_mixture(task, q)
    b = bayes_mixture_general(task.centers, mixture_spec.mixture_weights, 0.02, 0.1, q)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_mixture_general_unequal_variances_by_importance_sampling(gen):
    centers = np.array([[1.0, -0.5], [0.0, 0.8], [0.3, 0.0]])
    w, sa, sz = np.array([0.4, 0.6]), np.array([0.05, 0.3]), 0.2
    q = np.array([0.2, 0.3, 0.1])
    comp = gen.choice(2, size=600000, p=w)
    X = centers[:, comp] + np.sqrt(sa[comp]) * gen.standard_normal((3, comp.size))
    lw = -((X - q[:, None]) ** 2).sum(axis=0) / (2 * sz)
    ww = np.exp(lw - lw.max())
    np.testing.assert_allclose(bayes_mixture_general(centers, w, sa, sz, q), X @ ww / ww.sum(), atol=4e-3)


def test_mixture_importance_sampling(gen, mixture_spec):
    task = sample_task(mixture_spec, gen)
    from icdenoise.tasks import sample_prompt, sample_tokens
    p = sample_prompt(task, 1, gen)
    X = sample_tokens(task, 400000, gen)
    lw = -((X - p.query[:, None]) ** 2).sum(axis=0) / (2 * 0.1)
    w = np.exp(lw - lw.max())
    np.testing.assert_allclose(bayes_mixture(task, p.query), X @ w / w.sum(), atol=1e-2)


def test_empirical_projector(gen):
    X = gen.normal(size=(3, 50))
    np.testing.assert_allclose(empirical_projector(X, 2.0), X @ X.T / 100)
    with pytest.raises(InvalidArgument):
        empirical_projector(X, 0.0)


@pytest.mark.parametrize("case", list(Case))
def test_batched_predictions_match_single_query(case, gen):
    spec = TaskSpec(case, n=6, d=2, K=3, sigma0_sq=0.5, sigmaZ_sq=0.3)
    b = sample_dataset(spec, 4, 9, RngStream(2))
    single = {
        BaselineKind.BAYES_LINEAR: bayes_linear, BaselineKind.BAYES_SPHERE: bayes_sphere,
        BaselineKind.BAYES_MIXTURE_GENERAL: bayes_mixture,
        BaselineKind.BAYES_MIXTURE_ZEROVAR: bayes_mixture_zerovar,
    }
    for kind in applicable_kinds(case):
        pred = predict_baseline(kind, b)
        assert pred.shape == (4, 6)
        for i in range(4):
            if kind in single:
                np.testing.assert_allclose(pred[i], single[kind](b.tasks[i], b.queries[i]), atol=1e-12)
            if kind is BaselineKind.EMPIRICAL_PROJECTOR:
                P = empirical_projector(b.contexts[i], spec.sigma0_sq)
                s = spec.sigma0_sq / (spec.sigma0_sq + spec.sigmaZ_sq)
                np.testing.assert_allclose(pred[i], s * P @ b.queries[i], atol=1e-12)


def test_inapplicable_baseline_rejected(linear_spec):
    b = sample_dataset(linear_spec, 2, 3, RngStream(0))
    with pytest.raises(InvalidArgument):
        predict_baseline("bayes_sphere", b)


@pytest.mark.parametrize("case", list(Case))
def test_bayes_beats_other_baselines(case):
    spec = {Case.LINEAR_SUBSPACE: TaskSpec(case), Case.SPHERE: TaskSpec(case, sigmaZ_sq=0.1),
            Case.GAUSSIAN_MIXTURE: TaskSpec(case, sigma0_sq=0.02, sigmaZ_sq=0.1)}[case]
    b = sample_dataset(spec, 1500, 50, RngStream(11))
    errs = {k: ((predict_baseline(k, b) - b.targets) ** 2).sum(axis=1) for k in applicable_kinds(case)}
    from icdenoise.baselines import BAYES_KIND
    best = errs[BAYES_KIND[case]]
    for k, e in errs.items():
        diff, se = mean_and_stderr(e - best)
        assert diff >= -3 * se, k


def test_zero_baseline_is_signal_power(linear_spec):
    b = sample_dataset(linear_spec, 3000, 2, RngStream(8))
    m, se = mean_and_stderr(((predict_baseline("zero", b) - b.targets) ** 2).sum(axis=1))
    assert abs(m - 16.0) < 4 * se


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.randoms())
def test_ordered_mean_is_order_independent(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert ordered_mean(values) == ordered_mean(shuffled)


def test_ordered_mean_exact_cancellation():
    assert ordered_mean([1e20, 1.0, -1e20, 1.0]) == 0.5
    with pytest.raises(InvalidArgument):
        ordered_mean([])


def test_evaluate_baseline(linear_spec):
    b = sample_dataset(linear_spec, 20, 4, RngStream(0))
    e = evaluate_baseline("projection", b)
    pred = predict_baseline("projection", b)
    assert e == pytest.approx(((pred - b.targets) ** 2).sum(axis=1).mean())
