import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finflex.core import FinParams, log_pdf, sample
from finflex.special import DEFAULT_POLICY
from finflex.errors import DomainError, FitConvergenceError, SingularGradientError
from finflex.estimate import (
    FAMILIES,
    FitConfig,
    FitResult,
    _Objective,
    aic,
    compare_models,
    fit_families,
    fit_mle,
    log_delta_grad,
    log_phi_grad,
    loglik,
    loglik_grad,
    out_of_sample_ll,
)


def stencil(f, theta, i, h):
    e = np.zeros_like(theta)
    e[i] = h
    return (-f(theta + 2 * e) + 8 * f(theta + e) - 8 * f(theta - e) + f(theta - 2 * e)) / (12 * h)


@pytest.fixture(scope="module")
def skewed():
    return sample(3000, FinParams(0.5, 1.2, 1.6, 1.4, 1.5), seed=21)


class TestLoglik:
    def test_single_point(self):
        assert loglik([0.0], FinParams(0, 1, 2, 2, 1)) == pytest.approx(
            math.log(1 / math.sqrt(math.pi)), rel=1e-14)

    def test_sum_of_log_pdf(self, skewed):
        p = FinParams(0.3, 1.1, 1.2, 1.9, 1.3)
        assert loglik(skewed, p) == pytest.approx(np.sum(log_pdf(skewed, p)), rel=1e-13)

    @pytest.mark.parametrize("bad", [[], [np.nan], [1.0, np.inf]])
    def test_bad_data(self, bad):
        with pytest.raises(DomainError):
            loglik(bad, FinParams(0, 1, 2, 2, 1))

    def test_truth_beats_perturbations(self):
        p = FinParams(0.0, 1.0, 1.5, 2.0, 1.3)
        x = sample(10_000, p, seed=8)
        rng = np.random.default_rng(9)
        base = loglik(x, p)
        for _ in range(20):
            q = p.as_array() * np.exp(rng.normal(0, 0.1, 5))
            q[0] = rng.normal(0, 0.1)
            assert loglik(x, FinParams.from_array(q)) < base


class TestGradient:
    def test_symmetric_data_zero_mu_derivative(self):
        p = FinParams(0.0, 1.3, 1.7, 0.9, 1.0)
        t = np.array([0.2, 0.9, 2.5])
        assert loglik_grad(np.concatenate((t, -t)), p)[0] == pytest.approx(0.0, abs=1e-12)

    def test_log_phi_grad_against_stencil(self):
        p = FinParams(0, 1, 1.7, 2.3, 1.4)
        th = p.as_array()
        f = lambda v: FinParams.from_array(v).log_phi  # noqa: E731
        fd = [stencil(f, th, i, 1e-4) for i in (2, 3, 4)]
        np.testing.assert_allclose(log_phi_grad(p), fd, rtol=1e-8)

    def test_log_delta_grad_against_stencil(self):
        p = FinParams(0, 1, 0.8, 1.6, 0.6)
        th = p.as_array()
        f = lambda v: FinParams.from_array(v).log_delta  # noqa: E731
        fd = [stencil(f, th, i, 1e-4) for i in (2, 3, 4)]
        np.testing.assert_allclose(log_delta_grad(p), fd, rtol=1e-8)

    def test_against_five_point_stencil(self):
        rng = np.random.default_rng(17)
        for i in range(10):
            p = FinParams(rng.normal(), math.exp(rng.uniform(-1, 1)), rng.uniform(0.6, 4),
                          rng.uniform(0.5, 4), rng.uniform(0.5, 2))
            x = sample(200, p, seed=i)
            x = x[np.abs((x - p.mu) / p.sigma) > 1e-3]
            th = p.as_array()
            f = lambda v: loglik(x, FinParams.from_array(v))  # noqa: E731
            fd = np.array([stencil(f, th, j, 1e-4 * max(1.0, abs(th[j]))) for j in range(5)])
            g = loglik_grad(x, p)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5)

    def test_far_tail_points(self):
        # points many scales out exercise the log-space tail terms
        p = FinParams(0, 1, 1.5, 1.2, 1.3)
        x = np.array([-40.0, -12.0, -0.5, 0.7, 15.0, 60.0])
        th = p.as_array()
        f = lambda v: loglik(x, FinParams.from_array(v))  # noqa: E731
        fd = np.array([stencil(f, th, j, 1e-5) for j in range(5)])
        np.testing.assert_allclose(loglik_grad(x, p), fd, rtol=1e-6)

    def test_observation_at_mode(self):
        x = np.array([-1.0, 0.0, 0.4, 2.0])
        p = FinParams(0.0, 1.0, 1.0, 1.5, 1.2)
        h = 1e-7
        # raising mu puts the point at x = 0 on the left branch
        one_sided = (loglik(x, FinParams(h, 1.0, 1.0, 1.5, 1.2)) - loglik(x, p)) / h
        assert loglik_grad(x, p)[0] == pytest.approx(one_sided, rel=1e-5)
        p2 = FinParams(0.0, 1.0, 2.5, 1.5, 1.2)
        th = p2.as_array()
        fd = stencil(lambda v: loglik(x, FinParams.from_array(v)), th, 0, 1e-4)
        assert loglik_grad(x, p2)[0] == pytest.approx(fd, rel=1e-6)

    def test_singular_at_mode(self):
        with pytest.raises(SingularGradientError):
            loglik_grad([0.0, 1.0], FinParams(0, 1, 0.7, 1, 1))

    def test_unconstrained_chain_rule(self, skewed):
        obj = _Objective(skewed, FAMILIES["fin"], FitConfig(), DEFAULT_POLICY)
        y = np.array([0.4, math.log(1.1), math.log(1.5), math.log(1.3), math.log(1.4)])
        _, g = obj(y)
        fd = np.array([stencil(lambda v: obj(v)[0], y, j, 1e-4) for j in range(5)])
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


class TestFit:
    def test_normal_closed_form(self):
        x = sample(2000, FinParams(1.0, 2.0, 1.3, 1.1, 1.2), seed=3)
        fit = fit_mle(x, family="normal")
        assert fit.params.mu == pytest.approx(np.mean(x), rel=1e-6)
        assert fit.params.sigma == pytest.approx(math.sqrt(2) * np.std(x), rel=1e-6)
        assert (fit.params.alpha, fit.params.beta, fit.params.kappa) == (2.0, 2.0, 1.0)
        assert fit.k_params == 2

    def test_laplace_closed_form(self):
        x = sample(1001, FinParams(0.0, 1.0, 1.0, 1.0, 1.0), seed=4)
        fit = fit_mle(x, family="laplace")
        med = np.median(x)
        assert fit.params.mu == pytest.approx(med, abs=1e-6)
        assert fit.params.sigma == pytest.approx(np.mean(np.abs(x - med)), rel=1e-6)

    def test_fin_reaches_first_order_condition(self, skewed):
        fit = fit_mle(skewed)
        assert fit.converged
        assert fit.grad_norm < FitConfig().grad_tol
        g = loglik_grad(skewed, fit.params) / skewed.size
        assert np.max(np.abs(g * np.r_[1.0, fit.params.as_array()[1:]])) < 1e-5

    def test_deterministic(self, skewed):
        a, b = fit_mle(skewed, seed=1), fit_mle(skewed, seed=1)
        assert a == b

    def test_families_respect_nesting(self, skewed):
        fits = fit_families(skewed, ("fin", "ftn", "btn", "ep", "normal", "laplace"))
        ll = {k: f.loglik for k, f in fits.items()}
        for small, big in [("btn", "fin"), ("ftn", "fin"), ("ep", "btn"), ("normal", "ep"),
                           ("laplace", "ep"), ("normal", "ftn")]:
            assert ll[big] >= ll[small] - 1e-6, (small, big)

    def test_location_equivariance(self, skewed):
        a = fit_mle(skewed)
        b = fit_mle(skewed + 10.0)
        assert b.params.mu == pytest.approx(a.params.mu + 10.0, abs=1e-4)
        np.testing.assert_allclose(b.params.as_array()[1:], a.params.as_array()[1:], rtol=1e-4)
        assert b.loglik == pytest.approx(a.loglik, abs=1e-4)

    def test_scale_equivariance(self, skewed):
        c = 0.01
        a = fit_mle(skewed)
        b = fit_mle(skewed * c)
        assert b.params.sigma == pytest.approx(a.params.sigma * c, rel=1e-4)
        np.testing.assert_allclose(b.params.as_array()[2:], a.params.as_array()[2:], rtol=1e-4)
        assert b.loglik == pytest.approx(a.loglik - skewed.size * math.log(c), abs=1e-3)

    def test_numeric_gradient_mode(self, skewed):
        a = fit_mle(skewed, family="btn")
        b = fit_mle(skewed, FitConfig(gradient_mode="numeric"), family="btn")
        assert b.loglik == pytest.approx(a.loglik, abs=1e-5)

    def test_too_few_observations(self):
        with pytest.raises(DomainError):
            fit_mle(np.arange(10.0))

    def test_unknown_family(self, skewed):
        with pytest.raises(DomainError):
            fit_mle(skewed, family="cauchy")

    def test_non_convergence_carries_best(self, skewed):
        with pytest.raises(FitConvergenceError) as info:
            fit_mle(skewed, FitConfig(max_iter=2, grad_tol=1e-12, starts=1))
        assert isinstance(info.value.best, FitResult)
        assert not info.value.best.converged

    @pytest.mark.parametrize("kw", [dict(grad_tol=0.0), dict(starts=0),
                                    dict(gradient_mode="magic"),
                                    dict(param_bounds={"sigma": -1.0})])
    def test_config_validation(self, kw):
        with pytest.raises(DomainError):
            FitConfig(**kw)


class TestSelection:
    def make(self, family, ll, h="x"):
        return FitResult(family, FinParams(0, 1, 2, 2, 1), ll, 0.0, True, 100, data_hash=h)

    def test_aic_arithmetic(self):
        assert aic(self.make("fin", 10.0)) == -10.0
        assert aic(self.make("ftn", 10.0)) == -12.0
        assert self.make("normal", 10.0).aic == -16.0

    def test_oos_on_train_equals_loglik(self, skewed):
        fit = fit_mle(skewed, family="ep")
        assert out_of_sample_ll(fit, skewed) == pytest.approx(fit.loglik, rel=1e-12)

    def test_identical_fits_identical_rows(self):
        f = self.make("normal", 5.0)
        rows = compare_models([f, f], [0.1, -0.2])
        assert rows[0] == rows[1] and len(rows) == 2

    def test_ties_broken_by_oos_then_name(self):
        a = FitResult("ep", FinParams(0, 1, 2, 2, 1), 5.0, 0.0, True, 100, data_hash="x")
        b = FitResult("normal", FinParams(0, 1, 2, 2, 1), 4.0, 0.0, True, 100, data_hash="x")
        rows = compare_models([b, a], [0.0])
        # equal aic (-4) and equal oos: alphabetical
        assert [r.family for r in rows] == ["ep", "normal"]

    def test_mismatched_data_rejected(self):
        with pytest.raises(DomainError):
            compare_models([self.make("fin", 1.0, "a"), self.make("ep", 1.0, "b")], [0.0])

    def test_single_fit_rejected(self):
        with pytest.raises(DomainError):
            compare_models([self.make("fin", 1.0)], [0.0])

    def test_fin_beats_normal_on_skewed_data(self):
        x = sample(5000, FinParams(0.0, 1.0, 2.0, 2.0, 2.0), seed=12)
        train, test = x[:4000], x[4000:]
        fits = fit_families(train, ("fin", "normal"))
        rows = compare_models(fits.values(), test)
        assert rows[0].family == "fin" and len(rows) == 2


class TestSerialization:
    def test_json_round_trip(self, skewed):
        fit = fit_mle(skewed, family="ftn", seed=5)
        doc = json.loads(fit.to_json())
        for key in ("family", "params", "loglik", "aic", "grad_norm", "converged", "n_obs", "seed"):
            assert key in doc
        assert set(doc["params"]) == {"mu", "sigma", "alpha", "beta", "kappa"}
        assert FitResult.from_json(fit.to_json()) == fit

    def test_unknown_family_rejected(self):
        with pytest.raises(DomainError):
            FitResult.from_dict({"family": "foo", "params": {}, "loglik": 0, "n_obs": 1})


@settings(max_examples=25, deadline=None)
@given(st.floats(0.6, 3.5), st.floats(0.6, 3.5), st.floats(0.6, 1.7), st.integers(0, 10_000))
def test_gradient_property(alpha, beta, kappa, seed):
    p = FinParams(0.2, 0.8, alpha, beta, kappa)
    x = sample(50, p, seed=seed)
    x = x[np.abs((x - p.mu) / p.sigma) > 1e-3]
    th = p.as_array()
    f = lambda v: loglik(x, FinParams.from_array(v))  # noqa: E731
    fd = np.array([stencil(f, th, j, 1e-4 * max(1.0, abs(th[j]))) for j in range(5)])
    np.testing.assert_allclose(loglik_grad(x, p), fd, rtol=1e-5, atol=1e-5)
