import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crtweight import (
    FitSettings,
    SeparationError,
    WpsModel,
    delta,
    fit,
    from_arrays,
    log_pseudo_likelihood,
    propensity,
)
from crtweight.wps import _augment, _neg_mean_loglik_and_grad

from conftest import random_dataset


class TestDelta:
    def test_zero_alpha_gives_two(self):
        m = WpsModel(alpha=np.zeros(4), r=1.0)
        for x in (np.zeros(3), np.array([5.0, -2.0, 0.3])):
            assert delta(m, x) == pytest.approx(2.0)

    def test_large_linear_predictor_limit(self):
        m = WpsModel(alpha=np.array([30.0, 0.0]), r=1.0)
        assert delta(m, np.array([0.0])) == pytest.approx(1.0, abs=1e-12)

    def test_scenario_a_intercept_value(self):
        # alpha from the A/Case-1 generative design, at x = 0
        m = WpsModel(alpha=np.array([0.275, 0.3, -0.5, -0.1, 0.0, -0.15]), r=1.0)
        assert delta(m, np.zeros(5)) == pytest.approx(1.0 + np.exp(-0.275))
        assert delta(m, np.zeros(5)) == pytest.approx(1.7596, abs=5e-5)

    def test_dimension_mismatch(self):
        m = WpsModel(alpha=np.zeros(3), r=1.0)
        with pytest.raises(ValueError):
            delta(m, np.zeros(5))


class TestPropensity:
    def test_zero_alpha_r1(self):
        m = WpsModel(alpha=np.zeros(3), r=1.0)
        assert propensity(m, np.array([3.0, -1.0])) == pytest.approx(2.0 / 3.0)

    def test_zero_alpha_r_third(self):
        m = WpsModel(alpha=np.zeros(2), r=1.0 / 3.0)
        assert propensity(m, np.array([0.7])) == pytest.approx(0.4)

    def test_delta_to_one_limit(self):
        m = WpsModel(alpha=np.array([40.0, 0.0]), r=1.0)
        assert propensity(m, np.array([0.0])) == pytest.approx(0.5, abs=1e-12)

    @given(
        alpha=st.lists(st.floats(-3, 3), min_size=2, max_size=5),
        x=st.lists(st.floats(-4, 4), min_size=1, max_size=4),
        r=st.floats(0.1, 10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_invariants_and_reparameterization(self, alpha, x, r):
        if len(x) != len(alpha) - 1:
            x = (x * len(alpha))[: len(alpha) - 1]
        m = WpsModel(alpha=np.array(alpha), r=r)
        xv = np.array(x)
        d = delta(m, xv)
        e = propensity(m, xv)
        assert d > 1.0
        assert 0.0 < e < 1.0
        # same quantity three ways: expit(log(r*delta)) == r*delta/(1+r*delta)
        # == delta/(delta + 1/r)
        assert e == pytest.approx(r * d / (1.0 + r * d), abs=1e-12)
        assert e == pytest.approx(d / (d + 1.0 / r), abs=1e-12)
        # monotone decreasing in the linear predictor
        m2 = WpsModel(alpha=np.array(alpha) + np.array([0.5] + [0] * (len(alpha) - 1)), r=r)
        assert delta(m2, xv) < d


class TestLogPseudoLikelihood:
    def test_single_treated_unit_value(self):
        ds = from_arrays(["a", "b"], [1, 0], np.zeros((2, 1)), [1.0, 0.0], 0.5)
        m = WpsModel(alpha=np.zeros(2), r=1.0)
        # e = 2/3 everywhere: z=1 contributes log(2/3), z=0 contributes log(1/3)
        expected = np.log(2.0 / 3.0) + np.log(1.0 / 3.0)
        assert log_pseudo_likelihood(m, ds) == pytest.approx(expected, abs=1e-12)

    def test_balanced_toy_value(self, toy_dataset):
        m = WpsModel(alpha=np.zeros(2), r=1.0)
        expected = 2.0 * np.log(2.0 / 3.0) + 2.0 * np.log(1.0 / 3.0)
        assert log_pseudo_likelihood(m, toy_dataset) == pytest.approx(expected, abs=1e-12)

    def test_finite_for_extreme_alpha(self, toy_dataset):
        for a0 in (-30.0, 30.0):
            m = WpsModel(alpha=np.array([a0, 25.0]), r=0.5)
            assert np.isfinite(log_pseudo_likelihood(m, toy_dataset))

    def test_likelihood_increases_toward_separation(self):
        # a perfectly separating covariate: treated x > 0, control x < 0.
        # pushing the slope down always increases the likelihood, so no finite
        # maximizer exists
        rng = np.random.default_rng(3)
        x_t = rng.uniform(0.5, 2.0, 20)
        x_c = rng.uniform(-2.0, -0.5, 20)
        ds = from_arrays(
            ["t"] * 20 + ["c"] * 20,
            [1] * 20 + [0] * 20,
            np.concatenate([x_t, x_c]).reshape(-1, 1),
            np.zeros(40),
            0.5,
        )
        values = [
            log_pseudo_likelihood(WpsModel(alpha=np.array([0.0, s]), r=1.0), ds)
            for s in (-1.0, -2.0, -4.0, -8.0, -16.0)
        ]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(1, 5))
            ds = random_dataset(rng, n_clusters=int(rng.integers(4, 9)), d=d)
            alpha = rng.normal(0, 1.0, d + 1)
            log_r = float(np.log(rng.uniform(0.25, 4.0)))
            xa = _augment(ds.covariates, d)
            z = ds.treatments.astype(float)
            _, g = _neg_mean_loglik_and_grad(alpha, xa, z, log_r)
            h = 1e-6
            fd = np.zeros_like(g)
            for k in range(alpha.size):
                up, dn = alpha.copy(), alpha.copy()
                up[k] += h
                dn[k] -= h
                fd[k] = (
                    _neg_mean_loglik_and_grad(up, xa, z, log_r)[0]
                    - _neg_mean_loglik_and_grad(dn, xa, z, log_r)[0]
                ) / (2 * h)
            scale = max(1.0, float(np.abs(g).max()))
            worst = max(worst, float(np.abs(g - fd).max()) / scale)
        assert worst <= 1e-5


class TestFit:
    def test_deterministic(self):
        rng = np.random.default_rng(5)
        ds = random_dataset(rng, n_clusters=30, d=2)
        r1 = fit(ds)
        r2 = fit(ds)
        np.testing.assert_array_equal(r1.model.alpha, r2.model.alpha)
        assert r1.iterations == r2.iterations
        assert r1.neg_log_pseudo_likelihood == r2.neg_log_pseudo_likelihood

    def test_converged_meets_tolerance(self):
        rng = np.random.default_rng(6)
        ds = random_dataset(rng, n_clusters=40, d=2, treated_frac=0.6)
        res = fit(ds)
        assert res.converged
        assert res.gradient_max_norm <= FitSettings().gradient_tol

    def test_exchangeable_arms_recover_constant_propensity(self):
        # covariates independent of arm; 2/3 of units treated, r = 1:
        # the fit should find slopes ~ 0 and e ~ the treated fraction
        rng = np.random.default_rng(7)
        n_clusters, size = 150, 30
        ids, zs, Xs = [], [], []
        for j in range(n_clusters):
            ids += [f"c{j}"] * size
            zs += [int(j < 100)] * size
            Xs.append(rng.normal(0, 1, (size, 2)))
        ds = from_arrays(ids, zs, np.vstack(Xs), rng.normal(0, 1, n_clusters * size), 0.5)
        res = fit(ds)
        assert res.converged
        e_hat = propensity(res.model, np.zeros(2))
        assert e_hat == pytest.approx(2.0 / 3.0, abs=0.02)
        assert np.abs(res.model.alpha[1:]).max() < 0.1

    def test_separation_raises(self):
        rng = np.random.default_rng(8)
        x_t = rng.uniform(0.5, 2.0, 30)
        x_c = rng.uniform(-2.0, -0.5, 30)
        ds = from_arrays(
            ["t1"] * 15 + ["t2"] * 15 + ["c1"] * 15 + ["c2"] * 15,
            [1] * 30 + [0] * 30,
            np.concatenate([x_t, x_c]).reshape(-1, 1),
            np.zeros(60),
            0.5,
        )
        with pytest.raises(SeparationError):
            fit(ds)

    def test_warm_start_agrees(self):
        rng = np.random.default_rng(9)
        ds = random_dataset(rng, n_clusters=40, d=2, treated_frac=0.6)
        cold = fit(ds)
        warm = fit(ds, init=cold.model.alpha)
        np.testing.assert_allclose(warm.model.alpha, cold.model.alpha, atol=1e-6)

    def test_bad_init_length(self, toy_dataset):
        with pytest.raises(ValueError):
            fit(toy_dataset, init=np.zeros(5))
