import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crtweight import (
    NoIncentivizedError,
    RecruitedDataset,
    WeightScheme,
    WpsModel,
    estimate_all,
    estimate_nu,
    estimate_tau_c,
    from_arrays,
    hajek,
    strata_covariate_profile,
)

from conftest import random_dataset


class TestHajek:
    def test_toy_recruited_scheme(self, toy_dataset):
        e = np.full(4, 0.5)
        assert hajek(toy_dataset, e, WeightScheme.RECRUITED) == pytest.approx(1.0)

    def test_constant_propensity_equals_difference_in_means(self, toy_dataset):
        for p in (0.2, 0.5, 0.8):
            e = np.full(4, p)
            for scheme in WeightScheme:
                assert hajek(toy_dataset, e, scheme) == pytest.approx(1.0, abs=1e-12)

    def test_always_recruited_hand_value(self, toy_dataset):
        # treated weights (1-e)/e = {1, 0.25}; (1*1 + 0.25*3)/1.25 - 1 = 0.4
        e = np.array([0.5, 0.8, 0.5, 0.5])
        got = hajek(toy_dataset, e, WeightScheme.ALWAYS_RECRUITED)
        assert got == pytest.approx(0.4, abs=1e-12)

    @given(
        lam=st.floats(0.01, 100.0),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_scale_invariance(self, lam, seed):
        rng = np.random.default_rng(seed)
        ds = random_dataset(rng, n_clusters=8, d=2)
        e = rng.uniform(0.15, 0.85, ds.n)
        z, y = ds.treatments, ds.outcomes
        for scheme in WeightScheme:
            w0, w1 = scheme.arm_weights(e)
            base = hajek(ds, e, scheme)
            manual = np.sum(lam * w1 * z * y) / np.sum(lam * w1 * z) - np.sum(
                w0 * (1 - z) * y
            ) / np.sum(w0 * (1 - z))
            assert manual == pytest.approx(base, abs=1e-12)

    def test_duplication_invariance(self):
        rng = np.random.default_rng(123)
        ds = random_dataset(rng, n_clusters=6, d=2)
        e = rng.uniform(0.2, 0.8, ds.n)
        doubled = RecruitedDataset(ds.clusters + ds.clusters, ds.covariate_dim, 0.5)
        for scheme in WeightScheme:
            assert hajek(doubled, np.tile(e, 2), scheme) == pytest.approx(
                hajek(ds, e, scheme), abs=1e-12
            )

    def test_e_out_of_range_rejected(self, toy_dataset):
        with pytest.raises(ValueError):
            hajek(toy_dataset, np.array([0.0, 0.5, 0.5, 0.5]), WeightScheme.RECRUITED)

    def test_length_mismatch(self, toy_dataset):
        with pytest.raises(ValueError):
            hajek(toy_dataset, np.full(3, 0.5), WeightScheme.RECRUITED)


class TestNu:
    def test_symmetric_design(self, toy_dataset):
        est = estimate_nu(toy_dataset)  # pi_t = 0.5, p_t = 0.5
        assert est.raw == pytest.approx(1.0)
        assert est.value == 1.0
        assert not est.clipped

    def test_two_thirds_treated(self):
        ds = from_arrays(
            ["a", "a", "b"], [1, 1, 0], np.zeros((3, 1)), [1.0, 2.0, 3.0], 0.5
        )
        est = estimate_nu(ds)
        assert est.raw == pytest.approx(0.5)
        assert est.value == pytest.approx(0.5)

    def test_clipping_flag(self):
        # p_t = 1/3 < pi_t = 0.5 implies raw nu = 2, clipped to 1
        ds = from_arrays(
            ["a", "b", "b"], [1, 0, 0], np.zeros((3, 1)), [1.0, 2.0, 3.0], 0.5
        )
        est = estimate_nu(ds)
        assert est.raw == pytest.approx(2.0)
        assert est.value == 1.0
        assert est.clipped


class TestTauC:
    def test_nu_zero(self):
        assert estimate_tau_c(5.0, 2.5, 0.0) == pytest.approx(2.5)

    def test_homogeneous(self):
        for nu in (0.0, 0.3, 0.9):
            assert estimate_tau_c(1.7, 1.7, nu) == pytest.approx(1.7)

    def test_reported_component_arithmetic(self):
        # tau_ac 2.78, tau_a 2.83, nu 0.754 combine to ~2.63
        assert estimate_tau_c(2.83, 2.78, 0.754) == pytest.approx(2.63, abs=0.005)

    def test_nu_guard(self):
        with pytest.raises(NoIncentivizedError):
            estimate_tau_c(1.0, 1.0, 0.99)
        with pytest.raises(NoIncentivizedError):
            estimate_tau_c(1.0, 1.0, 1.0 - 0.02)  # boundary is excluded


class TestEstimateAll:
    def test_constant_outcome_gives_zero_effects(self):
        rng = np.random.default_rng(2)
        ds = random_dataset(rng, n_clusters=8, d=2, treated_frac=0.6)
        ds = from_arrays(
            [c.cluster_id for c in ds.clusters for _ in range(c.size)],
            [c.treatment for c in ds.clusters for _ in range(c.size)],
            ds.covariates,
            np.full(ds.n, 3.25),
            0.5,
        )
        e = rng.uniform(0.2, 0.8, ds.n)
        rep = estimate_all(ds, e_values=e)
        assert rep.tau_R == pytest.approx(0.0, abs=1e-12)
        assert rep.tau_a == pytest.approx(0.0, abs=1e-12)
        assert rep.tau_ac == pytest.approx(0.0, abs=1e-12)
        if rep.tau_c is not None:
            assert rep.tau_c == pytest.approx(0.0, abs=1e-10)

    def test_constant_e_at_design_prob(self, toy_dataset):
        # e = pi_t and p_t = pi_t: nu = 1, all tau equal the difference in
        # means, tau_c unavailable
        rep = estimate_all(toy_dataset, e_values=np.full(4, 0.5))
        assert rep.nu == 1.0
        diff = 1.0
        assert rep.tau_R == pytest.approx(diff)
        assert rep.tau_a == pytest.approx(diff)
        assert rep.tau_ac == pytest.approx(diff)
        assert rep.tau_c is None
        assert rep.tau_c_message is not None

    def test_decomposition_identity(self):
        # tau_ac == nu*tau_a + (1-nu)*tau_c exactly, by the defining algebra
        rng = np.random.default_rng(4)
        for _ in range(10):
            ds = random_dataset(rng, n_clusters=9, d=2, treated_frac=0.66)
            e = rng.uniform(0.2, 0.8, ds.n)
            rep = estimate_all(ds, e_values=e)
            if rep.tau_c is None:
                continue
            recon = rep.nu * rep.tau_a + (1 - rep.nu) * rep.tau_c
            assert recon == pytest.approx(rep.tau_ac, abs=1e-12)

    def test_requires_exactly_one_propensity_source(self, toy_dataset):
        with pytest.raises(ValueError):
            estimate_all(toy_dataset)
        with pytest.raises(ValueError):
            estimate_all(
                toy_dataset,
                WpsModel(alpha=np.zeros(2), r=1.0),
                e_values=np.full(4, 0.5),
            )

    def test_model_path_matches_e_values_path(self, toy_dataset):
        m = WpsModel(alpha=np.array([0.3, -0.2]), r=1.0)
        from crtweight import propensity_values

        via_model = estimate_all(toy_dataset, m)
        via_e = estimate_all(toy_dataset, e_values=propensity_values(m, toy_dataset))
        assert via_model.tau_a == via_e.tau_a
        assert via_model.ess == via_e.ess

    def test_kish_ess_constant_weights(self, toy_dataset):
        rep = estimate_all(toy_dataset, e_values=np.full(4, 0.5))
        for scheme in rep.ess.values():
            assert scheme["treated"] == pytest.approx(2.0)
            assert scheme["control"] == pytest.approx(2.0)


class TestStrataProfiles:
    def test_identical_covariates(self):
        X = np.tile(np.array([[1.5, -2.0]]), (6, 1))
        ds = from_arrays(
            ["a", "a", "a", "b", "b", "b"], [1, 1, 1, 0, 0, 0], X,
            [0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 0.5,
        )
        prof = strata_covariate_profile(ds, np.full(6, 0.6), nu=0.5)
        for p in (prof.recruited, prof.always_recruited, prof.always_or_incentivized,
                  prof.incentivized):
            np.testing.assert_allclose(p, [1.5, -2.0], atol=1e-12)

    def test_constant_e_always_profile_is_convex_combination(self):
        rng = np.random.default_rng(9)
        ds = random_dataset(rng, n_clusters=10, d=3, treated_frac=0.5)
        e = np.full(ds.n, 0.7)
        prof = strata_covariate_profile(ds, e, nu=0.4)
        z = ds.treatments
        mean_t = ds.covariates[z == 1].mean(axis=0)
        mean_c = ds.covariates[z == 0].mean(axis=0)
        # constant weights: pooled mean = lam*mean_t + (1-lam)*mean_c for some
        # lam in [0, 1]
        w = (1 - 0.7) / 0.7
        n_t, n_c = (z == 1).sum(), (z == 0).sum()
        lam = w * n_t / (w * n_t + n_c)
        np.testing.assert_allclose(
            prof.always_recruited, lam * mean_t + (1 - lam) * mean_c, atol=1e-12
        )

    def test_incentivized_none_when_nu_high(self, toy_dataset):
        prof = strata_covariate_profile(toy_dataset, np.full(4, 0.5), nu=1.0)
        assert prof.incentivized is None

    def test_profile_decomposition(self):
        rng = np.random.default_rng(10)
        ds = random_dataset(rng, n_clusters=8, d=2, treated_frac=0.6)
        e = rng.uniform(0.3, 0.8, ds.n)
        nu = 0.37
        prof = strata_covariate_profile(ds, e, nu=nu)
        recon = nu * prof.always_recruited + (1 - nu) * prof.incentivized
        np.testing.assert_allclose(recon, prof.always_or_incentivized, atol=1e-12)
