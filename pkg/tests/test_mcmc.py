import math

import numpy as np
import pytest
from scipy import stats

from recordbreak import design, diagnostics, gp, kernels, mcmc
from helpers import empty_data, toy_data


class TestTies:
    @pytest.mark.parametrize("r", [2, 4])
    def test_frequency(self, r, rng):
        hits = mcmc.resolve_ties(np.full(100000, r), rng)
        assert abs(hits.mean() - 1 / r) < 0.005

    def test_plain_marks_unchanged(self, rng):
        marks = np.array([0, 1, 1, 0, 3])
        out = mcmc.sample_tied(marks, rng)
        assert out[:4].tolist() == [0, 1, 1, 0]

    def test_invalid_r(self, rng):
        with pytest.raises(ValueError):
            mcmc.resolve_ties(np.array([1]), rng)


class TestLatent:
    def _draw(self, eta, positive, rng, n=100000):
        eta = np.full(n, float(eta))
        pos = np.full(n, positive, dtype=np.int8)
        return kernels.truncnorm_latent(eta, pos, mcmc.open_uniform(rng, n))

    def test_half_normal_mean(self, rng):
        assert abs(self._draw(0.0, 1, rng).mean() - math.sqrt(2 / math.pi)) < 0.01

    def test_inactive_truncation(self, rng):
        y = self._draw(40.0, 1, rng, n=1000)
        assert abs(y.mean() - 40.0) < 0.1

    def test_zero_indicator_non_positive(self, rng):
        assert (self._draw(3.0, 0, rng) <= 0).all()

    def test_far_tail_stays_finite_and_signed(self, rng):
        y = self._draw(-40.0, 1, rng, n=1000)
        assert np.isfinite(y).all() and (y > 0).all()
        y = self._draw(40.0, 0, rng, n=1000)
        assert np.isfinite(y).all() and (y <= 0).all()

    def test_truncated_normal_moments(self, rng):
        y = self._draw(-0.7, 1, rng)
        ref = stats.truncnorm(0.7, np.inf, loc=-0.7)
        assert abs(y.mean() - ref.mean()) < 4 * ref.std() / math.sqrt(y.size)


class TestConjugateDraws:
    def test_coefficients_no_data_is_prior(self, rng):
        draws = np.array([mcmc.draw_coefficients(np.zeros((0, 3)), np.zeros(0), 100.0, rng)
                          for _ in range(4000)])
        assert abs(draws.std() - 10.0) < 0.3
        assert abs(draws.mean()) < 0.5

    def test_coefficients_least_squares_limit(self, rng):
        X, _ = np.linalg.qr(rng.normal(size=(50, 4)))
        r = rng.normal(size=50)
        draws = np.array([mcmc.draw_coefficients(X, r, 1e12, rng) for _ in range(20000)])
        np.testing.assert_allclose(draws.mean(0), X.T @ r, atol=0.04)

    def test_coefficients_recover_truth(self, rng):
        X = rng.normal(size=(20000, 8))
        beta = rng.normal(size=8)
        r = X @ beta + rng.normal(size=20000)
        b = mcmc.draw_coefficients(X, r, 100.0, rng)
        post_sd = np.sqrt(np.diag(np.linalg.inv(X.T @ X + np.eye(8) / 100)))
        assert np.all(np.abs(b - beta) < 4 * post_sd * math.sqrt(2))

    def test_day_fields_zero_coreg_is_prior(self, rng):
        coords = rng.uniform(0, 300, (3, 2))
        C = gp.cov_matrix(gp.KernelSpec(1 / 300), coords)
        R = np.linalg.inv(C)
        e = rng.normal(size=(20000, 3)) * 5
        w = mcmc.draw_day_fields(R, R, 0.0, 0.0, 0.0, e, e, rng)
        np.testing.assert_allclose(np.cov(w[0].T), C, atol=0.05)
        np.testing.assert_allclose(w[1].mean(0), 0.0, atol=0.05)

    def test_day_fields_scalar_case(self, rng):
        e1 = np.full((40000, 1), 1.4)
        e2 = np.full((40000, 1), -0.6)
        w = mcmc.draw_day_fields(np.eye(1), np.eye(1), 1.0, 0.0, 1.0, e1, e2, rng)
        assert abs(w[0].mean() - 0.7) < 0.01 and abs(w[1].mean() + 0.3) < 0.01
        assert abs(w[0].var() - 0.5) < 0.01 and abs(w[1].var() - 0.5) < 0.01


class TestSampler:
    def test_sign_coherence(self):
        data = toy_data()
        s = mcmc.Sampler(mcmc.VARIANTS["M2"], data, config=mcmc.SamplerConfig(seed=3))
        for _ in range(25):
            s.sweep()
            assert np.array_equal(s.Y > 0, s.response.astype(bool))

    def test_identical_proposal_always_accepted(self):
        assert mcmc.mh_accept(0.0, math.log(1 - 1e-16))

    def test_determinism(self):
        data = toy_data()
        cfg = mcmc.SamplerConfig(sweeps=60, thin_to=10, seed=99)
        a = mcmc.run_chains(mcmc.VARIANTS["M2"], data, cfg)
        b = mcmc.run_chains(mcmc.VARIANTS["M2"], data, cfg)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
        np.testing.assert_array_equal(a.w, b.w)

    def test_chains_use_distinct_streams(self):
        cfg = mcmc.SamplerConfig(sweeps=30, thin_to=5, seed=5)
        d = mcmc.run_chains(mcmc.VARIANTS["M2"], toy_data(), cfg)
        assert not np.array_equal(d.params["B"][0], d.params["B"][1])
        assert d.n_chains == 2 and d.n_draws == 5

    def test_stationary_variant(self):
        np.testing.assert_array_equal(mcmc.stationary_probabilities(4), [1, 1 / 2, 1 / 3, 1 / 4])
        with pytest.raises(ValueError):
            mcmc.run_chains(mcmc.VARIANTS["M0"], toy_data())

    @pytest.mark.parametrize("name", ["M1", "M3", "M4", "M5"])
    def test_every_variant_runs(self, name):
        cfg = mcmc.SamplerConfig(sweeps=30, thin_to=5, n_chains=1, seed=2)
        d = mcmc.run_chains(mcmc.VARIANTS[name], toy_data(), cfg)
        assert np.isfinite(d.params["B"]).all()
        table = d.scalar_table()
        assert all(v.shape == (1, 5) for v in table.values())

    def test_univariate_mask(self):
        cfg = mcmc.SamplerConfig(sweeps=20, thin_to=5, n_chains=1)
        d = mcmc.run_chains(mcmc.VARIANTS["M1"], toy_data(), cfg)
        mask = design.UNIVARIATE_MASK
        assert np.all(d.params["B"][..., ~mask] == 0.0)
        assert np.all(d.params["a"][..., 1] == 0.0)

    def test_anisotropic_needs_covariate(self):
        data = toy_data()
        data = mcmc.FitData(marks=data.marks, coords=data.coords, dist_coast=data.dist_coast, x=None,
                            years=data.years, days=data.days)
        with pytest.raises(ValueError):
            mcmc.Sampler(mcmc.VARIANTS["M4"], data)

    def test_adapted_acceptance_in_band(self):
        cfg = mcmc.SamplerConfig(sweeps=3000, thin_to=100, n_chains=1, seed=8)
        s = mcmc.Sampler(mcmc.VARIANTS["M2"], toy_data(n_sites=5, T=8, n_days=6), config=cfg,
                         rng=np.random.default_rng(8))
        burn, _ = cfg.kept_sweeps()
        for _ in range(burn):
            s.sweep()
        start = s.range_accept.copy()
        for _ in range(cfg.sweeps - burn):
            s.sweep()
        rate = (s.range_accept - start) / (cfg.sweeps - burn)
        assert np.all((rate >= 0.2) & (rate <= 0.5))

    def test_prior_recovery_without_likelihood(self):
        cfg = mcmc.SamplerConfig(sweeps=45000, thin_to=10000, n_chains=1, seed=2)
        prior = mcmc.PriorConfig()
        d = mcmc.run_chains(mcmc.VARIANTS["M2"], empty_data(), cfg, prior)
        refs = {"a11": stats.halfnorm(scale=prior.diag_scale), "a22": stats.halfnorm(scale=prior.diag_scale),
                "a21": stats.norm(0, math.sqrt(prior.a21_var)),
                "range": stats.invgamma(prior.range_shape, scale=prior.range_scale)}
        for name, values in d.scalar_table().items():
            ref = refs.get(name, stats.norm(0, math.sqrt(prior.beta_var)))
            assert stats.kstest(values.ravel(), ref.cdf).pvalue > 0.01, name
        assert abs(d.pooled("range")[:, 0].mean() / 300.0 - 1.0) < 0.25

    def test_site_relabelling(self):
        # a tight prior keeps the toy posterior well identified so chains mix
        data = toy_data(n_sites=4, T=6, n_days=4, seed=21)
        perm = np.array([2, 0, 3, 1])
        prior = mcmc.PriorConfig(beta_var=1.0, diag_scale=1.0, a21_var=1.0)
        cfg = mcmc.SamplerConfig(sweeps=4500, thin_to=3000, n_chains=1, seed=4)
        a = mcmc.run_chains(mcmc.VARIANTS["M2"], data, cfg, prior).scalar_table()
        b = mcmc.run_chains(mcmc.VARIANTS["M2"], data.subset(perm), cfg, prior).scalar_table()
        for name in a:
            x, y = a[name], b[name]
            se = math.hypot(x.std() / math.sqrt(diagnostics.ess(x)), y.std() / math.sqrt(diagnostics.ess(y)))
            assert abs(x.mean() - y.mean()) < 4 * se, name
