import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from recordbreak import gp

ISO = gp.KernelSpec(1 / 300)


def _sites(rng, n, extent=500.0):
    return rng.uniform(0, extent, size=(n, 2))


class TestKernel:
    def test_self_correlation(self, rng):
        C = gp.cov_matrix(ISO, _sites(rng, 6))
        assert np.all(np.diag(C) == 1.0)
        np.testing.assert_array_equal(C, C.T)

    def test_effective_range(self):
        k = gp.KernelSpec.from_ranges(200.0)
        C = gp.cov_matrix(k, [[0, 0], [200, 0]])
        assert C[0, 1] == pytest.approx(math.exp(-3), rel=1e-14)
        assert C[0, 1] == pytest.approx(0.049787, abs=1e-6)

    def test_150km(self):
        assert gp.cov_matrix(ISO, [[0, 0], [90, 120]])[0, 1] == pytest.approx(0.606531, abs=1e-6)

    def test_invalid(self):
        with pytest.raises(ValueError):
            gp.KernelSpec(0.0)
        with pytest.raises(ValueError):
            gp.KernelSpec(1.0, -1.0)
        with pytest.raises(ValueError):
            gp.cov_matrix(gp.KernelSpec(1.0, 1.0), [[0, 0], [1, 1]])

    def test_anisotropic_bounded_by_isotropic(self, rng):
        coords, x = _sites(rng, 12), rng.normal(size=12)
        x[3] = x[7]
        iso = gp.cov_matrix(ISO, coords)
        aniso = gp.cov_matrix(gp.KernelSpec(1 / 300, 2.0), coords, x)
        assert np.all(aniso <= iso)
        equal = np.isclose(aniso, iso, rtol=0, atol=0)
        same_x = x[:, None] == x[None, :]
        np.testing.assert_array_equal(equal, same_x)

    def test_positive_definite_random_sets(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            n = int(rng.integers(1, 51))
            coords = _sites(rng, n, extent=float(rng.uniform(1, 2000)))
            k = gp.KernelSpec(1.0 / rng.uniform(10, 2000))
            _, jitter = gp.cholesky_jitter(gp.cov_matrix(k, coords))
            assert jitter <= 1e-8

    def test_duplicate_sites_fail_after_jitter(self):
        # coincident sites plus a perturbation larger than the jitter ceiling
        C = gp.cov_matrix(ISO, [[0, 0], [0, 0], [1, 1]]) - np.diag([0, 1e-6, 0])
        with pytest.raises(np.linalg.LinAlgError):
            gp.cholesky_jitter(C)


class TestSampling:
    def test_single_site_unit_variance(self, rng):
        draws = gp.sample_gp(ISO, [[0, 0]], rng, size=20000)
        assert abs(draws.var() - 1) < 3 * math.sqrt(2 / 20000) + 0.01

    def test_coincident_sites_identical_without_jitter(self, rng):
        draws = gp.sample_gp(ISO, [[5, 5], [5, 5], [100, 0]], rng, size=50, jitter=False)
        np.testing.assert_allclose(draws[:, 0], draws[:, 1], atol=1e-12)

    def test_empirical_covariance(self, rng):
        coords = _sites(rng, 5)
        draws = gp.sample_gp(ISO, coords, rng, size=100000)
        np.testing.assert_allclose(np.cov(draws.T), gp.cov_matrix(ISO, coords), atol=0.02)


class TestKriging:
    def test_interpolation(self, rng):
        obs = _sites(rng, 7)
        w = rng.normal(size=7)
        mean, cov = gp.krige(ISO, obs, w, obs)
        np.testing.assert_allclose(mean, w, atol=1e-8)
        np.testing.assert_allclose(cov, 0.0, atol=1e-8)

    def test_prior_reversion(self, rng):
        obs = _sites(rng, 5)
        mean, cov = gp.krige(ISO, obs, rng.normal(size=5), [[1e7, 1e7]])
        assert abs(mean[0]) < 1e-8 and abs(cov[0, 0] - 1) < 1e-8

    def test_scalar_conditional(self):
        rho = math.exp(-100 / 300)
        mean, cov = gp.krige(ISO, [[0, 0]], [1.7], [[100, 0]])
        assert mean[0] == pytest.approx(rho * 1.7, rel=1e-12)
        assert cov[0, 0] == pytest.approx(1 - rho ** 2, rel=1e-12)

    def test_permutation_equivariance(self, rng):
        obs, new, w = _sites(rng, 8), _sites(rng, 4), rng.normal(size=8)
        perm = rng.permutation(8)
        m1, c1 = gp.krige(ISO, obs, w, new)
        m2, c2 = gp.krige(ISO, obs[perm], w[perm], new)
        np.testing.assert_allclose(m1, m2, atol=1e-10)
        np.testing.assert_allclose(c1, c2, atol=1e-10)

    def test_conditional_sampler_moments(self, rng):
        obs, new, w = _sites(rng, 6), np.array([[250.0, 250.0], [260.0, 250.0]]), rng.normal(size=6)
        mean, cov = gp.krige(ISO, obs, w, new)
        cs = gp.ConditionalSampler(ISO, obs, new)
        draws = np.array([cs.draw(w, rng) for _ in range(20000)])
        np.testing.assert_allclose(draws.mean(0), mean, atol=0.03)
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.03)

    def test_conditional_sampler_exact_at_sites(self, rng):
        obs, w = _sites(rng, 5), rng.normal(size=(5, 3))
        cs = gp.ConditionalSampler(ISO, obs, obs[[2, 0]])
        np.testing.assert_array_equal(cs.draw(w, rng), w[[2, 0]])


class TestSimpleKriging:
    def test_observed_site(self, rng):
        obs, x = _sites(rng, 5), rng.normal(size=5)
        assert gp.simple_krige_covariate(x, obs, obs[[3]])[0] == x[3]

    def test_constant(self, rng):
        out = gp.simple_krige_covariate(np.full(4, 2.5), _sites(rng, 4), _sites(rng, 10))
        np.testing.assert_allclose(out, 2.5, atol=1e-12)

    def test_midpoint_symmetry(self):
        out = gp.simple_krige_covariate([1.0, 3.0], [[0, 0], [100, 0]], [[50, 0]])
        assert out[0] == pytest.approx(2.0, abs=1e-12)

    def test_needs_two_sites(self):
        with pytest.raises(ValueError):
            gp.simple_krige_covariate([1.0], [[0, 0]], [[1, 1]])

    @given(arrays(np.float64, 6, elements=st.floats(-3, 3)))
    def test_shift_equivariance(self, x):
        coords = np.array([[0, 0], [100, 20], [40, 300], [250, 250], [500, 10], [300, 90.0]])
        new = np.array([[120.0, 120.0], [10.0, 400.0]])
        a = gp.simple_krige_covariate(x, coords, new)
        b = gp.simple_krige_covariate(x + 5.0, coords, new)
        np.testing.assert_allclose(b - a, 5.0, atol=1e-9)


def test_gp_loglik_matches_scipy(rng):
    from scipy.stats import multivariate_normal
    coords = _sites(rng, 4)
    C = gp.cov_matrix(ISO, coords)
    W = rng.normal(size=(4, 3))
    L = np.linalg.cholesky(C)
    ours = gp.gp_loglik(L, W @ W.T, 3)
    ref = multivariate_normal(np.zeros(4), C).logpdf(W.T).sum() + 3 * 2 * math.log(2 * math.pi)
    assert ours == pytest.approx(ref, rel=1e-10)
