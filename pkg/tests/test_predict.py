import math

import numpy as np
import pytest

from recordbreak import design, gp, mcmc, predict, synthetic
from recordbreak.predict import GridSpec
from helpers import fake_draws, toy_data

COORDS = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 150.0]])


class TestGrid:
    def test_regular(self):
        g = GridSpec.regular((0, 100), (0, 50), 25)
        assert g.n_cells == 8 and g.coords[0].tolist() == [12.5, 12.5]
        assert len(set(g.cell_ids)) == 8

    @pytest.mark.parametrize("kw", [dict(dist_coast=[-1.0]), dict(resolution=0.0), dict(x=[1.0, 2.0])])
    def test_invalid(self, kw):
        args = dict(coords=[[0, 0]], dist_coast=[1.0])
        args.update(kw)
        with pytest.raises(ValueError):
            GridSpec(**args)

    def test_covariate_kriging(self):
        g = GridSpec([[50.0, 0.0], [0.0, 0.0]], [0, 0])
        x = predict.krige_grid_covariate(g, [[0, 0], [100, 0]], [1.0, 3.0])
        np.testing.assert_allclose(x, [2.0, 1.0], atol=1e-12)
        g2 = GridSpec([[0.0, 0.0]], [0.0], x=[7.0])
        assert predict.krige_grid_covariate(g2, [[0, 0], [1, 0]], [1.0, 3.0]).tolist() == [7.0]


class TestDayFields:
    def test_cell_at_fit_site(self, rng):
        d = fake_draws(COORDS, T=3, n_days=2, rng=rng)
        g = GridSpec(COORDS[[1]], [0.0])
        out = predict.krige_day_field(d, 0, 0, 3, 2, g, rng)
        np.testing.assert_array_equal(out[:, 0], d.w[0, 0, :, 3, 1])

    def test_remote_cell_is_standard_normal(self, rng):
        T, L = 2, 5000
        d = fake_draws(COORDS, T=T, n_days=L, rng=rng)
        dk = predict.DrawKriger(d, 0, 0, np.array([[1e6, 1e6]]))
        vals = dk.day_fields(2, rng)
        assert abs(vals.mean()) < 0.05 and abs(vals.var() - 1) < 0.05

    def test_neighbouring_cells_correlate_like_kernel(self, rng):
        d = fake_draws(COORDS, T=2, n_days=20000, rng=rng)
        cells = np.array([[5000.0, 5000.0], [5060.0, 5000.0]])
        v = predict.DrawKriger(d, 0, 0, cells).day_fields(2, rng)[0]
        assert abs(np.corrcoef(v.T)[0, 1] - math.exp(-60 / 100)) < 0.05

    def test_bad_indices(self, rng):
        d = fake_draws(COORDS, T=3, n_days=2)
        with pytest.raises(ValueError):
            predict.krige_day_field(d, 0, 0, 1, 1, GridSpec([[0, 0]], [0]), rng)


class TestSeed:
    def _marks(self, day0):
        m = np.zeros((2, 3, 4, len(day0)), int)
        m[:, :, 0, :] = np.asarray(day0)
        return m

    def test_all_record(self):
        np.testing.assert_allclose(predict.seed_probabilities(self._marks([1, 1, 1, 1]), 2), [0.99, 0.99])

    def test_none_record(self):
        np.testing.assert_allclose(predict.seed_probabilities(self._marks([0, 0, 0, 0]), 2), [0.01, 0.01])

    def test_half(self):
        np.testing.assert_allclose(predict.seed_probabilities(self._marks([1, 0, 1, 0]), 2), [0.5, 0.5])

    def test_ties_and_missing(self):
        marks = self._marks([2, 0, 1, 1])
        missing = np.zeros(marks.shape, bool)
        missing[:, :, 0, 3] = True
        np.testing.assert_allclose(predict.seed_probabilities(marks, 2, missing), [0.5, 0.5])

    def test_no_station_data(self):
        marks = self._marks([1, 0])
        with pytest.raises(ValueError):
            predict.seed_probabilities(marks, 2, np.ones(marks.shape, bool))

    def test_seed_draw_frequency(self, rng):
        seeds = predict.seed_day(2, self._marks([1, 1, 0, 0]), 40000, rng)
        assert seeds.shape == (40000, 2) and abs(seeds.mean() - 0.5) < 0.01


class TestSequential:
    def test_zero_model_gives_half(self, rng):
        prob, ind = predict.simulate_sequential(np.zeros((2, 8)), 5, np.zeros(3), np.zeros((2, 6, 3)),
                                                np.zeros((3, 2), np.int8), rng)
        assert np.all(prob == 0.5) and set(np.unique(ind)) <= {0, 1}

    def test_stationary_coefficients(self, rng):
        for t in (2, 7, 40):
            prob, _ = predict.simulate_sequential(design.stationary_coefficients(), t, np.log1p([0, 5, 50.0]),
                                                  np.zeros((2, 10, 3)), np.ones((3, 2), np.int8), rng)
            np.testing.assert_allclose(prob, 1.0 / t, rtol=1e-12)

    def test_persistence_shows_in_simulation(self, rng):
        B = np.zeros((2, 8))
        B[:, 0] = -1.5
        B[0, 1] = B[1, 2] = 2.5
        _, ind = predict.simulate_sequential(B, 4, np.zeros(50), np.zeros((2, 92, 50)),
                                             np.zeros((50, 2), np.int8), rng)
        series = ind[0].astype(float)

        def lag1(s):
            return np.mean([np.corrcoef(s[:-1, i], s[1:, i])[0, 1] for i in range(s.shape[1])
                            if s[:, i].std() > 0])

        observed = lag1(series)
        null = [lag1(rng.permuted(series, axis=0)) for _ in range(200)]
        assert np.mean(np.array(null) >= observed) < 0.01

    def test_first_year_rejected(self, rng):
        with pytest.raises(ValueError):
            predict.simulate_sequential(np.zeros((2, 8)), 1, np.zeros(1), np.zeros((2, 1, 1)),
                                        np.zeros((1, 2), np.int8), rng)


class TestPredictGrid:
    def _fit(self):
        data = toy_data(n_sites=4, T=5, n_days=4, seed=3)
        cfg = mcmc.SamplerConfig(sweeps=90, thin_to=15, seed=1)
        return data, mcmc.run_chains(mcmc.VARIANTS["M2"], data, cfg)

    def test_shapes_bounds_and_joint(self):
        data, draws = self._fit()
        grid = GridSpec.regular((0, 400), (0, 400), 100)
        pd = predict.predict_grid(draws, grid, data.marks, np.random.default_rng(0), n_draws=10)
        assert pd.prob.shape == (10, 4, 2, 4, 16) and pd.ind.shape == pd.prob.shape
        assert np.all((pd.prob > 0) & (pd.prob < 1))
        np.testing.assert_array_equal(pd.joint_prob(), pd.prob[:, :, 0] * pd.prob[:, :, 1])
        again = predict.predict_grid(draws, grid, data.marks, np.random.default_rng(0), n_draws=10)
        np.testing.assert_array_equal(pd.prob, again.prob)

    def test_one_step_ahead_shape(self):
        data, draws = self._fit()
        probs = predict.one_step_ahead(draws, [[50.0, 50.0]], [10.0], data.marks[..., :1],
                                       np.random.default_rng(0), n_draws=7)
        assert probs.shape == (7, 2, 4, 4, 1)
        assert np.all((probs > 0) & (probs < 1))

    def test_stationary_predictive(self, rng):
        pd = predict.stationary_predictive(6, 3, GridSpec([[0, 0]], [0]), 5, rng)
        np.testing.assert_allclose(pd.prob[:, 2], 1 / 4)
        assert pd.years.tolist() == [2, 3, 4, 5, 6]


@pytest.mark.slow
def test_held_out_counts_within_predictive_band():
    spec = synthetic.SyntheticSpec(n_sites=16, T=12, n_days=20, generator="model", extent_km=400,
                                   eff_range=300)
    panel = synthetic.generate_synthetic(spec, 8).panel()
    data = mcmc.FitData.from_panel(panel)
    fit_sites, held = np.arange(8), np.arange(8, 16)
    cfg = mcmc.SamplerConfig(sweeps=3000, thin_to=100, seed=2)
    draws = mcmc.run_chains(mcmc.VARIANTS["M2"], data.subset(fit_sites), cfg)
    grid = GridSpec(data.coords[held], data.dist_coast[held])
    pd = predict.predict_grid(draws, grid, data.marks[..., fit_sites], np.random.default_rng(1),
                              n_draws=200)
    covered = []
    for j in range(2):
        sim = pd.ind[:, :, j].sum(axis=(1, 2))  # (n_draws, m)
        lo, hi = np.quantile(sim, [0.05, 0.95], axis=0)
        obs = (data.marks[j, 1:, 1:, :][..., held] == 1).sum(axis=(0, 1))
        covered.extend((obs >= lo) & (obs <= hi))
    assert np.mean(covered) >= 0.8
