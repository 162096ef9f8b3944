"""Shared small fixtures for sampler and prediction tests."""
import numpy as np

from recordbreak import mcmc, synthetic


def toy_data(n_sites=3, T=5, n_days=4, seed=11, **kw):
    spec = synthetic.SyntheticSpec(n_sites=n_sites, T=T, n_days=n_days, generator="model", **kw)
    return mcmc.FitData.from_panel(synthetic.generate_synthetic(spec, seed).panel())


def empty_data(n_sites=3):
    """Fit data with a single year, so the likelihood is empty."""
    full = toy_data(n_sites=n_sites, T=3, n_days=2, seed=1)
    return mcmc.FitData(marks=full.marks[:, :1], coords=full.coords, dist_coast=full.dist_coast,
                        x=full.x, years=full.years[:1], days=full.days, site_ids=None)


def batch_se(x, n_batches=50):
    """Monte-Carlo standard error of a chain mean by batch means."""
    x = np.asarray(x, float)
    x = x[: len(x) - len(x) % n_batches]
    return float(np.sqrt(x.reshape(n_batches, -1).mean(axis=1).var(ddof=1) / n_batches))


def fake_draws(coords, T, n_days, B=None, a=(1.0, 0.0, 1.0), eff_range=300.0, w=None,
               dist_coast=None, n_draws=1, rng=None, variant="M2"):
    """Posterior draws holding fixed parameters, for prediction tests."""
    from recordbreak import mcmc
    coords = np.asarray(coords, float)
    n = coords.shape[0]
    D = (T - 1) * n_days
    B = np.zeros((2, 8)) if B is None else np.asarray(B, float)
    if w is None:
        w = np.zeros((2, D, n)) if rng is None else rng.normal(size=(2, D, n))
    rep = lambda arr: np.broadcast_to(np.asarray(arr, float), (1, n_draws) + np.shape(arr)).copy()
    return mcmc.PosteriorDraws(
        variant=mcmc.VARIANTS[variant],
        params={"B": rep(B), "a": rep(np.asarray(a)), "range": rep(np.full(2, eff_range))},
        sweep_index=np.arange(n_draws)[None, :],
        coords=coords,
        dist_coast=np.zeros(n) if dist_coast is None else np.asarray(dist_coast, float),
        x=None, T=T, n_days=n_days, w=rep(w))
