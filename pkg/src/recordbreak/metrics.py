"""Probabilistic Jaccard scoring and station cross-validation.

The Bayesian Jaccard index of one posterior draw scores record
probabilities ``p`` against observed indicators as ``TP / (TP + FP + FN)``
with ``TP`` the probability mass on record cells, ``FP`` the mass on
non-record cells and ``FN`` the missing mass on record cells.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.stats import rankdata

from . import gp, mcmc, predict

log = logging.getLogger(__name__)

EVENTS = ("max", "min", "joint")


@dataclass
class JaccardScore:
    per_draw: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.per_draw))


def bayes_jaccard(probs, observed, valid=None):
    """Per-draw Jaccard index of ``probs`` (n_draws, N) against ``observed`` (N,).

    ``valid`` selects the scored cells (tied records are excluded by the
    caller through this mask).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None, :]
    obs = np.asarray(observed).ravel()
    probs = probs.reshape(probs.shape[0], -1)
    if probs.shape[1] != obs.size:
        raise ValueError("probabilities and observations differ in size")
    keep = np.ones(obs.size, bool) if valid is None else np.asarray(valid, bool).ravel()
    if not keep.any():
        raise ValueError("no cells to score")
    p = probs[:, keep]
    rec = obs[keep] == 1
    tp = p[:, rec].sum(axis=1)
    fp = p[:, ~rec].sum(axis=1)
    fn = (1.0 - p[:, rec]).sum(axis=1)
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        j = np.where(denom > 0, tp / np.where(denom > 0, denom, 1.0), 0.0)
    return JaccardScore(j)


def auc_brier(probs, indicators):
    """Rank-based ROC area and Brier score of probabilistic forecasts."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(indicators).ravel().astype(bool)
    if p.size != y.size:
        raise ValueError("probabilities and indicators differ in size")
    n1, n0 = int(y.sum()), int((~y).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(p)
    auc = (ranks[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    brier = float(np.mean((p - y) ** 2))
    return float(auc), brier


@dataclass
class FoldPlan:
    """Partition of station indices into held-out groups."""

    groups: list

    def __post_init__(self):
        self.groups = [np.asarray(g, dtype=int) for g in self.groups]
        allidx = np.concatenate(self.groups) if self.groups else np.zeros(0, int)
        if any(g.size == 0 for g in self.groups):
            raise ValueError("fold groups must be non-empty")
        if np.unique(allidx).size != allidx.size:
            raise ValueError("fold groups must be disjoint")
        if allidx.size and not np.array_equal(np.sort(allidx), np.arange(allidx.size)):
            raise ValueError("fold groups must cover stations 0..n-1")

    @property
    def n_sites(self):
        return int(sum(g.size for g in self.groups))

    @classmethod
    def random(cls, n_sites, n_groups, seed):
        """Seeded random partition into groups of (nearly) equal size."""
        if not 2 <= n_groups <= n_sites:
            raise ValueError("need 2 <= n_groups <= n_sites")
        perm = np.random.default_rng(seed).permutation(n_sites)
        return cls([np.sort(g) for g in np.array_split(perm, n_groups)])

    def training(self, k):
        held = set(self.groups[k].tolist())
        return np.array([i for i in range(self.n_sites) if i not in held], dtype=int)


def default_periods(T):
    """Early and late year ranges (1-based, inclusive) splitting 2..T in two."""
    if T < 4:
        raise ValueError("need T >= 4 to form two scoring periods")
    mid = (T + 1) // 2
    return {"J1": (2, mid), "J2": (mid + 1, T)}


def score_fold(probs, marks, periods):
    """Jaccard scores of one held-out group.

    ``probs`` is (n_draws, 2, T - 1, L, m) for years 2..T and ``marks`` the
    held-out (2, T, n_days + 1, m) marks. Returns {(event, period): JaccardScore}.
    """
    marks = np.asarray(marks)
    obs = marks[:, 1:, 1:, :]
    tied = obs >= 2
    out = {}
    for pname, (t1, t2) in periods.items():
        sl = slice(t1 - 2, t2 - 1)
        for event in EVENTS:
            if event == "joint":
                p = probs[:, 0, sl] * probs[:, 1, sl]
                o = (obs[0, sl] == 1) & (obs[1, sl] == 1)
                valid = ~(tied[0, sl] | tied[1, sl])
            else:
                j = EVENTS.index(event)
                p = probs[:, j, sl]
                o = obs[j, sl] == 1
                valid = ~tied[j, sl]
            out[(event, pname)] = bayes_jaccard(p.reshape(p.shape[0], -1), o.astype(int), valid)
    return out


def stationary_fold_probs(T, n_days, m):
    """Probabilities 1/t of the stationary model in the one-step layout."""
    p = 1.0 / np.arange(2, T + 1)
    return np.broadcast_to(p[None, None, :, None, None], (1, 2, T - 1, n_days, m)).copy()


@dataclass
class CVResult:
    """Fold-averaged posterior-mean Jaccard per (model, event, period)."""

    scores: dict
    per_fold: dict = field(default_factory=dict)

    def rows(self):
        return [(model, event, period, value)
                for (model, event, period), value in sorted(self.scores.items())]

    def get(self, model, event, period):
        return self.scores[(model, event, period)]


def run_cv(data, variants, fold_plan, config=None, prior=None, periods=None, n_draws=200,
           seed=0):
    """Station cross-validation of one or more model variants.

    Each fold fits on the retained stations and scores one-step-ahead
    probabilities at the held-out stations given their observed previous-day
    marks. Anisotropic variants use kriged covariate values at held-out sites.
    """
    config = config or mcmc.SamplerConfig()
    prior = prior or mcmc.PriorConfig()
    if fold_plan.n_sites != data.n_sites:
        raise ValueError("fold plan does not match the number of stations")
    periods = periods or default_periods(data.T)
    variants = [mcmc.get_variant(v) if isinstance(v, str) else v for v in variants]
    fold_seeds = np.random.SeedSequence(seed).spawn(len(fold_plan.groups))
    per_fold = {}
    for k, held in enumerate(fold_plan.groups):
        train = fold_plan.training(k)
        fit_data = data.subset(train)
        held_marks = np.asarray(data.marks)[..., held]
        if not (held_marks[:, 1:, 1:] < 2).any():
            raise ValueError(f"fold {k} has no scorable cells")
        variant_seeds = fold_seeds[k].spawn(len(variants))
        for variant, ss in zip(variants, variant_seeds):
            rng = np.random.default_rng(ss)
            if variant.stationary:
                probs = stationary_fold_probs(data.T, data.n_days, held.size)
            else:
                cfg = mcmc.SamplerConfig(**{**config.__dict__,
                                            "seed": int(rng.integers(2 ** 63))})
                draws = mcmc.run_chains(variant, fit_data, cfg, prior)
                x = None
                if variant.anisotropic:
                    x = gp.simple_krige_covariate(fit_data.x, fit_data.coords,
                                                          data.coords[held])
                probs = predict.one_step_ahead(draws, data.coords[held], data.dist_coast[held],
                                               held_marks, rng, n_draws=n_draws, x=x)
            for key, score in score_fold(probs, held_marks, periods).items():
                per_fold[(variant.name,) + key + (k,)] = score.mean
            log.info("fold %d %s done", k, variant.name)
    scores = {}
    for variant in variants:
        for event in EVENTS:
            for pname in periods:
                vals = [per_fold[(variant.name, event, pname, k)]
                        for k in range(len(fold_plan.groups))]
                scores[(variant.name, event, pname)] = float(np.mean(vals))
    return CVResult(scores, per_fold)
