import math

import numpy as np
import pytest

from recordbreak import records, synthetic
from recordbreak.synthetic import SyntheticSpec, generate_synthetic


def test_stationary_generator_rates():
    n, T = 10000, 50
    marks = synthetic.stationary_marks(n, T, np.random.default_rng(0))
    for t in (2, 10, 50):
        p = (marks[t - 1] == 1).mean()
        assert abs(p - 1 / t) < 3 * math.sqrt((1 / t) * (1 - 1 / t) / n) + 1e-12


def test_zero_model_gives_half():
    spec = SyntheticSpec(n_sites=40, T=6, n_days=40, generator="model", coefficients=np.zeros((2, 8)),
                         a=(0.0, 0.0, 0.0))
    ind = generate_synthetic(spec, 1).truth["indicators"]
    for ti in range(1, 6):
        rate = ind[:, ti, 1:].mean()
        assert abs(rate - 0.5) < 3 * math.sqrt(0.25 / ind[:, ti, 1:].size)


@pytest.mark.parametrize("kw", [dict(), dict(tie_rate=0.2, missing_rate=0.1), dict(eff_range_x=0.3),
                                dict(varying_coreg={})])
def test_extraction_round_trip(kw):
    spec = SyntheticSpec(n_sites=5, T=8, n_days=10, generator="model", **kw)
    data = generate_synthetic(spec, 3)
    panel = data.panel()
    np.testing.assert_array_equal(panel.marks, data.marks)
    ind = data.truth["indicators"]
    np.testing.assert_array_equal(records.success_probability(panel.marks) > 0, ind == 1)
    if not kw:
        np.testing.assert_array_equal(panel.marks, ind)


def test_stationary_round_trip_with_ties():
    spec = SyntheticSpec(n_sites=4, T=10, n_days=5, generator="stationary", tie_rate=0.1, missing_rate=0.1)
    data = generate_synthetic(spec, 7)
    panel = data.panel()
    np.testing.assert_array_equal(panel.marks, data.marks)
    assert (panel.marks >= 2).any() and panel.missing.any()


def test_seeded_and_shaped():
    spec = SyntheticSpec(n_sites=3, T=4, n_days=6, generator="model")
    a, b = generate_synthetic(spec, 9), generate_synthetic(spec, 9)
    np.testing.assert_array_equal(a.marks, b.marks)
    assert a.marks.shape == (2, 4, 7, 3)
    assert a.series[0].days[0] == records.SEED_DAY and a.series[0].years[0] == 1961


@pytest.mark.parametrize("kw", [dict(n_sites=1), dict(T=2), dict(tie_rate=1.0), dict(missing_rate=-0.1),
                                dict(generator="other"), dict(n_days=93), dict(coefficients=np.zeros(3))])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        SyntheticSpec(**kw)
