import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from recordbreak import records
from recordbreak.records import ContingencyCounts, log_odds_ratio, marks_from_values


def _series(values_max, values_min=None, site="s1"):
    vmax = np.asarray(values_max, float).reshape(len(values_max), -1)
    vmin = vmax if values_min is None else np.asarray(values_min, float).reshape(vmax.shape)
    T, L = vmax.shape
    return records.DailyTemperatureSeries(
        site_id=site, x_km=0.0, y_km=0.0, dist_coast=1.0, sx=None,
        years=np.arange(1, T + 1), days=np.arange(151, 151 + L), tmax=vmax, tmin=vmin)


def _running_max_marks(seq):
    """Reference: strict and weak records by explicit scanning."""
    out, best, count = [], None, 0
    for t, v in enumerate(seq):
        if t == 0:
            out.append(1)
            if not math.isnan(v):
                best, count = v, 1
            continue
        if math.isnan(v) or (best is not None and v < best):
            out.append(0)
        elif best is None or v > best:
            out.append(1)
            best, count = v, 1
        else:
            count += 1
            out.append(count)
    return out


class TestExtractIndicators:
    def test_strict_records(self):
        assert marks_from_values([3.0, 1.0, 4.0, 2.0, 5.0]).tolist() == [1, 0, 1, 0, 1]

    def test_ties_count_prior_weak_records(self):
        assert marks_from_values([3.0, 3.0, 3.0]).tolist() == [1, 2, 3]

    def test_missing_is_never_a_record(self):
        assert marks_from_values([3.0, np.nan, 4.0]).tolist() == [1, 0, 1]

    def test_missing_first_year_is_a_record(self):
        assert marks_from_values([np.nan, 1.0, 0.5]).tolist() == [1, 1, 0]

    def test_tie_after_new_record_restarts_count(self):
        assert marks_from_values([2.0, 2.0, 5.0, 5.0]).tolist() == [1, 2, 1, 2]

    def test_series_signals(self):
        s = _series([[1.0, 2.0], [3.0, 1.0]], [[5.0, 5.0], [4.0, 5.0]])
        assert records.extract_indicators(s, "max").tolist() == [[1, 1], [1, 0]]
        assert records.extract_indicators(s, "min").tolist() == [[1, 1], [0, 2]]

    def test_errors(self):
        with pytest.raises(ValueError):
            marks_from_values([])
        with pytest.raises(ValueError):
            marks_from_values([1.0])

    @given(st.lists(st.one_of(st.integers(-5, 5).map(float), st.just(float("nan"))),
                    min_size=2, max_size=30))
    def test_matches_reference_scan(self, seq):
        assert marks_from_values(seq).tolist() == _running_max_marks(seq)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=40, unique=True))
    def test_ones_count_strict_running_maxima(self, seq):
        marks = marks_from_values(seq)
        n_maxima = sum(1 for t, v in enumerate(seq) if all(v > u for u in seq[:t]))
        assert int((marks == 1).sum()) == n_maxima
        assert marks.max() <= 1


class TestPanel:
    def test_joint_marks(self):
        j = records.joint_panel([1, 1, 2, 0, 2], [1, 0, 1, 3, 3])
        assert j.tolist() == [1, 0, 2, 0, 6]
        assert records.success_probability(j).tolist() == [1.0, 0.0, 0.5, 0.0, 1 / 6]

    def test_joint_shape_mismatch(self):
        with pytest.raises(ValueError):
            records.joint_panel([1, 0], [1])

    def test_build_panel_first_year_all_records(self, rng):
        vals = rng.normal(size=(6, 4))
        vals[0, 1] = np.nan
        panel = records.build_panel([_series(vals, site="a"), _series(vals[::-1].copy(), site="b")])
        assert panel.marks.shape == (2, 6, 4, 2)
        assert (panel.marks[:, 0] == 1).all()
        assert panel.missing[0, 0, 1, 0]

    def test_misaligned_series_rejected(self):
        with pytest.raises(ValueError):
            records.build_panel([_series(np.ones((3, 2))), _series(np.ones((4, 2)))])


class TestEmpiricalRate:
    def test_all_records(self):
        assert records.empirical_rate(np.ones((3, 92, 4), int), 2) == 1.0

    def test_half(self):
        m = np.zeros((3, 10, 2), int)
        m[1, :5] = 1
        assert records.empirical_rate(m, 2) == 0.5

    def test_ties_count_as_zero(self):
        m = np.full((2, 4, 1), 2)
        assert records.empirical_rate(m, 2) == 0.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            records.empirical_rate(np.ones((3, 2, 2), int), 4)

    def test_stationary_law(self):
        from recordbreak.synthetic import stationary_marks
        T, n = 20, 20000
        marks = stationary_marks(n, T, np.random.default_rng(3))
        for t in (2, 5, 20):
            p = records.empirical_rate(marks.reshape(T, n, 1), t)
            se = math.sqrt((1 / t) * (1 - 1 / t) / n)
            assert abs(p - 1 / t) < 3.5 * se


class TestLogOddsRatio:
    def test_zero_table(self):
        assert log_odds_ratio(ContingencyCounts(0, 0, 0, 0)) == 0.0

    def test_positive_association(self):
        assert log_odds_ratio(ContingencyCounts(n00=10, n01=5, n10=5, n11=10)) == pytest.approx(1.2934, abs=2e-4)
        assert log_odds_ratio(ContingencyCounts(10, 5, 5, 10)) == pytest.approx(math.log(110.25 / 30.25), rel=1e-14)

    def test_negative_association(self):
        assert log_odds_ratio(ContingencyCounts(n00=0, n01=10, n10=10, n11=0)) == pytest.approx(-6.0890, abs=1e-4)

    @given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
    def test_antisymmetry(self, a, b, c, d):
        lor = log_odds_ratio(ContingencyCounts(n00=a, n01=b, n10=c, n11=d))
        swapped = log_odds_ratio(ContingencyCounts(n00=b, n01=a, n10=d, n11=c))
        assert swapped == pytest.approx(-lor, abs=1e-12)

    def test_counts_total_cells(self, rng):
        vals = rng.normal(size=(5, 8))
        panel = records.build_panel([_series(vals, rng.normal(size=(5, 8)), site=str(i)) for i in range(3)])
        c = records.concurrence_counts(panel, 3)
        assert c.total == 7 * 3
        p = records.persistence_counts(panel, 3, "min", "max")
        assert p.total == 7 * 3


def test_label_roundtrip():
    assert records.label_to_month_day(151) == (5, 31)
    assert records.label_to_month_day(152) == (6, 1)
    assert records.label_to_month_day(243) == (8, 31)
