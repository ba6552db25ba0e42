from __future__ import annotations

from datetime import date, datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventflow.errors import CalendarOutOfRange, CoverageGap, DegenerateBaseline, InsufficientHistory
from eventflow.events import Event, EventSession
from eventflow.features import (BASE_COLUMNS, FeatureMatrix, CalendarContext, EventInputs, HolidaySpan,
                                WeatherRecord, assemble, changing_rate, date_range, dow_dummies,
                                feature_columns, holiday_features, observation_cutoff, wma, wma_series)
from eventflow.popularity import Post

CAL = CalendarContext(
    (HolidaySpan("national", date(2024, 10, 1), date(2024, 10, 3)),
     HolidaySpan("new year", date(2024, 1, 1), date(2024, 1, 1))),
    (HolidaySpan("summer", date(2024, 7, 15), date(2024, 8, 31)),),
)


class TestHolidayFeatures:
    def test_days_remaining_inside_span(self):
        assert holiday_features(date(2024, 10, 1), CAL).holidays_remaining == 3
        assert holiday_features(date(2024, 10, 3), CAL).holidays_remaining == 1

    def test_ordinary_wednesday(self):
        f = holiday_features(date(2024, 5, 15), CAL).as_tuple()
        assert f[:3] == (0, 0, 0) and f[3] > 0 and f[4] == 0

    def test_day_before(self):
        f = holiday_features(date(2024, 9, 30), CAL)
        assert f.day_before_holiday == 1 and f.week_near_holiday == 1

    def test_weekend_day_before_is_not_flagged(self):
        cal = CalendarContext((HolidaySpan("h", date(2024, 6, 10), date(2024, 6, 10)),))
        assert holiday_features(date(2024, 6, 9), cal).day_before_holiday == 0  # a Sunday

    def test_school_vacation(self):
        assert holiday_features(date(2024, 8, 1), CAL).school_holiday == 1

    def test_working_day_distance(self):
        # Fri 2024-09-27 -> next holiday Tue 2024-10-01: Fri, Mon are working days before it
        assert holiday_features(date(2024, 9, 27), CAL).days_to_nearest_holiday == 2

    def test_outside_coverage(self):
        with pytest.raises(CalendarOutOfRange):
            holiday_features(date(2025, 1, 2), CAL)

    def test_overlapping_spans_rejected(self):
        with pytest.raises(ValueError):
            CalendarContext((HolidaySpan("a", date(2024, 1, 1), date(2024, 1, 3)),
                             HolidaySpan("b", date(2024, 1, 3), date(2024, 1, 4))))


class TestWeekday:
    def test_tuesday_is_reference(self):
        assert dow_dummies(date(2024, 5, 14)) == (0,) * 6

    def test_saturday(self):
        assert dow_dummies(date(2024, 5, 18)) == (0, 0, 0, 0, 1, 0)

    def test_each_column_once_per_week(self):
        week = np.array([dow_dummies(date(2024, 5, 13) + timedelta(days=k)) for k in range(7)])
        assert week.sum(axis=0).tolist() == [1] * 6


class TestWma:
    def test_hand_example(self):
        assert wma([10, 20, 30], 3) == pytest.approx(140 / 6, abs=1e-12)

    @given(st.floats(1e-3, 1e6), st.integers(1, 20))
    def test_constant_series(self, c, P):
        assert wma([c] * (P + 3), P) == pytest.approx(c, rel=1e-14)

    def test_series_agrees_with_pointwise(self):
        x = np.random.default_rng(0).lognormal(size=40)
        s = wma_series(x, 10)
        assert np.isnan(s[:9]).all()
        for t in range(9, 40):
            assert s[t] == pytest.approx(wma(x[:t + 1], 10), abs=1e-12)

    def test_short_history(self):
        with pytest.raises(InsufficientHistory):
            wma([1.0, 2.0], 3)


class TestChangingRate:
    def test_ratio(self):
        # P=1 makes the WMA the value itself: M_{t-1}=110, M_{t-2}=100
        assert changing_rate([100.0, 110.0, 999.0], 2, 1) == pytest.approx(0.10, abs=1e-15)

    def test_constant_series(self):
        assert changing_rate([7.0] * 20, 15, 10) == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1, 1e5), min_size=13, max_size=30), st.floats(1e-3, 1e3))
    def test_scale_invariant(self, xs, k):
        x = np.array(xs)
        t = len(x)
        assert changing_rate(k * x, t, 10) == pytest.approx(changing_rate(x, t, 10), rel=1e-9, abs=1e-12)

    def test_zero_baseline(self):
        with pytest.raises(DegenerateBaseline):
            changing_rate([0.0, 0.0, 5.0], 2, 1)


class TestColumns:
    def test_counts(self):
        assert len(feature_columns("FS1")) == 15
        assert len(feature_columns("FS2")) == len(feature_columns("FS3")) == 19
        fs5 = feature_columns("FS5")
        assert len(fs5) == 22
        assert [c for c in fs5 if c.startswith("wom_")] == ["wom_concert", "wom_exhibition", "wom_sports"]

    def test_exhibition_split(self):
        cols = feature_columns("FS5", exhibition_split=True)
        assert "wom_exhibition" not in cols
        assert cols[-3:] == ("wom_exhibition_early", "wom_exhibition_late", "wom_sports")

    def test_unknown_set(self):
        with pytest.raises(ValueError):
            feature_columns("FS6")


START = date(2024, 3, 1)


def _inputs(days=60, seed=0):
    rng = np.random.default_rng(seed)
    all_days = date_range(START - timedelta(days=11), START + timedelta(days=days - 1))
    flows = {d: float(rng.integers(50_000, 90_000)) for d in all_days}
    weather = {d: WeatherRecord(d, float(rng.uniform(0, 30)), 25.0, False) for d in all_days}
    return flows, weather


def _concert(eid, day_offsets, hour=20):
    sessions = tuple(EventSession(datetime.combine(START + timedelta(days=d), datetime.min.time()).replace(hour=hour),
                                  datetime.combine(START + timedelta(days=d), datetime.min.time()).replace(hour=22),
                                  k + 1, eid) for k, d in enumerate(day_offsets))
    return Event(eid, eid, "concert", "s", "v", sessions)


class TestAssemble:
    def test_fs1_shape(self):
        flows, weather = _inputs(30)
        fm = assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS1")
        assert fm.values.shape == (30, 15)
        assert fm.target.tolist() == [flows[d] for d in fm.dates]

    def test_day_without_events_has_zero_event_columns(self):
        flows, weather = _inputs(30)
        ev = _concert("C", [5, 6])
        posts = {"C": [Post("p", "u", "t", "c", datetime(2024, 2, 20), 40, 2)]}
        fm = assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS5",
                      EventInputs([ev], related_posts=posts), popularity_lag=1)
        block = fm.values[:, len(BASE_COLUMNS):]
        busy = {5, 6}
        assert np.all(block[[i for i in range(30) if i not in busy]] == 0)
        assert fm.column("promo_concert")[5] == 42.0

    def test_trend_ignores_same_day_and_future_flows(self):
        flows, weather = _inputs(30)
        a = assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS1")
        k = 17
        bumped = dict(flows)
        for d in date_range(START + timedelta(days=k), START + timedelta(days=29)):
            bumped[d] *= 3.0
        b = assemble(START, START + timedelta(days=29), bumped, weather, CAL, "FS1")
        assert np.array_equal(a.values[:k + 1], b.values[:k + 1])
        assert not np.array_equal(a.values[k + 1:], b.values[k + 1:])

    def test_popularity_lag_hides_posts_from_the_same_day(self):
        flows, weather = _inputs(30)
        ev = _concert("C", [5, 8])
        evening = datetime.combine(START + timedelta(days=5), datetime.min.time()).replace(hour=23)
        posts = {"C": [Post("wom", "u", "t", "c", evening, 500, 0)]}
        fm = assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS5",
                      EventInputs([ev], related_posts=posts), popularity_lag=1)
        final = assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS5",
                         EventInputs([ev], related_posts=posts), popularity_lag=None)
        assert fm.column("wom_concert")[8] == 500.0  # visible by day 8
        assert final.column("wom_concert")[8] == 500.0
        lagged2 = assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS5",
                           EventInputs([ev], related_posts=posts), popularity_lag=3)
        assert lagged2.column("wom_concert")[8] == 500.0
        lagged4 = assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS5",
                           EventInputs([ev], related_posts=posts), popularity_lag=4)
        assert lagged4.column("wom_concert")[8] == 0.0

    def test_coverage_gap_lists_missing_days(self):
        flows, weather = _inputs(30)
        del weather[START + timedelta(days=3)]
        with pytest.raises(CoverageGap):
            assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS1")

    def test_event_sets_need_events(self):
        flows, weather = _inputs(30)
        with pytest.raises(ValueError):
            assemble(START, START + timedelta(days=29), flows, weather, CAL, "FS3")

    def test_csv_round_trip(self, tmp_path):
        flows, weather = _inputs(20)
        fm = assemble(START, START + timedelta(days=19), flows, weather, CAL, "FS1")
        path = tmp_path / "fm.csv"
        path.write_text(fm.to_csv_text())
        back = FeatureMatrix.from_csv(path)
        assert back.feature_set == "FS1"
        assert np.array_equal(back.values, fm.values) and np.array_equal(back.target, fm.target)


class TestObservationCutoff:
    def test_lag_one_is_midnight_of_the_day(self):
        assert observation_cutoff(date(2024, 5, 2), 1) == datetime(2024, 5, 2)

    def test_none_means_final(self):
        assert observation_cutoff(date(2024, 5, 2), None) is None

    def test_lag_zero_rejected(self):
        with pytest.raises(ValueError):
            observation_cutoff(date(2024, 5, 2), 0)
