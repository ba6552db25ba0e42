"""Day-indexed design matrices for the five feature sets.

Column layout (identical prefix for every set)::

    dow_mon dow_wed dow_thu dow_fri dow_sat dow_sun          day of week, Tuesday is the reference
    holidays_remaining day_before_holiday week_near_holiday
    days_to_nearest_holiday school_holiday                   calendar
    rainfall_mm tmax_c typhoon                               weather
    wma_change_rate                                          flow trend up to the previous day

followed by the event block of the chosen set:

    FS1  nothing
    FS2  count_{concert,fireworks,exhibition,sports}
    FS3  overall_{...}
    FS4  promo_{...}
    FS5  promo_{...} + wom_{concert,exhibition,sports}
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CalendarOutOfRange, CoverageGap, DegenerateBaseline, InsufficientHistory
from .events import Event
from .popularity import PopularityMetrics, Post, SelectionConfig, compute_metrics, session_is_early

FEATURE_SETS = ("FS1", "FS2", "FS3", "FS4", "FS5")
FEATURE_TYPES = ("concert", "fireworks", "exhibition", "sports")
WOM_TYPES = ("concert", "exhibition", "sports")
DOW_COLUMNS = ("dow_mon", "dow_wed", "dow_thu", "dow_fri", "dow_sat", "dow_sun")
HOLIDAY_COLUMNS = ("holidays_remaining", "day_before_holiday", "week_near_holiday",
                   "days_to_nearest_holiday", "school_holiday")
WEATHER_COLUMNS = ("rainfall_mm", "tmax_c", "typhoon")
TREND_COLUMN = "wma_change_rate"
BASE_COLUMNS = DOW_COLUMNS + HOLIDAY_COLUMNS + WEATHER_COLUMNS + (TREND_COLUMN,)
WMA_PERIOD = 10
NEAR_HOLIDAY_DAYS = 7

_DOW_INDEX = {0: 0, 2: 1, 3: 2, 4: 3, 5: 4, 6: 5}  # weekday() -> column; Tuesday (1) omitted


def feature_columns(feature_set: str, exhibition_split: bool = False) -> tuple[str, ...]:
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}; expected one of {FEATURE_SETS}")
    prefix = {"FS1": None, "FS2": "count", "FS3": "overall", "FS4": "promo", "FS5": "promo"}[feature_set]
    cols = list(BASE_COLUMNS)
    if prefix:
        cols += [f"{prefix}_{t}" for t in FEATURE_TYPES]
    if feature_set == "FS5":
        for t in WOM_TYPES:
            if t == "exhibition" and exhibition_split:
                cols += ["wom_exhibition_early", "wom_exhibition_late"]
            else:
                cols.append(f"wom_{t}")
    return tuple(cols)


@dataclass(frozen=True)
class HolidaySpan:
    name: str
    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"holiday {self.name!r} ends before it starts")

    def __contains__(self, d: date) -> bool:
        return self.start <= d <= self.end


def _check_disjoint(spans: Sequence[HolidaySpan], what: str):
    ordered = sorted(spans, key=lambda s: s.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            raise ValueError(f"{what} spans overlap: {a.name!r} and {b.name!r}")


@dataclass(frozen=True)
class CalendarContext:
    """Public-holiday and school-vacation spans over a coverage window.

    ``coverage`` defaults to whole calendar years around the spans; a query
    outside it raises :class:`CalendarOutOfRange` because holidays beyond
    the known range cannot be told apart from ordinary days.
    """

    holiday_spans: tuple[HolidaySpan, ...]
    school_vacation_spans: tuple[HolidaySpan, ...] = ()
    coverage: tuple[date, date] | None = None
    weekend: tuple[int, ...] = (5, 6)

    def __post_init__(self):
        hs = tuple(sorted(self.holiday_spans, key=lambda s: s.start))
        ss = tuple(sorted(self.school_vacation_spans, key=lambda s: s.start))
        _check_disjoint(hs, "holiday")
        _check_disjoint(ss, "school vacation")
        object.__setattr__(self, "holiday_spans", hs)
        object.__setattr__(self, "school_vacation_spans", ss)
        if self.coverage is None:
            everything = hs + ss
            if everything:
                lo = date(min(s.start.year for s in everything), 1, 1)
                hi = date(max(s.end.year for s in everything), 12, 31)
            else:
                lo, hi = date.min, date.max
            object.__setattr__(self, "coverage", (lo, hi))

    def covers(self, d: date) -> bool:
        return self.coverage[0] <= d <= self.coverage[1]

    def is_weekday(self, d: date) -> bool:
        return d.weekday() not in self.weekend

    def holiday_at(self, d: date) -> HolidaySpan | None:
        for s in self.holiday_spans:
            if d in s:
                return s
        return None


@dataclass(frozen=True)
class HolidayFeatures:
    holidays_remaining: int
    day_before_holiday: int
    week_near_holiday: int
    days_to_nearest_holiday: int
    school_holiday: int

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.holidays_remaining, self.day_before_holiday, self.week_near_holiday,
                self.days_to_nearest_holiday, self.school_holiday)


def _busdays(a: date, b: date, cal: CalendarContext) -> int:
    """Working days in [a, b)."""
    mask = [0 if k in cal.weekend else 1 for k in range(7)]
    return int(np.busday_count(a, b, weekmask=mask))


def holiday_features(d: date, cal: CalendarContext) -> HolidayFeatures:
    if isinstance(d, datetime):
        d = d.date()
    if not cal.covers(d):
        raise CalendarOutOfRange(f"{d} outside calendar coverage {cal.coverage[0]}..{cal.coverage[1]}")
    current = cal.holiday_at(d)
    weekday = cal.is_weekday(d)
    school = int(any(d in s for s in cal.school_vacation_spans))
    if current is not None:
        return HolidayFeatures((current.end - d).days + 1, 0, 0, 0, school)

    tomorrow = d + timedelta(days=1)
    day_before = int(weekday and any(s.start == tomorrow for s in cal.holiday_spans))
    near = 0
    if weekday:
        for s in cal.holiday_spans:
            if 1 <= (s.start - d).days <= NEAR_HOLIDAY_DAYS or 1 <= (d - s.end).days <= NEAR_HOLIDAY_DAYS:
                near = 1
                break
    upcoming = [s for s in cal.holiday_spans if s.start > d]
    previous = [s for s in cal.holiday_spans if s.end < d]
    distances = []
    if upcoming:
        distances.append(_busdays(d, upcoming[0].start, cal))
    if previous:
        distances.append(_busdays(previous[-1].end + timedelta(days=1), d + timedelta(days=1), cal))
    return HolidayFeatures(0, day_before, near, min(distances) if distances else 0, school)


def dow_dummies(d: date) -> tuple[int, ...]:
    out = [0] * 6
    k = _DOW_INDEX.get(d.weekday())
    if k is not None:
        out[k] = 1
    return tuple(out)


def wma_weights(P: int = WMA_PERIOD) -> np.ndarray:
    """Weights for values ordered oldest to newest: 1, 2, ..., P."""
    return np.arange(1, P + 1, dtype=float)


def wma(values: Sequence[float], P: int = WMA_PERIOD) -> float:
    """Linearly weighted moving average of the last ``P`` values (newest weighted ``P``)."""
    if P < 1:
        raise ValueError("P must be >= 1")
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < P:
        raise InsufficientHistory(f"need {P} values, got {len(x)}")
    x = x[-P:]
    if not np.all(np.isfinite(x)):
        raise ValueError("wma input must be finite")
    w = wma_weights(P)
    return float((x * w).sum() / w.sum())


def wma_series(series: Sequence[float], P: int = WMA_PERIOD) -> np.ndarray:
    """``out[t]`` is the WMA ending at ``t``; NaN for the first ``P - 1`` entries."""
    x = np.asarray(series, dtype=float)
    out = np.full(len(x), np.nan)
    if len(x) >= P:
        w = wma_weights(P)
        out[P - 1:] = (sliding_window_view(x, P) * w).sum(axis=1) / w.sum()
    return out


def changing_rate(series: Sequence[float], t: int, P: int = WMA_PERIOD) -> float:
    """Relative change of the WMA between days ``t-2`` and ``t-1`` (0-based ``t``)."""
    x = np.asarray(series, dtype=float)
    if t - 2 - (P - 1) < 0 or t > len(x):
        raise InsufficientHistory(f"changing rate at t={t} needs {P + 1} earlier values")
    m1 = wma(x[t - P:t], P)
    m2 = wma(x[t - 1 - P:t - 1], P)
    if m2 == 0:
        raise DegenerateBaseline(f"WMA baseline is zero at t={t - 2}")
    return (m1 - m2) / m2


@dataclass(frozen=True)
class WeatherRecord:
    date: date
    rainfall_mm: float
    tmax_c: float
    typhoon: bool = False

    def __post_init__(self):
        if not self.rainfall_mm >= 0:
            raise ValueError(f"{self.date}: rainfall must be non-negative")


@dataclass
class FeatureMatrix:
    dates: list[date]
    columns: tuple[str, ...]
    values: np.ndarray
    target: np.ndarray
    feature_set: str
    trend_columns: tuple[str, ...] = (TREND_COLUMN,)
    popularity_lag: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        self.columns = tuple(self.columns)
        if self.values.shape != (len(self.dates), len(self.columns)):
            raise ValueError(f"values shape {self.values.shape} does not match "
                             f"{len(self.dates)} dates x {len(self.columns)} columns")
        if self.target.shape != (len(self.dates),):
            raise ValueError("one target per date required")
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise ValueError(f"dates must be consecutive days ({a} -> {b})")

    def __len__(self):
        return len(self.dates)

    @property
    def trend_index(self) -> list[int]:
        return [self.columns.index(c) for c in self.trend_columns if c in self.columns]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=list(self.columns))
        df.insert(0, "date", [d.isoformat() for d in self.dates])
        df["target"] = self.target
        return df

    def to_csv_text(self) -> str:
        lines = [",".join(("date",) + self.columns + ("target",))]
        for d, row, y in zip(self.dates, self.values, self.target):
            lines.append(",".join([d.isoformat()] + [repr(float(v)) for v in row] + [repr(float(y))]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path, feature_set: str | None = None) -> "FeatureMatrix":
        df = pd.read_csv(path, float_precision="round_trip")
        cols = tuple(c for c in df.columns if c not in ("date", "target"))
        if feature_set is None:
            feature_set = next((fs for fs in FEATURE_SETS
                                if cols in (feature_columns(fs), feature_columns(fs, True))), "custom")
        return cls([date.fromisoformat(d) for d in df["date"]], cols,
                   df[list(cols)].to_numpy(dtype=float), df["target"].to_numpy(dtype=float), feature_set)


@dataclass
class EventInputs:
    """Events plus what is needed to evaluate their popularity on a given day.

    With ``related_posts`` set, metrics can be recomputed under an
    observation cutoff; otherwise the precomputed ``metrics`` are used as is.
    """

    events: list[Event]
    metrics: Mapping[str, PopularityMetrics] | None = None
    related_posts: Mapping[str, list[Post]] | None = None
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def __post_init__(self):
        if self.metrics is None and self.related_posts is None:
            raise ValueError("either metrics or related_posts must be given")
        self._cache: dict = {}

    def metrics_for(self, event: Event, cutoff: datetime | None) -> PopularityMetrics:
        if cutoff is None and self.metrics is not None:
            return self.metrics[event.event_id]
        key = (event.event_id, cutoff)
        if key not in self._cache:
            posts = (self.related_posts or {}).get(event.event_id, [])
            self._cache[key] = compute_metrics(event, posts, self.selection, cutoff)
        return self._cache[key]


def observation_cutoff(day: date, lag: int | None) -> datetime | None:
    """Posts created before this instant are visible when building row ``day``.

    ``lag=k`` means the row must be computable at the end of day ``day - k``.
    """
    if lag is None:
        return None
    if lag < 1:
        raise ValueError("popularity lag must be >= 1")
    return datetime.combine(day - timedelta(days=lag - 1), time.min)


def event_block(day: date, feature_set: str, inputs: EventInputs | None, sessions_by_day,
                lag: int | None, exhibition_split: bool = False) -> list[float]:
    cols = feature_columns(feature_set, exhibition_split)[len(BASE_COLUMNS):]
    out = dict.fromkeys(cols, 0.0)
    if inputs is None or not cols:
        return [out[c] for c in cols]
    cutoff = observation_cutoff(day, lag)
    for ev, ks in sessions_by_day.get(day, ()):
        t = ev.event_type
        if t not in FEATURE_TYPES:
            continue
        if feature_set == "FS2":
            out[f"count_{t}"] += 1
            continue
        m = inputs.metrics_for(ev, cutoff)
        if feature_set == "FS3":
            out[f"overall_{t}"] += m.overall
            continue
        out[f"promo_{t}"] += m.promotional
        if feature_set == "FS5" and t in WOM_TYPES:
            for k in ks:
                if t == "exhibition" and exhibition_split:
                    part = "early" if session_is_early(ev, k) else "late"
                    out[f"wom_exhibition_{part}"] += m.wom_per_session[k]
                else:
                    out[f"wom_{t}"] += m.wom_per_session[k]
    return [out[c] for c in cols]


def sessions_by_day(events: Iterable[Event]) -> dict[date, list[tuple[Event, list[int]]]]:
    """day -> [(event, indices of its sessions starting that day)]"""
    index: dict[date, dict[str, tuple[Event, list[int]]]] = {}
    for ev in events:
        for k, s in enumerate(ev.sessions):
            slot = index.setdefault(s.day, {})
            slot.setdefault(ev.event_id, (ev, []))[1].append(k)
    return {d: list(v.values()) for d, v in index.items()}


def date_range(start: date, end: date) -> list[date]:
    return [start + timedelta(days=k) for k in range((end - start).days + 1)]


def assemble(start: date, end: date, flows: Mapping[date, float], weather: Mapping[date, WeatherRecord],
             calendar: CalendarContext, feature_set: str, events: EventInputs | None = None,
             popularity_lag: int | None = None, exhibition_split: bool = False,
             P: int = WMA_PERIOD) -> FeatureMatrix:
    """Build the design matrix for days ``start..end`` inclusive.

    Row ``t`` sees flows through ``t - 1`` only (trend column); calendar,
    weather and the event schedule of day ``t`` itself; and event popularity
    as observable under ``popularity_lag`` (``None`` means final counts).
    """
    cols = feature_columns(feature_set, exhibition_split)
    if feature_set != "FS1" and events is None:
        raise ValueError(f"{feature_set} needs event inputs")
    days = date_range(start, end)
    history = date_range(start - timedelta(days=P + 1), end)
    missing = {
        "flows": [d for d in history if d not in flows],
        "weather": [d for d in days if d not in weather],
        "calendar": [d for d in days if not calendar.covers(d)],
    }
    if any(missing.values()):
        raise CoverageGap(missing)

    series = np.array([float(flows[d]) for d in history])
    m = wma_series(series, P)
    by_day = sessions_by_day(events.events) if events is not None else {}
    rows = []
    for i, d in enumerate(days):
        t = i + P + 1  # index of d in `history`
        m1, m2 = m[t - 1], m[t - 2]
        if m2 == 0:
            raise DegenerateBaseline(f"WMA baseline is zero before {d}")
        w = weather[d]
        rows.append(
            list(dow_dummies(d))
            + list(holiday_features(d, calendar).as_tuple())
            + [float(w.rainfall_mm), float(w.tmax_c), float(bool(w.typhoon))]
            + [(m1 - m2) / m2]
            + event_block(d, feature_set, events, by_day, popularity_lag, exhibition_split)
        )
    values = np.array(rows, dtype=float).reshape(len(days), len(cols))
    target = np.array([float(flows[d]) for d in days])
    return FeatureMatrix(days, cols, values, target, feature_set, popularity_lag=popularity_lag)


# readers

def read_flows(path, segment: str | None = None) -> dict[date, float]:
    """``flows.csv`` -> {date: arrivals}; without ``segment`` all segments are summed."""
    df = pd.read_csv(path, float_precision="round_trip")
    if "segment" in df.columns:
        if segment is not None:
            df = df[df["segment"] == segment]
            if df.empty:
                raise ValueError(f"no rows for segment {segment!r} in {path}")
        df = df.groupby("date", sort=True)["arrivals"].sum().reset_index()
    elif segment is not None:
        raise ValueError(f"{path} has no segment column")
    return {date.fromisoformat(d): float(v) for d, v in zip(df["date"], df["arrivals"])}


def read_weather(path) -> dict[date, WeatherRecord]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            d = date.fromisoformat(rec["date"])
            out[d] = WeatherRecord(d, float(rec["rainfall_mm"]), float(rec["tmax_c"]),
                                   rec["typhoon"].strip().lower() in ("1", "true", "yes"))
    return out


def read_calendar(path, coverage: tuple[date, date] | None = None) -> CalendarContext:
    public, school = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            span = HolidaySpan(rec["name"], date.fromisoformat(rec["start"]), date.fromisoformat(rec["end"]))
            kind = rec.get("kind", "public").strip()
            if kind == "public":
                public.append(span)
            elif kind == "school":
                school.append(span)
            else:
                raise ValueError(f"unknown holiday kind {kind!r}")
    return CalendarContext(tuple(public), tuple(school), coverage)
