"""Load a corpus directory and turn it into feature matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

from .events import Event, read_events
from .features import (WMA_PERIOD, CalendarContext, EventInputs, FeatureMatrix, WeatherRecord, assemble,
                       read_calendar, read_flows, read_weather)
from .popularity import (PopularityMetrics, Post, SelectionConfig, read_posts, read_popularity,
                         read_relevance, related_posts_by_event)


@dataclass
class Corpus:
    flows: dict[date, float]
    weather: dict[date, WeatherRecord]
    calendar: CalendarContext
    events: list[Event] = field(default_factory=list)
    related_posts: dict[str, list[Post]] | None = None
    metrics: dict[str, PopularityMetrics] | None = None

    @property
    def first_day(self) -> date:
        return min(self.flows)

    @property
    def last_day(self) -> date:
        return max(self.flows)

    def event_inputs(self, selection: SelectionConfig = SelectionConfig()) -> EventInputs:
        return EventInputs(self.events, self.metrics, self.related_posts, selection)

    def matrix(self, feature_set: str, popularity_lag: int | None = 1, start: date | None = None,
               end: date | None = None, exhibition_split: bool = False,
               selection: SelectionConfig = SelectionConfig()) -> FeatureMatrix:
        """Feature matrix over the longest span the flow history allows, unless narrowed."""
        start = start or self.first_day + timedelta(days=WMA_PERIOD + 1)
        end = end or self.last_day
        inputs = self.event_inputs(selection) if feature_set != "FS1" else None
        return assemble(start, end, self.flows, self.weather, self.calendar, feature_set, inputs,
                        popularity_lag, exhibition_split)


def load_corpus(directory, segment: str | None = None, selection: SelectionConfig = SelectionConfig(),
                with_events: bool = True) -> Corpus:
    """Read ``flows.csv``, ``weather.csv``, ``holidays.csv`` and, if present, events and posts.

    Popularity comes from ``posts.jsonl`` + ``relevance.csv`` when both exist
    (so it can be recomputed under an observation cutoff), else from
    ``popularity.csv``.
    """
    d = Path(directory)
    corpus = Corpus(read_flows(d / "flows.csv", segment), read_weather(d / "weather.csv"),
                    read_calendar(d / "holidays.csv"))
    if not with_events or not (d / "events.json").exists():
        return corpus
    corpus.events = read_events(d / "events.json")
    if (d / "posts.jsonl").exists() and (d / "relevance.csv").exists():
        corpus.related_posts = related_posts_by_event(corpus.events, read_posts(d / "posts.jsonl"),
                                                      read_relevance(d / "relevance.csv"), selection)
    elif (d / "popularity.csv").exists():
        corpus.metrics = read_popularity(d / "popularity.csv")
    return corpus
