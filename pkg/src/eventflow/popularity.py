"""Engagement, post windows and the overall / promotional / word-of-mouth metrics.

Word-of-mouth engagement collected between session ``k`` and session ``k+1``
is spread evenly over the ``N - k`` sessions that follow, so the per-session
word-of-mouth popularity of session ``n`` is::

    womp[n] = sum(wom[k] / (N - k) for k in 1 .. n-1),   womp[1] = 0
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from dateutil.relativedelta import relativedelta

from .errors import TypeMismatch
from .events import Event, EventSession

POPULARITY_KINDS = ("count", "overall", "promotional", "wom")


@dataclass(frozen=True)
class Post:
    post_id: str
    author_id: str
    title: str
    content: str
    created_at: datetime
    likes: int = 0
    collects: int = 0
    hashtags: tuple[str, ...] = ()
    geotags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.likes < 0 or self.collects < 0:
            raise ValueError(f"post {self.post_id}: engagement counts must be non-negative")
        if self.created_at is None:
            raise ValueError(f"post {self.post_id}: created_at is required")
        object.__setattr__(self, "hashtags", tuple(self.hashtags))
        object.__setattr__(self, "geotags", tuple(self.geotags))

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "author_id": self.author_id,
            "title": self.title,
            "content": self.content,
            "hashtags": list(self.hashtags),
            "geotags": list(self.geotags),
            "created_at": self.created_at.isoformat(),
            "likes": self.likes,
            "collects": self.collects,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Post":
        return cls(
            post_id=str(d["post_id"]), author_id=str(d.get("author_id", "")),
            title=d.get("title", ""), content=d.get("content", ""),
            created_at=datetime.fromisoformat(d["created_at"]),
            likes=int(d.get("likes", 0)), collects=int(d.get("collects", 0)),
            hashtags=tuple(d.get("hashtags", ())), geotags=tuple(d.get("geotags", ())),
        )


_DURATION_RE = re.compile(r"^\s*(\d+)\s*(months?|days?|weeks?)\s*$", re.IGNORECASE)


def parse_duration(text: str) -> relativedelta:
    """``"2 months"`` / ``"60 days"`` / ``"8 weeks"`` -> relativedelta."""
    m = _DURATION_RE.match(str(text))
    if not m:
        raise ValueError(f"cannot parse duration {text!r}")
    n, unit = int(m.group(1)), m.group(2).lower()
    if unit.startswith("month"):
        return relativedelta(months=n)
    if unit.startswith("week"):
        return relativedelta(weeks=n)
    return relativedelta(days=n)


@dataclass(frozen=True)
class SelectionConfig:
    top_g: int = 100
    temporal_threshold: relativedelta = field(default_factory=lambda: relativedelta(months=2))

    def __post_init__(self):
        if self.top_g < 1:
            raise ValueError("top_g must be >= 1")
        if isinstance(self.temporal_threshold, str):
            object.__setattr__(self, "temporal_threshold", parse_duration(self.temporal_threshold))
        elif isinstance(self.temporal_threshold, timedelta):
            object.__setattr__(self, "temporal_threshold",
                               relativedelta(days=self.temporal_threshold.days,
                                             seconds=self.temporal_threshold.seconds))
        elif not isinstance(self.temporal_threshold, relativedelta):
            raise TypeError("temporal_threshold must be a duration string such as '2 months'")


@dataclass(frozen=True)
class PopularityMetrics:
    event_id: str
    overall: float
    promotional: float
    wom_per_session: tuple[float, ...]
    wom_raw: tuple[float, ...]

    def __post_init__(self):
        if len(self.wom_raw) != len(self.wom_per_session) - 1:
            raise ValueError("wom_raw must have one entry fewer than wom_per_session")


def engagement(post: Post) -> int:
    return post.likes + post.collects


def select_top_posts(posts: Iterable[Post], cfg: SelectionConfig = SelectionConfig()) -> list[Post]:
    """The ``top_g`` most-liked posts; ties by collects desc, created_at asc, post_id asc."""
    ranked = sorted(posts, key=lambda p: (-p.likes, -p.collects, p.created_at, p.post_id))
    return ranked[:cfg.top_g]


def _visible(posts: Iterable[Post], cutoff: datetime | None) -> list[Post]:
    if cutoff is None:
        return list(posts)
    return [p for p in posts if p.created_at < cutoff]


def split_pre_post(posts: Iterable[Post], sessions: Sequence[EventSession],
                   cfg: SelectionConfig = SelectionConfig(), cutoff: datetime | None = None):
    """Bucket posts into the promotional window and the inter-session windows.

    Returns ``(promotional, experience)`` where ``experience`` maps the
    1-based window index ``k`` (between session k and k+1) to its posts.
    Posts in no window are dropped.
    """
    if not sessions:
        raise ValueError("sessions must be non-empty")
    first = sessions[0].start
    promo_from = first - cfg.temporal_threshold
    windows = [(sessions[k].end, sessions[k + 1].start) for k in range(len(sessions) - 1)]
    promotional: list[Post] = []
    experience: dict[int, list[Post]] = {k: [] for k in range(1, len(sessions))}
    for post in _visible(posts, cutoff):
        t = post.created_at
        if promo_from <= t < first:
            promotional.append(post)
            continue
        for k, (lo, hi) in enumerate(windows, start=1):
            if lo <= t < hi:
                experience[k].append(post)
                break
    return promotional, experience


def wom_popularity_exact(wom: Sequence, n_sessions: int) -> list[Fraction]:
    """Per-session word-of-mouth popularity in exact rational arithmetic."""
    if n_sessions < 1:
        raise ValueError("an event has at least one session")
    if len(wom) != n_sessions - 1:
        raise ValueError(f"expected {n_sessions - 1} window totals, got {len(wom)}")
    out = [Fraction(0)]
    running = Fraction(0)
    for n in range(2, n_sessions + 1):
        k = n - 1
        running += Fraction(wom[k - 1]) / (n_sessions - k)
        out.append(running)
    return out


def wom_popularity(wom: Sequence[float], n_sessions: int) -> list[float]:
    """Float view of :func:`wom_popularity_exact` (each value correctly rounded)."""
    return [float(v) for v in wom_popularity_exact(wom, n_sessions)]


def overall_popularity(event: Event, posts: Iterable[Post], cfg: SelectionConfig = SelectionConfig(),
                       cutoff: datetime | None = None) -> int:
    lo = event.sessions[0].start - cfg.temporal_threshold
    hi = event.sessions[-1].end + cfg.temporal_threshold
    return sum(engagement(p) for p in _visible(posts, cutoff) if lo <= p.created_at < hi)


def promotional_popularity(event: Event, posts: Iterable[Post], cfg: SelectionConfig = SelectionConfig(),
                           cutoff: datetime | None = None) -> int:
    promotional, _ = split_pre_post(posts, event.sessions, cfg, cutoff)
    return sum(engagement(p) for p in promotional)


def compute_metrics(event: Event, related_posts: Iterable[Post], cfg: SelectionConfig = SelectionConfig(),
                    cutoff: datetime | None = None) -> PopularityMetrics:
    """All popularity measures of one event from its relevance-filtered posts.

    ``cutoff`` hides posts created at or after it, for leak-free evaluation.
    """
    posts = _visible(related_posts, cutoff)
    promotional, experience = split_pre_post(posts, event.sessions, cfg)
    wom_raw = [sum(engagement(p) for p in experience[k]) for k in sorted(experience)]
    return PopularityMetrics(
        event_id=event.event_id,
        overall=float(overall_popularity(event, posts, cfg)),
        promotional=float(sum(engagement(p) for p in promotional)),
        wom_per_session=tuple(wom_popularity(wom_raw, event.n_sessions)),
        wom_raw=tuple(float(w) for w in wom_raw),
    )


def daily_type_aggregate(events: Iterable[Event], metrics: Mapping[str, PopularityMetrics], day: date,
                         event_type: str, kind: str) -> float:
    """Sum a metric over events of ``event_type`` that have a session on ``day``.

    ``count``, ``overall`` and ``promotional`` count each event once per day;
    ``wom`` adds the word-of-mouth popularity of every session held that day.
    Fireworks have no word-of-mouth feature and contribute nothing to ``wom``.
    """
    if kind not in POPULARITY_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if kind == "wom" and event_type == "fireworks":
        return 0.0
    total = 0.0
    for ev in events:
        if ev.event_type != event_type:
            continue
        today = [k for k, s in enumerate(ev.sessions) if s.day == day]
        if not today:
            continue
        if kind == "count":
            total += 1
        elif kind == "overall":
            total += metrics[ev.event_id].overall
        elif kind == "promotional":
            total += metrics[ev.event_id].promotional
        else:
            womp = metrics[ev.event_id].wom_per_session
            total += sum(womp[k] for k in today)
    return total


EARLY_DAYS = 4


def exhibition_wom_split(event: Event, womp: Sequence[float], early_days: int = EARLY_DAYS):
    """Split an exhibition's word-of-mouth popularity into its first four days and the rest."""
    if event.event_type != "exhibition":
        raise TypeMismatch(f"{event.event_id} is a {event.event_type}, not an exhibition")
    if len(womp) != event.n_sessions:
        raise ValueError("one word-of-mouth value per session expected")
    first_day = event.sessions[0].day
    early = late = 0.0
    for s, v in zip(event.sessions, womp):
        if (s.day - first_day).days < early_days:
            early += v
        else:
            late += v
    return early, late


def session_is_early(event: Event, k: int, early_days: int = EARLY_DAYS) -> bool:
    return (event.sessions[k].day - event.sessions[0].day).days < early_days


def read_posts(path) -> list[Post]:
    with open(path, encoding="utf-8") as fh:
        return [Post.from_dict(json.loads(line)) for line in fh if line.strip()]


def posts_to_jsonl(posts: Iterable[Post]) -> str:
    return "".join(json.dumps(p.to_dict(), ensure_ascii=False) + "\n" for p in posts)


def read_relevance(path) -> list[tuple[str, str, int | None]]:
    """Rows of ``(event_id, post_id, related)``; ``related`` is None when the column is absent."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for rec in csv.DictReader(fh):
            rel = rec.get("related")
            rows.append((rec["event_id"], rec["post_id"], int(rel) if rel not in (None, "") else None))
        return rows


def related_posts_by_event(events: Iterable[Event], posts: Iterable[Post], relevance,
                           cfg: SelectionConfig = SelectionConfig()) -> dict[str, list[Post]]:
    """Crawl-order reconstruction: top-g candidates per event, then the related ones."""
    by_id = {p.post_id: p for p in posts}
    candidates: dict[str, list[Post]] = {}
    related: dict[str, set[str]] = {}
    for event_id, post_id, rel in relevance:
        if post_id not in by_id:
            continue
        candidates.setdefault(event_id, []).append(by_id[post_id])
        if rel:
            related.setdefault(event_id, set()).add(post_id)
    out = {}
    for ev in events:
        top = select_top_posts(candidates.get(ev.event_id, []), cfg)
        keep = related.get(ev.event_id, set())
        out[ev.event_id] = [p for p in top if p.post_id in keep]
    return out


def popularity_rows(events: Iterable[Event], metrics: Mapping[str, PopularityMetrics]) -> list[dict]:
    rows = []
    for ev in events:
        m = metrics[ev.event_id]
        for s, w in zip(ev.sessions, m.wom_per_session):
            rows.append({"event_id": ev.event_id, "sub_id": s.sub_id, "overall": m.overall,
                         "promotional": m.promotional, "womp": w})
    return rows


def read_popularity(path) -> dict[str, PopularityMetrics]:
    """Rebuild metrics from ``popularity.csv`` (``wom_raw`` is not stored and comes back empty-derived)."""
    per_event: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            per_event.setdefault(rec["event_id"], []).append(
                (int(rec["sub_id"]), float(rec["overall"]), float(rec["promotional"]), float(rec["womp"])))
    out = {}
    for eid, rows in per_event.items():
        rows.sort()
        womp = tuple(r[3] for r in rows)
        # inverse of the spreading: wom[k] = (womp[k+1] - womp[k]) * (N - k)
        n = len(rows)
        wom_raw = tuple((womp[k] - womp[k - 1]) * (n - k) for k in range(1, n))
        out[eid] = PopularityMetrics(eid, rows[0][1], rows[0][2], womp, wom_raw)
    return out
